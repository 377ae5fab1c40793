#pragma once

// Fourier layer: keep a low-frequency block of the spectrum, mix channels with
// complex per-mode weights, and transform back.
//
// The retained block has modes_x rows, kx ∈ {0..⌈mx/2⌉-1} ∪ {-⌊mx/2⌋..-1},
// and modes_y columns, ky ∈ {0..my-1}. Those modes cover one half-plane; the
// other half is the Hermitian mirror. Doubling the ky > 0 columns and taking
// the real part of the inverse transform is exactly the inverse of that
// Hermitian-completed spectrum, so the output is real.

#include <complex>
#include <stdexcept>
#include <string>

#include "pderoll/numerics/ops.hpp"

namespace pderoll::models {

struct ModeBlock {
  std::size_t positive_rows;  // kx = 0 .. positive_rows-1
  std::size_t negative_rows;  // kx = -negative_rows .. -1
  std::size_t cols;

  static ModeBlock from(std::size_t modes_x, std::size_t modes_y) {
    return {(modes_x + 1) / 2, modes_x / 2, modes_y};
  }
};

/// x[Cin, H, W] real, weights[Cin, Cout, modes_x, modes_y] complex -> [Cout, H, W].
template <class T>
Var<T> spectral_conv(const Var<T>& x, const Var<std::complex<T>>& weights) {
  using C = std::complex<T>;
  if (x.shape().size() != 3 || weights.shape().size() != 4 || weights.dim(0) != x.dim(0)) {
    throw ShapeError("spectral_conv", x.shape(), weights.shape());
  }
  const std::size_t h = x.dim(1), w = x.dim(2);
  const std::size_t cout = weights.dim(1);
  const std::size_t mx = weights.dim(2), my = weights.dim(3);
  if (mx > h / 2 || my > w / 2 || mx == 0 || my == 0) {
    throw std::invalid_argument("spectral_conv: modes (" + std::to_string(mx) + ", " + std::to_string(my) +
                                ") out of bounds for a " + std::to_string(h) + "x" + std::to_string(w) +
                                " grid");
  }
  const auto block = ModeBlock::from(mx, my);

  auto spec = ops::fft2(ops::to_complex(x));
  auto rows = ops::concat<C>({ops::slice(spec, 1, 0, block.positive_rows),
                              ops::slice(spec, 1, h - block.negative_rows, block.negative_rows)},
                             1);
  auto kept = ops::slice(rows, 2, 0, my);
  auto mixed = ops::mode_contract(kept, weights);

  Tensor<C> column_weight({cout, mx, my}, C(2));
  for (std::size_t i = 0; i < cout * mx; ++i) column_weight[i * my] = C(1);
  mixed = ops::mul(mixed, Var<C>::constant(std::move(column_weight)));

  auto wide = ops::pad(mixed, 2, 0, w - my);
  auto full = ops::concat<C>(
      {ops::pad(ops::slice(wide, 1, 0, block.positive_rows), 1, 0, h - mx),
       ops::slice(wide, 1, block.positive_rows, block.negative_rows)},
      1);
  return ops::real_part(ops::ifft2(full));
}

}  // namespace pderoll::models
