#pragma once

// Gaussian random fields on the periodic unit square with spectrum
// P(k) ∝ (|2πk|² + τ²)^(-α), τ = 1/length_scale.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "pderoll/numerics/fft.hpp"
#include "pderoll/numerics/random.hpp"
#include "pderoll/numerics/tensor.hpp"

namespace pderoll::datagen {

struct GrfConfig {
  double spectral_exponent = 2.5;
  double length_scale = 1.0 / 7.0;
};

/// Signed integer wavenumber of FFT index i on an n-point axis.
inline double wavenumber(std::size_t i, std::size_t n) {
  return i <= n / 2 ? static_cast<double>(i) : static_cast<double>(i) - static_cast<double>(n);
}

/// Target power of mode (kx, ky) up to a constant factor.
inline double grf_power(double kx, double ky, const GrfConfig& cfg) {
  const double tau = 1.0 / cfg.length_scale;
  const double k2 = 4.0 * std::numbers::pi * std::numbers::pi * (kx * kx + ky * ky);
  return std::pow(k2 + tau * tau, -cfg.spectral_exponent);
}

/// Samples a zero-mean real field of shape [n, n].
///
/// White noise is transformed, so the spectrum is Hermitian by construction;
/// it is then coloured by sqrt(P), the zero mode removed, and transformed back.
/// Amplitude follows σ = τ^(α-1), the usual normalization for this prior.
inline Tensor<double> sample_grf(std::size_t grid_size, std::uint64_t seed, const GrfConfig& cfg) {
  if (grid_size == 0 || grid_size % 2 != 0) {
    throw std::invalid_argument("sample_grf: grid_size must be even, got " + std::to_string(grid_size));
  }
  const std::size_t n = grid_size;
  RandomStream rng(seed);
  std::vector<std::complex<double>> noise(n * n);
  for (auto& v : noise) v = rng.normal();
  auto spec = fft::forward2d<double>(noise, 1, n, n);

  const double tau = 1.0 / cfg.length_scale;
  const double sigma = std::pow(tau, cfg.spectral_exponent - 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double amp = 2.0 * sigma * std::sqrt(grf_power(wavenumber(i, n), wavenumber(j, n), cfg));
      spec[i * n + j] *= amp;
    }
  }
  spec[0] = 0.0;

  auto field = fft::backward2d<double>(spec, 1, n, n);
  Tensor<double> out({n, n});
  const double inv = 1.0 / static_cast<double>(n * n);
  // noise has E|ŝ|² = n², so dividing by n (not n²) leaves unit-variance modes
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = field[i].real() * inv * static_cast<double>(n);
  return out;
}

}  // namespace pderoll::datagen
