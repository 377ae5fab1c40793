#pragma once

// Differentiable primitives. Spatial operators take channel-first grids
// [C, H, W] with no batch axis; a batch is a set of independent graphs.

#include <Eigen/Core>

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pderoll/numerics/autodiff.hpp"
#include "pderoll/numerics/fft.hpp"

namespace pderoll::ops {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <class A, class B>
void require_same_shape(std::string_view op, const Var<A>& a, const Var<B>& b) {
  if (a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
}

inline void require_rank(std::string_view op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw ShapeError(op, "expected rank " + std::to_string(rank) + ", got " + to_string(s));
  }
}

// Splits a shape around `axis` into (outer, extent, inner) element counts.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

inline AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

inline std::size_t wrap(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

enum class Padding { circular, zero };

// Patch geometry shared by convolution and its transpose.
struct Patches {
  std::size_t channels, src_h, src_w;  // grid being sampled
  std::size_t kernel, stride;
  std::ptrdiff_t offset;               // top-left displacement of a patch
  std::size_t out_h, out_w;            // number of patch positions
  Padding padding;

  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t cols() const { return out_h * out_w; }
};

// col[(c,a,b), (i,j)] = src[c, s*i + a - offset, s*j + b - offset]
template <class T>
void im2col(const Patches& p, const T* src, T* col) {
  for (std::size_t c = 0; c < p.channels; ++c) {
    const T* plane = src + c * p.src_h * p.src_w;
    for (std::size_t a = 0; a < p.kernel; ++a) {
      for (std::size_t b = 0; b < p.kernel; ++b) {
        T* row = col + ((c * p.kernel + a) * p.kernel + b) * p.cols();
        for (std::size_t i = 0; i < p.out_h; ++i) {
          const auto y = static_cast<std::ptrdiff_t>(p.stride * i + a) - p.offset;
          const bool y_in = y >= 0 && y < static_cast<std::ptrdiff_t>(p.src_h);
          if (p.padding == Padding::zero && !y_in) {
            for (std::size_t j = 0; j < p.out_w; ++j) row[i * p.out_w + j] = T{0};
            continue;
          }
          const T* src_row = plane + wrap(y, p.src_h) * p.src_w;
          for (std::size_t j = 0; j < p.out_w; ++j) {
            const auto x = static_cast<std::ptrdiff_t>(p.stride * j + b) - p.offset;
            if (x >= 0 && x < static_cast<std::ptrdiff_t>(p.src_w)) {
              row[i * p.out_w + j] = src_row[x];
            } else if (p.padding == Padding::circular) {
              row[i * p.out_w + j] = src_row[wrap(x, p.src_w)];
            } else {
              row[i * p.out_w + j] = T{0};
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: dst[c, ...] += col[(c,a,b), (i,j)]
template <class T>
void col2im(const Patches& p, const T* col, T* dst) {
  for (std::size_t c = 0; c < p.channels; ++c) {
    T* plane = dst + c * p.src_h * p.src_w;
    for (std::size_t a = 0; a < p.kernel; ++a) {
      for (std::size_t b = 0; b < p.kernel; ++b) {
        const T* row = col + ((c * p.kernel + a) * p.kernel + b) * p.cols();
        for (std::size_t i = 0; i < p.out_h; ++i) {
          const auto y = static_cast<std::ptrdiff_t>(p.stride * i + a) - p.offset;
          const bool y_in = y >= 0 && y < static_cast<std::ptrdiff_t>(p.src_h);
          if (p.padding == Padding::zero && !y_in) continue;
          T* dst_row = plane + wrap(y, p.src_h) * p.src_w;
          for (std::size_t j = 0; j < p.out_w; ++j) {
            const auto x = static_cast<std::ptrdiff_t>(p.stride * j + b) - p.offset;
            if (x >= 0 && x < static_cast<std::ptrdiff_t>(p.src_w)) {
              dst_row[x] += row[i * p.out_w + j];
            } else if (p.padding == Padding::circular) {
              dst_row[wrap(x, p.src_w)] += row[i * p.out_w + j];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

using detail::Padding;

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <class E>
Var<E> add(const Var<E>& a, const Var<E>& b) {
  detail::require_same_shape("add", a, b);
  Tensor<E> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  auto r = make_result("add", std::move(out), a, b);
  if (r.requires_grad()) {
    r.node()->backward = [an = a.node(), bn = b.node(), rn = r.node()] {
      pderoll::detail::accumulate<E>(an, rn->grad);
      pderoll::detail::accumulate<E>(bn, rn->grad);
    };
  }
  return r;
}

template <class E>
Var<E> sub(const Var<E>& a, const Var<E>& b) {
  detail::require_same_shape("sub", a, b);
  Tensor<E> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  auto r = make_result("sub", std::move(out), a, b);
  if (r.requires_grad()) {
    r.node()->backward = [an = a.node(), bn = b.node(), rn = r.node()] {
      pderoll::detail::accumulate<E>(an, rn->grad);
      if (bn->requires_grad) {
        auto g = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= rn->grad[i];
      }
    };
  }
  return r;
}

/// Elementwise product; complex operands use the holomorphic rule.
template <class E>
Var<E> mul(const Var<E>& a, const Var<E>& b) {
  detail::require_same_shape("mul", a, b);
  Tensor<E> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  auto r = make_result("mul", std::move(out), a, b);
  if (r.requires_grad()) {
    r.node()->backward = [an = a.node(), bn = b.node(), rn = r.node()] {
      const auto& g = rn->grad;
      if (an->requires_grad) {
        auto ga = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * conj_if(bn->value[i]);
      }
      if (bn->requires_grad) {
        auto gb = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * conj_if(an->value[i]);
      }
    };
  }
  return r;
}

template <class E>
Var<E> scale(const Var<E>& x, E s) {
  Tensor<E> out = x.value();
  for (auto& v : out.data) v *= s;
  auto r = make_result("scale", std::move(out), x);
  if (r.requires_grad()) {
    r.node()->backward = [xn = x.node(), rn = r.node(), s] {
      auto g = xn->grad_buffer();
      const E cs = conj_if(s);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += rn->grad[i] * cs;
    };
  }
  return r;
}

template <class T>
Var<T> gelu(const Var<T>& x) {
  static_assert(!is_complex_v<T>);
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  Tensor<T> out = x.value();
  for (auto& v : out.data) v = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  auto r = make_result("gelu", std::move(out), x);
  if (r.requires_grad()) {
    r.node()->backward = [xn = x.node(), rn = r.node()] {
      constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
      auto g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T v = xn->value[i];
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        g[i] += rn->grad[i] * (cdf + v * pdf);
      }
    };
  }
  return r;
}

template <class T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data) v = v > T(0) ? v : T(0);
  auto r = make_result("relu", std::move(out), x);
  if (r.requires_grad()) {
    r.node()->backward = [xn = x.node(), rn = r.node()] {
      auto g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xn->value[i] > T(0)) g[i] += rn->grad[i];
      }
    };
  }
  return r;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class E>
Var<E> sum(const Var<E>& x) {
  E acc{};
  for (const E& v : x.value().data) acc += v;
  auto r = make_result("sum", Tensor<E>({1}, acc), x);
  if (r.requires_grad()) {
    r.node()->backward = [xn = x.node(), rn = r.node()] {
      auto g = xn->grad_buffer();
      for (auto& v : g) v += rn->grad[0];
    };
  }
  return r;
}

template <class E>
Var<E> mean(const Var<E>& x) {
  E acc{};
  for (const E& v : x.value().data) acc += v;
  const auto n = static_cast<real_of_t<E>>(x.size());
  auto r = make_result("mean", Tensor<E>({1}, acc / n), x);
  if (r.requires_grad()) {
    r.node()->backward = [xn = x.node(), rn = r.node(), n] {
      auto g = xn->grad_buffer();
      const E share = rn->grad[0] / n;
      for (auto& v : g) v += share;
    };
  }
  return r;
}

// ---------------------------------------------------------------------------
// Channel contraction and convolution (real)
// ---------------------------------------------------------------------------

/// Adds b[c] to every element of channel c of x[C, ...].
template <class T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& b) {
  if (x.shape().empty() || b.shape() != Shape{x.dim(0)}) {
    throw ShapeError("add_channel_bias", x.shape(), b.shape());
  }
  const std::size_t channels = x.dim(0);
  const std::size_t inner = x.size() / channels;
  Tensor<T> out = x.value();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < inner; ++i) out[c * inner + i] += b.value()[c];
  }
  auto r = make_result("add_channel_bias", std::move(out), x, b);
  if (r.requires_grad()) {
    r.node()->backward = [xn = x.node(), bn = b.node(), rn = r.node(), channels, inner] {
      pderoll::detail::accumulate<T>(xn, rn->grad);
      if (bn->requires_grad) {
        auto gb = bn->grad_buffer();
        for (std::size_t c = 0; c < channels; ++c) {
          T acc{0};
          for (std::size_t i = 0; i < inner; ++i) acc += rn->grad[c * inner + i];
          gb[c] += acc;
        }
      }
    };
  }
  return r;
}

/// out[o, ...] = sum_i w[o, i] * x[i, ...]; a 1×1 convolution.
template <class T>
Var<T> channel_mix(const Var<T>& x, const Var<T>& w) {
  if (x.shape().empty() || w.shape().size() != 2 || w.dim(1) != x.dim(0)) {
    throw ShapeError("channel_mix", x.shape(), w.shape());
  }
  const std::size_t cin = x.dim(0), cout = w.dim(0);
  const std::size_t inner = x.size() / cin;
  Shape out_shape = x.shape();
  out_shape[0] = cout;
  Tensor<T> out(out_shape);
  detail::MatMap<T>(out.data.data(), cout, inner).noalias() =
      detail::ConstMatMap<T>(w.value().data.data(), cout, cin) *
      detail::ConstMatMap<T>(x.value().data.data(), cin, inner);
  auto r = make_result("channel_mix", std::move(out), x, w);
  if (r.requires_grad()) {
    r.node()->backward = [xn = x.node(), wn = w.node(), rn = r.node(), cin, cout, inner] {
      detail::ConstMatMap<T> g(rn->grad.data(), cout, inner);
      if (xn->requires_grad) {
        detail::MatMap<T>(xn->grad_buffer().data(), cin, inner).noalias() +=
            detail::ConstMatMap<T>(wn->value.data.data(), cout, cin).transpose() * g;
      }
      if (wn->requires_grad) {
        detail::MatMap<T>(wn->grad_buffer().data(), cout, cin).noalias() +=
            g * detail::ConstMatMap<T>(xn->value.data.data(), cin, inner).transpose();
      }
    };
  }
  return r;
}

/// 2D cross-correlation of x[Cin, H, W] with w[Cout, Cin, k, k] (k odd) at
/// stride 1 or 2, padded by (k-1)/2 on each side. Output [Cout, H/s, W/s].
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, std::size_t stride = 1,
              Padding padding = Padding::circular) {
  detail::require_rank("conv2d", x.shape(), 3);
  detail::require_rank("conv2d", w.shape(), 4);
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin || w.dim(3) != k || k % 2 == 0) throw ShapeError("conv2d", x.shape(), w.shape());
  if (stride == 0 || h % stride != 0 || wd % stride != 0) {
    throw ShapeError("conv2d", "spatial extent " + to_string(x.shape()) +
                                   " not divisible by stride " + std::to_string(stride));
  }
  const detail::Patches p{cin, h, wd, k, stride, static_cast<std::ptrdiff_t>((k - 1) / 2),
                          h / stride, wd / stride, padding};
  std::vector<T> col(p.rows() * p.cols());
  detail::im2col(p, x.value().data.data(), col.data());
  Tensor<T> out({cout, p.out_h, p.out_w});
  detail::MatMap<T>(out.data.data(), cout, p.cols()).noalias() =
      detail::ConstMatMap<T>(w.value().data.data(), cout, p.rows()) *
      detail::ConstMatMap<T>(col.data(), p.rows(), p.cols());
  auto r = make_result("conv2d", std::move(out), x, w);
  if (r.requires_grad()) {
    r.node()->backward = [xn = x.node(), wn = w.node(), rn = r.node(), p, cout] {
      detail::ConstMatMap<T> g(rn->grad.data(), cout, p.cols());
      if (wn->requires_grad) {
        std::vector<T> cols(p.rows() * p.cols());
        detail::im2col(p, xn->value.data.data(), cols.data());
        detail::MatMap<T>(wn->grad_buffer().data(), cout, p.rows()).noalias() +=
            g * detail::ConstMatMap<T>(cols.data(), p.rows(), p.cols()).transpose();
      }
      if (xn->requires_grad) {
        std::vector<T> gcol(p.rows() * p.cols());
        detail::MatMap<T>(gcol.data(), p.rows(), p.cols()).noalias() =
            detail::ConstMatMap<T>(wn->value.data.data(), cout, p.rows()).transpose() * g;
        detail::col2im(p, gcol.data(), xn->grad_buffer().data());
      }
    };
  }
  return r;
}

/// Transposed convolution of x[Cin, H, W] with w[Cin, Cout, k, k], k >= stride,
/// on the periodic output grid [Cout, s*H, s*W]. With k == s this is an exact
/// non-overlapping upsampling.
template <class T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, std::size_t stride = 2) {
  detail::require_rank("conv_transpose2d", x.shape(), 3);
  detail::require_rank("conv_transpose2d", w.shape(), 4);
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t cout = w.dim(1), k = w.dim(2);
  if (w.dim(0) != cin || w.dim(3) != k || k < stride || (k - stride) % 2 != 0 || stride == 0) {
    throw ShapeError("conv_transpose2d", x.shape(), w.shape());
  }
  const detail::Patches p{cout, h * stride, wd * stride, k, stride,
                          static_cast<std::ptrdiff_t>((k - stride) / 2), h, wd, Padding::circular};
  std::vector<T> col(p.rows() * p.cols());
  detail::MatMap<T>(col.data(), p.rows(), p.cols()).noalias() =
      detail::ConstMatMap<T>(w.value().data.data(), cin, p.rows()).transpose() *
      detail::ConstMatMap<T>(x.value().data.data(), cin, p.cols());
  Tensor<T> out({cout, p.src_h, p.src_w});
  detail::col2im(p, col.data(), out.data.data());
  auto r = make_result("conv_transpose2d", std::move(out), x, w);
  if (r.requires_grad()) {
    r.node()->backward = [xn = x.node(), wn = w.node(), rn = r.node(), p, cin] {
      std::vector<T> gcol(p.rows() * p.cols());
      detail::im2col(p, rn->grad.data(), gcol.data());
      detail::ConstMatMap<T> gc(gcol.data(), p.rows(), p.cols());
      if (xn->requires_grad) {
        detail::MatMap<T>(xn->grad_buffer().data(), cin, p.cols()).noalias() +=
            detail::ConstMatMap<T>(wn->value.data.data(), cin, p.rows()) * gc;
      }
      if (wn->requires_grad) {
        detail::MatMap<T>(wn->grad_buffer().data(), cin, p.rows()).noalias() +=
            detail::ConstMatMap<T>(xn->value.data.data(), cin, p.cols()) * gc.transpose();
      }
    };
  }
  return r;
}

/// Group normalization over x[C, H, W] with per-channel affine gamma, beta.
template <class T>
Var<T> group_norm(const Var<T>& x, std::size_t groups, const Var<T>& gamma, const Var<T>& beta,
                  T eps = T(1e-5)) {
  detail::require_rank("group_norm", x.shape(), 3);
  const std::size_t channels = x.dim(0);
  if (groups == 0 || channels % groups != 0) {
    throw ShapeError("group_norm", std::to_string(channels) + " channels not divisible into " +
                                       std::to_string(groups) + " groups");
  }
  if (gamma.shape() != Shape{channels}) throw ShapeError("group_norm", x.shape(), gamma.shape());
  if (beta.shape() != Shape{channels}) throw ShapeError("group_norm", x.shape(), beta.shape());
  const std::size_t plane = x.dim(1) * x.dim(2);
  const std::size_t per_group = channels / groups * plane;

  Tensor<T> normalized(x.shape());
  std::vector<T> inv_std(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    const T* src = x.value().data.data() + g * per_group;
    T mu{0};
    for (std::size_t i = 0; i < per_group; ++i) mu += src[i];
    mu /= static_cast<T>(per_group);
    T var{0};
    for (std::size_t i = 0; i < per_group; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<T>(per_group);
    inv_std[g] = T(1) / std::sqrt(var + eps);
    for (std::size_t i = 0; i < per_group; ++i) {
      normalized[g * per_group + i] = (src[i] - mu) * inv_std[g];
    }
  }
  Tensor<T> out(x.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      out[c * plane + i] = gamma.value()[c] * normalized[c * plane + i] + beta.value()[c];
    }
  }
  auto r = make_result("group_norm", std::move(out), x, gamma, beta);
  if (r.requires_grad()) {
    r.node()->backward = [xn = x.node(), gn = gamma.node(), bn = beta.node(), rn = r.node(),
                          xhat = std::move(normalized), inv_std = std::move(inv_std), channels,
                          plane, groups, per_group] {
      const auto& g = rn->grad;
      if (gn->requires_grad || bn->requires_grad) {
        for (std::size_t c = 0; c < channels; ++c) {
          T sg{0}, sgx{0};
          for (std::size_t i = 0; i < plane; ++i) {
            sg += g[c * plane + i];
            sgx += g[c * plane + i] * xhat[c * plane + i];
          }
          if (gn->requires_grad) gn->grad_buffer()[c] += sgx;
          if (bn->requires_grad) bn->grad_buffer()[c] += sg;
        }
      }
      if (!xn->requires_grad) return;
      auto gx = xn->grad_buffer();
      const std::size_t ch_per_group = channels / groups;
      std::vector<T> dxhat(per_group);
      for (std::size_t grp = 0; grp < groups; ++grp) {
        T mean_d{0}, mean_dx{0};
        for (std::size_t i = 0; i < per_group; ++i) {
          const std::size_t idx = grp * per_group + i;
          const std::size_t c = grp * ch_per_group + i / plane;
          dxhat[i] = g[idx] * gn->value[c];
          mean_d += dxhat[i];
          mean_dx += dxhat[i] * xhat[idx];
        }
        mean_d /= static_cast<T>(per_group);
        mean_dx /= static_cast<T>(per_group);
        for (std::size_t i = 0; i < per_group; ++i) {
          const std::size_t idx = grp * per_group + i;
          gx[idx] += inv_std[grp] * (dxhat[i] - mean_d - xhat[idx] * mean_dx);
        }
      }
    };
  }
  return r;
}

// ---------------------------------------------------------------------------
// Layout: slicing, padding, concatenation
// ---------------------------------------------------------------------------

/// Sub-range [start, start+length) of `axis`.
template <class E>
Var<E> slice(const Var<E>& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.shape().size() || start + length > x.dim(axis)) {
    throw ShapeError("slice", "range [" + std::to_string(start) + ", " +
                                  std::to_string(start + length) + ") on axis " +
                                  std::to_string(axis) + " of " + to_string(x.shape()));
  }
  const auto s = detail::split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  Tensor<E> out(out_shape);
  for (std::size_t o = 0; o < s.outer; ++o) {
    const E* src = x.value().data.data() + (o * s.extent + start) * s.inner;
    std::copy(src, src + length * s.inner, out.data.data() + o * length * s.inner);
  }
  auto r = make_result("slice", std::move(out), x);
  if (r.requires_grad()) {
    r.node()->backward = [xn = x.node(), rn = r.node(), s, start, length] {
      auto g = xn->grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o) {
        E* dst = g.data() + (o * s.extent + start) * s.inner;
        const E* src = rn->grad.data() + o * length * s.inner;
        for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
      }
    };
  }
  return r;
}

/// Zero padding along `axis`.
template <class E>
Var<E> pad(const Var<E>& x, std::size_t axis, std::size_t before, std::size_t after) {
  if (axis >= x.shape().size()) throw ShapeError("pad", "axis out of range for " + to_string(x.shape()));
  const auto s = detail::split_at(x.shape(), axis);
  const std::size_t extent = s.extent + before + after;
  Shape out_shape = x.shape();
  out_shape[axis] = extent;
  Tensor<E> out(out_shape);
  for (std::size_t o = 0; o < s.outer; ++o) {
    const E* src = x.value().data.data() + o * s.extent * s.inner;
    std::copy(src, src + s.extent * s.inner, out.data.data() + (o * extent + before) * s.inner);
  }
  auto r = make_result("pad", std::move(out), x);
  if (r.requires_grad()) {
    r.node()->backward = [xn = x.node(), rn = r.node(), s, extent, before] {
      auto g = xn->grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o) {
        const E* src = rn->grad.data() + (o * extent + before) * s.inner;
        E* dst = g.data() + o * s.extent * s.inner;
        for (std::size_t i = 0; i < s.extent * s.inner; ++i) dst[i] += src[i];
      }
    };
  }
  return r;
}

/// Periodic (wrap-around) padding of the two trailing axes of x[C, H, W].
template <class E>
Var<E> circular_pad(const Var<E>& x, std::size_t width) {
  detail::require_rank("circular_pad", x.shape(), 3);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (width > h || width > w) throw ShapeError("circular_pad", "pad wider than grid " + to_string(x.shape()));
  const std::size_t ho = h + 2 * width, wo = w + 2 * width;
  auto source = [=](std::size_t i, std::size_t n) {
    return detail::wrap(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(width), n);
  };
  Tensor<E> out({c, ho, wo});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        out[(ch * ho + i) * wo + j] = x.value()[(ch * h + source(i, h)) * w + source(j, w)];
      }
    }
  }
  auto r = make_result("circular_pad", std::move(out), x);
  if (r.requires_grad()) {
    r.node()->backward = [xn = x.node(), rn = r.node(), c, h, w, ho, wo, source] {
      auto g = xn->grad_buffer();
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < ho; ++i) {
          for (std::size_t j = 0; j < wo; ++j) {
            g[(ch * h + source(i, h)) * w + source(j, w)] += rn->grad[(ch * ho + i) * wo + j];
          }
        }
      }
    };
  }
  return r;
}

template <class E>
Var<E> concat(const std::vector<Var<E>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat", "no inputs");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw ShapeError("concat", "axis out of range for " + to_string(ref));
  std::size_t extent = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = ref;
    if (a.size() != b.size()) throw ShapeError("concat", ref, p.shape());
    a[axis] = b[axis] = 0;
    if (a != b) throw ShapeError("concat", ref, p.shape());
    extent += p.dim(axis);
  }
  const auto s = detail::split_at(ref, axis);
  Shape out_shape = ref;
  out_shape[axis] = extent;
  Tensor<E> out(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t len = p.dim(axis);
    for (std::size_t o = 0; o < s.outer; ++o) {
      const E* src = p.value().data.data() + o * len * s.inner;
      std::copy(src, src + len * s.inner, out.data.data() + (o * extent + offset) * s.inner);
    }
    offset += len;
  }
  auto r = make_result_n("concat", std::move(out), parts);
  if (r.requires_grad()) {
    std::vector<ad::Node<E>*> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    r.node()->backward = [nodes = std::move(nodes), offsets = std::move(offsets), rn = r.node(), s,
                          extent] {
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        ad::Node<E>* n = nodes[k];
        if (!n->requires_grad) continue;
        const std::size_t len = n->value.size() / (s.outer * s.inner);
        auto g = n->grad_buffer();
        for (std::size_t o = 0; o < s.outer; ++o) {
          const E* src = rn->grad.data() + (o * extent + offsets[k]) * s.inner;
          E* dst = g.data() + o * len * s.inner;
          for (std::size_t i = 0; i < len * s.inner; ++i) dst[i] += src[i];
        }
      }
    };
  }
  return r;
}

// ---------------------------------------------------------------------------
// Complex and spectral
// ---------------------------------------------------------------------------

template <class T>
Var<std::complex<T>> to_complex(const Var<T>& x) {
  Tensor<std::complex<T>> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i];
  auto r = make_result("to_complex", std::move(out), x);
  if (r.requires_grad()) {
    r.node()->backward = [xn = x.node(), rn = r.node()] {
      auto g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += rn->grad[i].real();
    };
  }
  return r;
}

template <class T>
Var<T> real_part(const Var<std::complex<T>>& z) {
  Tensor<T> out(z.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = z.value()[i].real();
  auto r = make_result("real_part", std::move(out), z);
  if (r.requires_grad()) {
    r.node()->backward = [zn = z.node(), rn = r.node()] {
      auto g = zn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += std::complex<T>(rn->grad[i], T(0));
    };
  }
  return r;
}

/// Reinterprets a real tensor [..., 2] as complex [...] (real, imaginary).
template <class T>
Var<std::complex<T>> as_complex(const Var<T>& x) {
  if (x.shape().empty() || x.shape().back() != 2) {
    throw ShapeError("as_complex", "trailing axis must be 2, got " + to_string(x.shape()));
  }
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  Tensor<std::complex<T>> out(out_shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {x.value()[2 * i], x.value()[2 * i + 1]};
  auto r = make_result("as_complex", std::move(out), x);
  if (r.requires_grad()) {
    r.node()->backward = [xn = x.node(), rn = r.node()] {
      auto g = xn->grad_buffer();
      for (std::size_t i = 0; i < rn->grad.size(); ++i) {
        g[2 * i] += rn->grad[i].real();
        g[2 * i + 1] += rn->grad[i].imag();
      }
    };
  }
  return r;
}

/// Unnormalized forward DFT over the two trailing axes.
template <class T>
Var<std::complex<T>> fft2(const Var<std::complex<T>>& x) {
  if (x.shape().size() < 2) throw ShapeError("fft2", "need at least 2 axes, got " + to_string(x.shape()));
  const std::size_t h = x.shape()[x.shape().size() - 2], w = x.shape().back();
  const std::size_t batch = x.size() / (h * w);
  Tensor<std::complex<T>> out(x.shape(), fft::forward2d<T>(x.value().data, batch, h, w));
  auto r = make_result("fft2", std::move(out), x);
  if (r.requires_grad()) {
    r.node()->backward = [xn = x.node(), rn = r.node(), batch, h, w] {
      // adjoint of the unnormalized forward transform
      auto back = fft::backward2d<T>(rn->grad, batch, h, w);
      auto g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += back[i];
    };
  }
  return r;
}

/// Inverse DFT over the two trailing axes, normalized by 1/(H*W).
template <class T>
Var<std::complex<T>> ifft2(const Var<std::complex<T>>& x) {
  if (x.shape().size() < 2) throw ShapeError("ifft2", "need at least 2 axes, got " + to_string(x.shape()));
  const std::size_t h = x.shape()[x.shape().size() - 2], w = x.shape().back();
  const std::size_t batch = x.size() / (h * w);
  const T inv_n = T(1) / static_cast<T>(h * w);
  auto data = fft::backward2d<T>(x.value().data, batch, h, w);
  for (auto& v : data) v *= inv_n;
  auto r = make_result("ifft2", Tensor<std::complex<T>>(x.shape(), std::move(data)), x);
  if (r.requires_grad()) {
    r.node()->backward = [xn = x.node(), rn = r.node(), batch, h, w, inv_n] {
      auto fwd = fft::forward2d<T>(rn->grad, batch, h, w);
      auto g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += fwd[i] * inv_n;
    };
  }
  return r;
}

/// Per-mode complex channel contraction: out[o, m] = sum_i x[i, m] * w[i, o, m],
/// where m ranges over all trailing axes.
template <class T>
Var<std::complex<T>> mode_contract(const Var<std::complex<T>>& x, const Var<std::complex<T>>& w) {
  using C = std::complex<T>;
  if (x.shape().empty() || w.shape().size() != x.shape().size() + 1 || w.dim(0) != x.dim(0) ||
      !std::equal(x.shape().begin() + 1, x.shape().end(), w.shape().begin() + 2)) {
    throw ShapeError("mode_contract", x.shape(), w.shape());
  }
  const std::size_t cin = x.dim(0), cout = w.dim(1);
  const std::size_t modes = x.size() / cin;
  Shape out_shape = x.shape();
  out_shape[0] = cout;
  Tensor<C> out(out_shape);
  const C* xv = x.value().data.data();
  const C* wv = w.value().data.data();
  for (std::size_t i = 0; i < cin; ++i) {
    for (std::size_t o = 0; o < cout; ++o) {
      const C* wrow = wv + (i * cout + o) * modes;
      C* orow = out.data.data() + o * modes;
      for (std::size_t m = 0; m < modes; ++m) orow[m] += xv[i * modes + m] * wrow[m];
    }
  }
  auto r = make_result("mode_contract", std::move(out), x, w);
  if (r.requires_grad()) {
    r.node()->backward = [xn = x.node(), wn = w.node(), rn = r.node(), cin, cout, modes] {
      const C* g = rn->grad.data();
      if (xn->requires_grad) {
        auto gx = xn->grad_buffer();
        for (std::size_t i = 0; i < cin; ++i) {
          for (std::size_t o = 0; o < cout; ++o) {
            const C* wrow = wn->value.data.data() + (i * cout + o) * modes;
            for (std::size_t m = 0; m < modes; ++m) gx[i * modes + m] += g[o * modes + m] * std::conj(wrow[m]);
          }
        }
      }
      if (wn->requires_grad) {
        auto gw = wn->grad_buffer();
        for (std::size_t i = 0; i < cin; ++i) {
          for (std::size_t o = 0; o < cout; ++o) {
            C* grow = gw.data() + (i * cout + o) * modes;
            for (std::size_t m = 0; m < modes; ++m) {
              grow[m] += g[o * modes + m] * std::conj(xn->value[i * modes + m]);
            }
          }
        }
      }
    };
  }
  return r;
}

}  // namespace pderoll::ops
