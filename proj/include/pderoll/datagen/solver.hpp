#pragma once

// Pseudospectral solver for the 2D vorticity equation on the unit torus
//
//   ω_t + u·∇ω = ν∇²ω + f,   ∇²ψ = -ω,   u = (∂ψ/∂y, -∂ψ/∂x).
//
// Axis 0 of a grid is x, axis 1 is y; point (i, j) sits at (i/N, j/N).
// Diffusion is Crank–Nicolson; advection and forcing use Heun's method.
// The advection product is dealiased with the 2/3 rule and its zero mode
// is dropped, since ∫u·∇ω = ∫∇·(uω) = 0 for incompressible u.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pderoll/datagen/grf.hpp"
#include "pderoll/numerics/fft.hpp"
#include "pderoll/numerics/tensor.hpp"

namespace pderoll::datagen {

enum class Forcing { none, fixed_sinusoidal };

inline std::string to_string(Forcing f) { return f == Forcing::none ? "none" : "fixed-sinusoidal"; }

inline Forcing parse_forcing(const std::string& s) {
  if (s == "none") return Forcing::none;
  if (s == "fixed-sinusoidal") return Forcing::fixed_sinusoidal;
  throw std::invalid_argument("unknown forcing '" + s + "' (expected none | fixed-sinusoidal)");
}

struct SolverConfig {
  std::size_t grid_size = 32;
  double viscosity = 1e-3;
  double dt = 1e-3;
  double record_interval = 0.04;
  std::size_t n_frames = 25;
  Forcing forcing = Forcing::fixed_sinusoidal;
  std::uint64_t rng_seed = 0;

  /// Solver steps between recorded frames.
  std::size_t steps_per_frame() const {
    return static_cast<std::size_t>(std::llround(record_interval / dt));
  }

  void validate() const {
    if (grid_size < 8 || grid_size % 2 != 0) {
      throw std::invalid_argument("SolverConfig: grid_size must be even and >= 8, got " +
                                  std::to_string(grid_size));
    }
    if (!(viscosity > 0)) throw std::invalid_argument("SolverConfig: viscosity must be positive");
    if (!(dt > 0) || !(record_interval > 0)) {
      throw std::invalid_argument("SolverConfig: dt and record_interval must be positive");
    }
    if (dt > record_interval) throw std::invalid_argument("SolverConfig: dt exceeds record_interval");
    const double ratio = record_interval / dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
      throw std::invalid_argument("SolverConfig: record_interval must be an integer multiple of dt");
    }
    if (n_frames == 0) throw std::invalid_argument("SolverConfig: n_frames must be positive");
  }
};

/// Raised when the state stops being finite (in practice a CFL violation).
class SolverDiverged : public std::runtime_error {
 public:
  explicit SolverDiverged(std::size_t step)
      : std::runtime_error("vorticity solver diverged at step " + std::to_string(step) +
                           "; reduce dt"),
        step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// f(x, y) = 0.1 (sin 2π(x+y) + cos 2π(x+y)) sampled on the grid.
inline Tensor<double> sinusoidal_forcing(std::size_t n) {
  Tensor<double> f({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double phase = 2.0 * std::numbers::pi * (static_cast<double>(i + j) / static_cast<double>(n));
      f[i * n + j] = 0.1 * (std::sin(phase) + std::cos(phase));
    }
  }
  return f;
}

class VorticitySolver {
 public:
  using Complex = std::complex<double>;

  explicit VorticitySolver(const SolverConfig& cfg) : cfg_(cfg), n_(cfg.grid_size) {
    cfg_.validate();
    const std::size_t total = n_ * n_;
    kx_.resize(total);
    ky_.resize(total);
    lap_.resize(total);
    dealias_.resize(total);
    const double two_pi = 2.0 * std::numbers::pi;
    const double cutoff = static_cast<double>(n_) / 3.0;
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        const std::size_t idx = i * n_ + j;
        const double ki = wavenumber(i, n_), kj = wavenumber(j, n_);
        // the Nyquist row/column has no well-defined sign; its derivative is zero
        kx_[idx] = i == n_ / 2 ? 0.0 : two_pi * ki;
        ky_[idx] = j == n_ / 2 ? 0.0 : two_pi * kj;
        lap_[idx] = two_pi * two_pi * (ki * ki + kj * kj);
        dealias_[idx] = std::abs(ki) <= cutoff && std::abs(kj) <= cutoff;
      }
    }
    forcing_hat_.assign(total, Complex{});
    if (cfg_.forcing == Forcing::fixed_sinusoidal) {
      forcing_hat_ = to_spectral(sinusoidal_forcing(n_).data);
      forcing_hat_[0] = Complex{};  // zero-mean by construction; drop round-off
    }
  }

  const SolverConfig& config() const { return cfg_; }
  std::size_t grid_size() const { return n_; }

  std::vector<Complex> to_spectral(std::span<const double> field) const {
    std::vector<Complex> z(field.begin(), field.end());
    return fft::forward2d<double>(z, 1, n_, n_);
  }

  std::vector<double> to_physical(std::span<const Complex> spec) const {
    auto z = fft::backward2d<double>(spec, 1, n_, n_);
    std::vector<double> out(z.size());
    const double inv = 1.0 / static_cast<double>(n_ * n_);
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i].real() * inv;
    return out;
  }

  /// Spectrum of u·∇ω after the 2/3 mask, zero mode removed.
  std::vector<Complex> advection(std::span<const Complex> w_hat) const {
    const std::size_t total = n_ * n_;
    const Complex I{0.0, 1.0};
    // pack two real fields per complex transform: (u + i v) and (ω_x + i ω_y)
    std::vector<Complex> vel(total), grad(total);
    for (std::size_t k = 0; k < total; ++k) {
      const Complex psi = k == 0 ? Complex{} : w_hat[k] / lap_[k];
      const Complex u = I * ky_[k] * psi;
      const Complex v = -I * kx_[k] * psi;
      vel[k] = u + I * v;
      grad[k] = I * kx_[k] * w_hat[k] + I * (I * ky_[k] * w_hat[k]);
    }
    auto vel_x = fft::backward2d<double>(vel, 1, n_, n_);
    auto grad_x = fft::backward2d<double>(grad, 1, n_, n_);
    const double inv = 1.0 / static_cast<double>(total);
    std::vector<Complex> product(total);
    for (std::size_t k = 0; k < total; ++k) {
      const double u = vel_x[k].real() * inv, v = vel_x[k].imag() * inv;
      const double wx = grad_x[k].real() * inv, wy = grad_x[k].imag() * inv;
      product[k] = u * wx + v * wy;
    }
    auto out = fft::forward2d<double>(product, 1, n_, n_);
    for (std::size_t k = 0; k < total; ++k) {
      if (!dealias_[k]) out[k] = Complex{};
    }
    out[0] = Complex{};
    return out;
  }

  /// One CN/Heun step of size dt, in place on the spectrum.
  void step(std::vector<Complex>& w_hat) const {
    const std::size_t total = n_ * n_;
    const double dt = cfg_.dt;
    auto rhs0 = advection(w_hat);
    for (std::size_t k = 0; k < total; ++k) rhs0[k] = forcing_hat_[k] - rhs0[k];

    std::vector<Complex> predictor(total);
    for (std::size_t k = 0; k < total; ++k) {
      const double a = 0.5 * dt * cfg_.viscosity * lap_[k];
      predictor[k] = ((1.0 - a) * w_hat[k] + dt * rhs0[k]) / (1.0 + a);
    }
    auto rhs1 = advection(predictor);
    for (std::size_t k = 0; k < total; ++k) {
      const double a = 0.5 * dt * cfg_.viscosity * lap_[k];
      const Complex rhs = 0.5 * (rhs0[k] + forcing_hat_[k] - rhs1[k]);
      w_hat[k] = ((1.0 - a) * w_hat[k] + dt * rhs) / (1.0 + a);
    }
  }

  /// Advances `steps` solver steps; throws SolverDiverged with the absolute step
  /// index (offset by `first_step`) on a non-finite state.
  void advance(std::vector<Complex>& w_hat, std::size_t steps, std::size_t first_step = 0) const {
    for (std::size_t s = 0; s < steps; ++s) {
      step(w_hat);
      double probe = 0.0;
      for (const auto& v : w_hat) probe += std::abs(v.real()) + std::abs(v.imag());
      if (!std::isfinite(probe)) throw SolverDiverged(first_step + s + 1);
    }
  }

  /// Records n_frames frames starting from omega0 (frame 0 is omega0 itself).
  std::vector<Tensor<double>> simulate(const Tensor<double>& omega0) const {
    std::vector<Tensor<double>> frames;
    frames.reserve(cfg_.n_frames);
    frames.push_back(omega0);
    auto w_hat = to_spectral(omega0.data);
    const std::size_t per_frame = cfg_.steps_per_frame();
    for (std::size_t f = 1; f < cfg_.n_frames; ++f) {
      advance(w_hat, per_frame, (f - 1) * per_frame);
      frames.emplace_back(Shape{n_, n_}, to_physical(w_hat));
    }
    return frames;
  }

  /// ½·mean(|u|²), evaluated spectrally.
  double kinetic_energy(std::span<const double> omega) const {
    auto w_hat = to_spectral(omega);
    double acc = 0.0;
    for (std::size_t k = 1; k < w_hat.size(); ++k) acc += std::norm(w_hat[k]) / lap_[k];
    const double n2 = static_cast<double>(n_ * n_);
    return 0.5 * acc / (n2 * n2);
  }

  const std::vector<bool>& dealias_mask() const { return dealias_; }

 private:
  SolverConfig cfg_;
  std::size_t n_;
  std::vector<double> kx_, ky_, lap_;
  std::vector<bool> dealias_;
  std::vector<Complex> forcing_hat_;
};

/// Advances omega by one solver step of cfg.dt.
inline Tensor<double> vorticity_step(const Tensor<double>& omega, const SolverConfig& cfg) {
  VorticitySolver solver(cfg);
  if (omega.shape != Shape{cfg.grid_size, cfg.grid_size}) {
    throw ShapeError("vorticity_step", omega.shape, Shape{cfg.grid_size, cfg.grid_size});
  }
  auto w_hat = solver.to_spectral(omega.data);
  solver.advance(w_hat, 1);
  return Tensor<double>(omega.shape, solver.to_physical(w_hat));
}

}  // namespace pderoll::datagen
