#pragma once

// Central finite-difference verification of reverse-mode gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "pderoll/numerics/autodiff.hpp"
#include "pderoll/numerics/parameter_store.hpp"

namespace pderoll {

inline double relative_gradient_error(double analytic, double numeric, double floor = 1e-12) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
}

/// Worst per-coordinate error, each normalized by max(|g_i| + |fd_i|, max_j |fd_j|).
/// Central differences carry an absolute round-off of about eps·|f|/step, so
/// a purely per-coordinate ratio is meaningless for near-zero entries.
inline double worst_gradient_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                                   double floor_fraction = 1.0) {
  double scale = 0.0;
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  const double floor = std::max(floor_fraction * scale, 1e-12);
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, relative_gradient_error(analytic[i], numeric[i], floor));
  }
  return worst;
}

/// Central-difference check of the reverse-mode gradient of scalar f at `point`.
inline double grad_check(const std::function<Var<double>(const Var<double>&)>& f,
                         const Tensor<double>& point, double step) {
  auto x = Var<double>::leaf(point);
  backward(f(x));
  std::vector<double> analytic(point.size(), 0.0);
  if (!x.grad().empty()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());

  std::vector<double> numeric(point.size());
  Tensor<double> probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const double up = f(Var<double>::constant(probe)).value()[0];
    probe[i] = point[i] - step;
    const double down = f(Var<double>::constant(probe)).value()[0];
    probe[i] = point[i];
    numeric[i] = (up - down) / (2.0 * step);
  }
  return worst_gradient_error(analytic, numeric);
}

/// Same check over every coordinate of every parameter in `params`. With
/// `max_coordinates` > 0, a seeded random subset of that size is probed instead.
inline double grad_check(const std::function<Var<double>(const ParameterStore<double>&)>& f,
                         const ParameterStore<double>& params, double step,
                         std::size_t max_coordinates = 0, std::uint64_t seed = 0) {
  ParameterStore<double> live = params.clone();
  backward(f(live));

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t e = 0; e < params.size(); ++e) {
    for (std::size_t i = 0; i < params.entries()[e].var.size(); ++i) coords.emplace_back(e, i);
  }
  if (max_coordinates > 0 && coords.size() > max_coordinates) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coordinates);
  }

  ParameterStore<double> probe = params.frozen();
  std::vector<double> analytic, numeric;
  for (const auto& [e, i] : coords) {
    auto& data = probe.entries()[e].var.mutable_data();
    const double original = data[i];
    data[i] = original + step;
    const double up = f(probe).value()[0];
    data[i] = original - step;
    const double down = f(probe).value()[0];
    data[i] = original;
    const auto g = live.entries()[e].var.grad();
    analytic.push_back(g.empty() ? 0.0 : g[i]);
    numeric.push_back((up - down) / (2.0 * step));
  }
  return worst_gradient_error(analytic, numeric);
}

}  // namespace pderoll
