#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "pderoll/datagen/dataset.hpp"
#include "pderoll/numerics/autodiff.hpp"

namespace pderoll::eval {

/// Running ‖pred − target‖² and ‖target‖², accumulated in double.
struct L2Accumulator {
  double error_sq = 0.0;
  double target_sq = 0.0;

  template <class A, class B>
  void add(std::span<const A> pred, std::span<const B> target) {
    if (pred.size() != target.size()) {
      throw std::invalid_argument("relative_l2: prediction has " + std::to_string(pred.size()) +
                                  " values, target has " + std::to_string(target.size()));
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double t = static_cast<double>(target[i]);
      const double d = static_cast<double>(pred[i]) - t;
      error_sq += d * d;
      target_sq += t * t;
    }
  }

  /// Empty when the target is identically zero.
  std::optional<double> ratio() const {
    if (target_sq == 0.0) return std::nullopt;
    return std::sqrt(error_sq) / std::sqrt(target_sq);
  }
};

/// ‖pred − target‖₂ / ‖target‖₂ over the flattened sequence; empty for a zero target.
template <class A, class B>
std::optional<double> relative_l2(std::span<const A> pred, std::span<const B> target) {
  L2Accumulator acc;
  acc.add(pred, target);
  return acc.ratio();
}

/// Relative L2 of predicted frames against recorded frames first_frame, first_frame+1, ...
template <class T>
std::optional<double> relative_l2(const std::vector<Var<T>>& predictions, const datagen::Trajectory& traj,
                                  std::size_t first_frame) {
  if (first_frame + predictions.size() > traj.n_frames) {
    throw std::invalid_argument("relative_l2: predictions run past the recorded frames");
  }
  L2Accumulator acc;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    acc.add(std::span<const T>(predictions[k].value().data), traj.frame(first_frame + k));
  }
  return acc.ratio();
}

/// Mean over the defined per-sample values, with the number excluded.
struct MeanWithExclusions {
  double mean = 0.0;
  std::size_t included = 0;
  std::size_t excluded = 0;
};

inline MeanWithExclusions mean_defined(const std::vector<std::optional<double>>& values) {
  MeanWithExclusions m;
  double sum = 0.0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++m.included;
    } else {
      ++m.excluded;
    }
  }
  m.mean = m.included > 0 ? sum / static_cast<double>(m.included) : std::nan("");
  return m;
}

}  // namespace pderoll::eval
