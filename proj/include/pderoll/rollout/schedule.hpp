#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "pderoll/numerics/random.hpp"

namespace pderoll::rollout {

enum class Scheme { free_rollout, teacher_forcing, curriculum };
enum class Decay { linear, exponential, inverse_sigmoid };
enum class Source : std::uint8_t { ground_truth, prediction };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::free_rollout: return "free_rollout";
    case Scheme::teacher_forcing: return "teacher_forcing";
    case Scheme::curriculum: return "curriculum";
  }
  return "?";
}

inline std::string to_string(Decay d) {
  switch (d) {
    case Decay::linear: return "linear";
    case Decay::exponential: return "exponential";
    case Decay::inverse_sigmoid: return "inverse_sigmoid";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view s) {
  for (auto v : {Scheme::free_rollout, Scheme::teacher_forcing, Scheme::curriculum}) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown scheme '" + std::string(s) +
                              "' (expected free_rollout, teacher_forcing or curriculum)");
}

inline Decay parse_decay(std::string_view s) {
  for (auto v : {Decay::linear, Decay::exponential, Decay::inverse_sigmoid}) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown decay '" + std::string(s) +
                              "' (expected linear, exponential or inverse_sigmoid)");
}

/// Scheme plus the ground-truth ratio e and the stream its draws come from.
/// e only matters for curriculum.
struct ScheduleState {
  Scheme scheme = Scheme::free_rollout;
  double e = 0.0;
  RandomStream rng{0};

  ScheduleState() = default;
  ScheduleState(Scheme s, double ratio, std::uint64_t seed) : scheme(s), e(ratio), rng(seed) {
    if (!(e >= 0.0 && e <= 1.0)) throw std::invalid_argument("ground-truth ratio e must lie in [0, 1]");
  }
};

/// Which source fills the most recent history slot. Curriculum draws
/// Bernoulli(e) from the state's stream; the other schemes never draw.
inline Source step_choice(ScheduleState& state) {
  switch (state.scheme) {
    case Scheme::free_rollout: return Source::prediction;
    case Scheme::teacher_forcing: return Source::ground_truth;
    case Scheme::curriculum: return state.rng.bernoulli(state.e) ? Source::ground_truth : Source::prediction;
  }
  return Source::prediction;
}

/// Decay constant of the inverse-sigmoid variant, floored at 9 so e(0) ≥ 0.9.
inline double inverse_sigmoid_k(std::size_t total_epochs) {
  return std::max(static_cast<double>(total_epochs) / 10.0, 9.0);
}

/// Ground-truth ratio for `epoch` of a decay spanning `total_epochs`.
///   linear:          1 - epoch/total
///   exponential:     k^epoch, k = 0.01^(1/total)
///   inverse_sigmoid: k / (k + exp(epoch/k))
inline double e_schedule(std::size_t epoch, std::size_t total_epochs, Decay variant) {
  if (epoch > total_epochs) {
    throw std::out_of_range("e_schedule: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(total_epochs) + "]");
  }
  const double t = static_cast<double>(epoch), total = static_cast<double>(total_epochs);
  switch (variant) {
    case Decay::linear:
      return total_epochs == 0 ? 0.0 : 1.0 - t / total;
    case Decay::exponential:
      return total_epochs == 0 ? 0.01 : std::pow(0.01, t / total);
    case Decay::inverse_sigmoid: {
      const double k = inverse_sigmoid_k(total_epochs);
      return k / (k + std::exp(t / k));
    }
  }
  return 0.0;
}

}  // namespace pderoll::rollout
