#pragma once

// Autoregressive rollout over a sliding n-frame history window.
//
// The window starts with recorded frames 0..t_in-1. Each generated step
// forwards the window, records the prediction, then pushes one slot for the
// timestep just generated. step_choice decides whether that slot holds the
// recorded frame (a constant) or the prediction (still attached to the graph).
// A slot keeps its content for as long as it stays in the window.

#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "pderoll/datagen/dataset.hpp"
#include "pderoll/numerics/ops.hpp"
#include "pderoll/rollout/schedule.hpp"

namespace pderoll::rollout {

class InsufficientFrames : public std::invalid_argument {
 public:
  InsufficientFrames(std::size_t required, std::size_t available)
      : std::invalid_argument("rollout: trajectory has " + std::to_string(available) + " frames, " +
                              std::to_string(required) + " required"),
        required_(required),
        available_(available) {}

  std::size_t required() const { return required_; }
  std::size_t available() const { return available_; }

 private:
  std::size_t required_, available_;
};

/// Fixed-length FIFO of [1, H, W] frames, oldest first.
template <class T>
class HistoryWindow {
 public:
  HistoryWindow(std::size_t n) : capacity_(n) {}

  /// Appends a frame; once full, the oldest slot is evicted.
  void push(Var<T> frame, Source tag) {
    slots_.push_back(std::move(frame));
    tags_.push_back(tag);
    if (slots_.size() > capacity_) {
      slots_.pop_front();
      tags_.pop_front();
    }
  }

  bool full() const { return slots_.size() == capacity_; }
  std::size_t size() const { return slots_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<Source>& tags() const { return tags_; }
  const Var<T>& slot(std::size_t i) const { return slots_.at(i); }

  /// [n, H, W] model input.
  Var<T> stacked() const {
    if (!full()) throw std::logic_error("HistoryWindow: stacked() before the window is full");
    return ops::concat<T>(std::vector<Var<T>>(slots_.begin(), slots_.end()), 0);
  }

 private:
  std::size_t capacity_;
  std::deque<Var<T>> slots_;
  std::deque<Source> tags_;
};

template <class T>
struct RolloutResult {
  std::vector<Var<T>> predictions;  // [1, H, W] each, time-ordered
  std::vector<Source> choice_log;   // slot decision taken after each generated step
};

struct RolloutOptions {
  // Prediction slots enter the window detached: every model call then sees a
  // constant history. Exists for gradient-flow comparisons only.
  bool truncate_gradients = false;
};

/// Recorded frame t as a [1, H, W] constant.
template <class T>
Var<T> recorded_frame(const datagen::Trajectory& traj, std::size_t t) {
  const auto src = traj.frame(t);
  Tensor<T> f({1, traj.h, traj.w});
  for (std::size_t i = 0; i < src.size(); ++i) f[i] = static_cast<T>(src[i]);
  return Var<T>::constant(std::move(f));
}

/// Frames a rollout consumes: the initial window, plus every generated
/// timestep when ground truth may be substituted.
inline std::size_t frames_required(Scheme scheme, std::size_t t_in, std::size_t t_out) {
  return scheme == Scheme::free_rollout ? t_in : t_in + t_out;
}

/// `step(window)` maps an [n, H, W] window to the next [1, H, W] frame, with
/// n = t_in.
template <class T, class StepFn>
RolloutResult<T> rollout(StepFn&& step, const datagen::Trajectory& traj, ScheduleState& state, std::size_t t_in,
                         std::size_t t_out, const RolloutOptions& options = {}) {
  if (t_in == 0) throw std::invalid_argument("rollout: t_in must be positive");
  const std::size_t required = frames_required(state.scheme, t_in, t_out);
  if (traj.n_frames < required) throw InsufficientFrames(required, traj.n_frames);

  HistoryWindow<T> window(t_in);
  for (std::size_t t = 0; t < t_in; ++t) window.push(recorded_frame<T>(traj, t), Source::ground_truth);

  RolloutResult<T> result;
  result.predictions.reserve(t_out);
  result.choice_log.reserve(t_out);
  for (std::size_t k = 0; k < t_out; ++k) {
    Var<T> prediction = step(window.stacked());
    result.predictions.push_back(prediction);
    const Source choice = step_choice(state);
    result.choice_log.push_back(choice);
    if (k + 1 == t_out) break;
    if (choice == Source::ground_truth) {
      window.push(recorded_frame<T>(traj, t_in + k), Source::ground_truth);
    } else {
      window.push(options.truncate_gradients ? detach(prediction) : prediction, Source::prediction);
    }
  }
  return result;
}

}  // namespace pderoll::rollout
