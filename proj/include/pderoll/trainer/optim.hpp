#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pderoll/numerics/ops.hpp"
#include "pderoll/numerics/parameter_store.hpp"

namespace pderoll::trainer {

/// Mean over all steps and grid points of (pred - target)².
template <class T>
Var<T> sequence_mse(const std::vector<Var<T>>& predictions, const std::vector<Var<T>>& targets) {
  if (predictions.size() != targets.size()) {
    throw std::invalid_argument("sequence_mse: " + std::to_string(predictions.size()) + " predictions vs " +
                                std::to_string(targets.size()) + " targets");
  }
  if (predictions.empty()) throw std::invalid_argument("sequence_mse: empty sequence");
  Var<T> total;
  std::size_t count = 0;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    auto d = ops::sub(predictions[k], targets[k]);
    auto sq = ops::sum(ops::mul(d, d));
    total = total.defined() ? ops::add(total, sq) : sq;
    count += d.size();
  }
  return ops::scale(total, T(1) / static_cast<T>(count));
}

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& parameter, std::size_t epoch)
      : std::runtime_error("training diverged: non-finite gradient for parameter '" + parameter + "' in epoch " +
                           std::to_string(epoch)),
        parameter_(parameter),
        epoch_(epoch) {}

  const std::string& parameter() const { return parameter_; }
  std::size_t epoch() const { return epoch_; }

 private:
  std::string parameter_;
  std::size_t epoch_;
};

/// Bias-corrected Adam. Moments are kept in double whatever the parameter precision.
class Adam {
 public:
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  Adam() = default;

  template <class T>
  explicit Adam(const ParameterStore<T>& params) {
    for (const auto& e : params.entries()) {
      m_.emplace_back(e.var.size(), 0.0);
      v_.emplace_back(e.var.size(), 0.0);
    }
  }

  /// grads[i] is the flattened gradient of entry i. Nothing is modified if any
  /// gradient is non-finite.
  template <class T>
  void step(ParameterStore<T>& params, const std::vector<std::vector<double>>& grads, double lr,
            std::size_t epoch = 0) {
    auto& entries = params.entries();
    if (grads.size() != entries.size() || m_.size() != entries.size()) {
      throw std::invalid_argument("Adam: gradient list does not match the parameter store");
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (grads[i].size() != entries[i].var.size()) {
        throw std::invalid_argument("Adam: gradient size mismatch for " + entries[i].name);
      }
      for (double g : grads[i]) {
        if (!std::isfinite(g)) throw TrainingDiverged(entries[i].name, epoch);
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto& data = entries[i].var.mutable_data();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < data.size(); ++j) {
        const double g = grads[i][j];
        m[j] = beta1 * m[j] + (1.0 - beta1) * g;
        v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
        const double update = lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
        data[j] = static_cast<T>(static_cast<double>(data[j]) - update);
      }
    }
  }

  std::uint64_t steps() const { return t_; }
  const std::vector<std::vector<double>>& first_moment() const { return m_; }
  const std::vector<std::vector<double>>& second_moment() const { return v_; }

  void restore(std::uint64_t t, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v) {
    if (m.size() != v.size()) throw std::invalid_argument("Adam: moment lists differ in length");
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Scales gradients in place so their global L2 norm is at most max_norm.
inline void clip_global_norm(std::vector<std::vector<double>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double v : g) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double s = max_norm / norm;
  for (auto& g : grads) {
    for (double& v : g) v *= s;
  }
}

}  // namespace pderoll::trainer
