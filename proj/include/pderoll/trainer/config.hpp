#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "pderoll/rollout/schedule.hpp"

namespace pderoll::trainer {

enum class Precision { single, double_precision };

inline std::string to_string(Precision p) { return p == Precision::single ? "single" : "double"; }

inline Precision parse_precision(const std::string& s) {
  if (s == "single") return Precision::single;
  if (s == "double") return Precision::double_precision;
  throw std::invalid_argument("unknown precision '" + s + "' (expected single | double)");
}

struct TrainConfig {
  std::size_t epochs = 50;
  double lr0 = 1e-3;
  std::size_t lr_halving_period = 10;
  std::size_t batch_size = 10;
  std::size_t t_in = 10;
  std::size_t t_out = 10;
  rollout::Scheme scheme = rollout::Scheme::curriculum;
  rollout::Decay decay = rollout::Decay::linear;
  std::uint64_t seed = 0;  // schedule draws and shuffling
  Precision precision = Precision::single;
  double grad_clip = 0.0;  // global-norm clip; 0 disables

  void validate() const {
    if (!(lr0 > 0.0)) throw std::invalid_argument("lr0 must be positive");
    if (lr_halving_period == 0) throw std::invalid_argument("lr_halving_period must be positive");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (t_in == 0 || t_out == 0) throw std::invalid_argument("t_in and t_out must be positive");
    if (grad_clip < 0.0) throw std::invalid_argument("grad_clip must be non-negative");
  }
};

/// lr0 · 0.5^floor(epoch / period)
inline double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.lr0 * std::ldexp(1.0, -static_cast<int>(epoch / cfg.lr_halving_period));
}

/// Ground-truth ratio used during `epoch` (0-based). Curriculum decays over
/// epoch indices 0..epochs-1, so the last epoch runs at the schedule's end value.
inline double ratio_for_epoch(std::size_t epoch, const TrainConfig& cfg) {
  switch (cfg.scheme) {
    case rollout::Scheme::free_rollout: return 0.0;
    case rollout::Scheme::teacher_forcing: return 1.0;
    case rollout::Scheme::curriculum:
      return rollout::e_schedule(epoch, cfg.epochs > 0 ? cfg.epochs - 1 : 0, cfg.decay);
  }
  return 0.0;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"lr0", c.lr0},
          {"lr_halving_period", c.lr_halving_period},
          {"batch_size", c.batch_size},
          {"t_in", c.t_in},
          {"t_out", c.t_out},
          {"scheme", rollout::to_string(c.scheme)},
          {"decay", rollout::to_string(c.decay)},
          {"seed", c.seed},
          {"precision", to_string(c.precision)},
          {"grad_clip", c.grad_clip}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.lr0 = j.at("lr0").get<double>();
  c.lr_halving_period = j.at("lr_halving_period").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.t_in = j.at("t_in").get<std::size_t>();
  c.t_out = j.at("t_out").get<std::size_t>();
  c.scheme = rollout::parse_scheme(j.at("scheme").get<std::string>());
  c.decay = rollout::parse_decay(j.at("decay").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.precision = parse_precision(j.at("precision").get<std::string>());
  c.grad_clip = j.at("grad_clip").get<double>();
  c.validate();
  return c;
}

}  // namespace pderoll::trainer
