#pragma once

#include <cstdint>
#include <utility>

#include "pderoll/models/config.hpp"
#include "pderoll/models/fno.hpp"
#include "pderoll/models/unet.hpp"
#include "pderoll/numerics/parameter_store.hpp"
#include "pderoll/numerics/random.hpp"

namespace pderoll::models {

/// Deterministic initialization: the same (config, seed) always yields the same store.
template <class T>
ParameterStore<T> init_params(const StepModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParameterStore<T> store(seed);
  RandomStream rng(seed);
  if (cfg.kind == ModelKind::fno2d) {
    init_fno(store, cfg, rng);
  } else {
    init_unet(store, cfg, rng);
  }
  return store;
}

inline std::size_t parameter_count(const StepModelConfig& cfg) {
  return cfg.kind == ModelKind::fno2d ? fno_parameter_count(cfg) : unet_parameter_count(cfg);
}

/// Maps an n-frame history window [n, H, W] to the next frame [1, H, W].
///
/// The call operator takes the parameter store explicitly so that callers can
/// evaluate against a private clone (for concurrent graphs) or a frozen copy.
template <class T>
class StepModel {
 public:
  StepModel(StepModelConfig cfg, ParameterStore<T> params) : cfg_(std::move(cfg)), params_(std::move(params)) {
    cfg_.validate();
  }

  static StepModel initialized(const StepModelConfig& cfg, std::uint64_t seed) {
    return StepModel(cfg, init_params<T>(cfg, seed));
  }

  const StepModelConfig& config() const { return cfg_; }
  const ParameterStore<T>& params() const { return params_; }
  ParameterStore<T>& params() { return params_; }

  /// Rejects grids the architecture cannot bind to.
  void check_grid(std::size_t h, std::size_t w) const { cfg_.check_grid(h, w); }

  Var<T> operator()(const ParameterStore<T>& params, const Var<T>& window) const {
    if (window.shape().size() != 3 || window.dim(0) != cfg_.history_len) {
      throw ShapeError(to_string(cfg_.kind) + " forward",
                       window.shape(), Shape{cfg_.history_len, 0, 0});
    }
    check_grid(window.dim(1), window.dim(2));
    return cfg_.kind == ModelKind::fno2d ? fno_forward(cfg_, params, window) : unet_forward(cfg_, params, window);
  }

  Var<T> forward(const Var<T>& window) const { return (*this)(params_, window); }

 private:
  StepModelConfig cfg_;
  ParameterStore<T> params_;
};

}  // namespace pderoll::models
