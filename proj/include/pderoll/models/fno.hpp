#pragma once

#include <string>

#include "pderoll/models/config.hpp"
#include "pderoll/models/spectral_conv.hpp"
#include "pderoll/numerics/ops.hpp"
#include "pderoll/numerics/parameter_store.hpp"
#include "pderoll/numerics/random.hpp"

namespace pderoll::models {

inline std::size_t fno_input_channels(const StepModelConfig& cfg) {
  return cfg.history_len + (cfg.fno.coordinate_channels ? 2 : 0);
}

/// Lift (1×1) + n_layers Fourier layers + 1×1 projection to one channel:
/// c_in·w + w + L·(2·w²·mx·my + w² + w) + w + 1 scalars, c_in = n (+2 with coordinates).
inline std::size_t fno_parameter_count(const StepModelConfig& cfg) {
  const auto& f = cfg.fno;
  const std::size_t w = f.width;
  return fno_input_channels(cfg) * w + w + f.n_layers * (2 * w * w * f.modes_x * f.modes_y + w * w + w) + w + 1;
}

template <class T>
void init_fno(ParameterStore<T>& store, const StepModelConfig& cfg, RandomStream& rng) {
  const auto& f = cfg.fno;
  const std::size_t w = f.width, cin = fno_input_channels(cfg);
  auto uniform = [&](Shape shape, double bound) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
  };
  const double lift_bound = 1.0 / std::sqrt(static_cast<double>(cin));
  const double mix_bound = 1.0 / std::sqrt(static_cast<double>(w));
  store.add("lift.weight", uniform({w, cin}, lift_bound));
  store.add("lift.bias", uniform({w}, lift_bound));
  for (std::size_t l = 0; l < f.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l);
    Tensor<T> spectral({w, w, f.modes_x, f.modes_y, 2});
    const double scale = 1.0 / static_cast<double>(w * w);
    for (auto& v : spectral.data) v = static_cast<T>(scale * rng.uniform());
    store.add(p + ".spectral", std::move(spectral));
    store.add(p + ".bypass.weight", uniform({w, w}, mix_bound));
    store.add(p + ".bypass.bias", uniform({w}, mix_bound));
  }
  store.add("project.weight", uniform({1, w}, mix_bound));
  store.add("project.bias", uniform({1}, mix_bound));
}

/// Normalized grid coordinates i/H and j/W as two channels.
template <class T>
Tensor<T> coordinate_channels(std::size_t h, std::size_t w) {
  Tensor<T> c({2, h, w});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      c[i * w + j] = static_cast<T>(static_cast<double>(i) / static_cast<double>(h));
      c[h * w + i * w + j] = static_cast<T>(static_cast<double>(j) / static_cast<double>(w));
    }
  }
  return c;
}

template <class T>
Var<T> fno_forward(const StepModelConfig& cfg, const ParameterStore<T>& params, const Var<T>& window) {
  const std::size_t h = window.dim(1), w = window.dim(2);
  Var<T> x = window;
  if (cfg.fno.coordinate_channels) {
    x = ops::concat<T>({window, Var<T>::constant(coordinate_channels<T>(h, w))}, 0);
  }
  auto hidden = ops::add_channel_bias(ops::channel_mix(x, params.at("lift.weight")), params.at("lift.bias"));
  for (std::size_t l = 0; l < cfg.fno.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l);
    auto spectral = spectral_conv(hidden, ops::as_complex(params.at(p + ".spectral")));
    auto bypass = ops::add_channel_bias(ops::channel_mix(hidden, params.at(p + ".bypass.weight")),
                                        params.at(p + ".bypass.bias"));
    hidden = ops::gelu(ops::add(spectral, bypass));
  }
  return ops::add_channel_bias(ops::channel_mix(hidden, params.at("project.weight")), params.at("project.bias"));
}

}  // namespace pderoll::models
