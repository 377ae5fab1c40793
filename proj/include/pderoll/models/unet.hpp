#pragma once

// UNet with periodic padding throughout, so the network commutes with circular
// shifts by multiples of 2^depth.
//
//   encoder l = 0..depth-1:  conv3 -> act -> conv3 -> act  (skip_l), conv3/2 downsample
//   bottleneck:              conv3 -> act -> conv3 -> act   at base·2^depth channels
//   decoder l = depth-1..0:  2×2/2 transposed conv, concat skip_l, conv3 -> act -> conv3 -> act
//   head:                    1×1 to one channel
//
// Channels at level l are base·2^l.

#include <string>
#include <vector>

#include "pderoll/models/config.hpp"
#include "pderoll/numerics/ops.hpp"
#include "pderoll/numerics/parameter_store.hpp"
#include "pderoll/numerics/random.hpp"

namespace pderoll::models {

namespace unet_detail {

inline std::size_t channels_at(const UnetConfig& u, std::size_t level) { return u.base_channels << level; }

// (name prefix, cout, cin) for every 3×3 stride-1 convolution, in creation order.
struct ConvSpec {
  std::string name;
  std::size_t cout, cin;
};

inline std::vector<ConvSpec> double_conv(const std::string& prefix, std::size_t cout, std::size_t cin) {
  return {{prefix + ".conv1", cout, cin}, {prefix + ".conv2", cout, cout}};
}

}  // namespace unet_detail

/// Σ conv (9·cin·cout + cout) + downsamples (9·c² + c) + upsamplers (4·c_{l+1}·c_l + c_l)
/// + head (c_0 + 1), plus 2·cout per normalized convolution when norm_groups > 0.
inline std::size_t unet_parameter_count(const StepModelConfig& cfg) {
  using namespace unet_detail;
  const auto& u = cfg.unet;
  const std::size_t norm = u.norm_groups > 0 ? 2 : 0;
  std::size_t n = 0;
  std::size_t cin = cfg.history_len;
  for (std::size_t l = 0; l < u.depth; ++l) {
    const std::size_t c = channels_at(u, l);
    n += 9 * cin * c + c + 9 * c * c + c + 2 * norm * c;
    n += 9 * c * c + c;
    cin = c;
  }
  const std::size_t cm = channels_at(u, u.depth);
  n += 9 * cin * cm + cm + 9 * cm * cm + cm + 2 * norm * cm;
  for (std::size_t l = u.depth; l-- > 0;) {
    const std::size_t c = channels_at(u, l), up = channels_at(u, l + 1);
    n += 4 * up * c + c;
    n += 9 * 2 * c * c + c + 9 * c * c + c + 2 * norm * c;
  }
  return n + channels_at(u, 0) + 1;
}

template <class T>
void init_unet(ParameterStore<T>& store, const StepModelConfig& cfg, RandomStream& rng) {
  using namespace unet_detail;
  const auto& u = cfg.unet;
  auto uniform = [&](Shape shape, double fan_in) {
    const double bound = 1.0 / std::sqrt(fan_in);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
  };
  auto conv = [&](const std::string& name, std::size_t cout, std::size_t cin, std::size_t k, bool norm) {
    const double fan_in = static_cast<double>(cin * k * k);
    store.add(name + ".weight", uniform({cout, cin, k, k}, fan_in));
    store.add(name + ".bias", uniform({cout}, fan_in));
    if (norm) {
      store.add(name + ".norm.gamma", Tensor<T>({cout}, T(1)));
      store.add(name + ".norm.beta", Tensor<T>({cout}, T(0)));
    }
  };
  const bool norm = u.norm_groups > 0;
  std::size_t cin = cfg.history_len;
  for (std::size_t l = 0; l < u.depth; ++l) {
    const std::size_t c = channels_at(u, l);
    for (const auto& s : double_conv("enc" + std::to_string(l), c, cin)) conv(s.name, s.cout, s.cin, 3, norm);
    conv("enc" + std::to_string(l) + ".down", c, c, 3, false);
    cin = c;
  }
  for (const auto& s : double_conv("mid", channels_at(u, u.depth), cin)) conv(s.name, s.cout, s.cin, 3, norm);
  for (std::size_t l = u.depth; l-- > 0;) {
    const std::size_t c = channels_at(u, l), up = channels_at(u, l + 1);
    const std::string p = "dec" + std::to_string(l);
    store.add(p + ".up.weight", uniform({up, c, 2, 2}, static_cast<double>(up)));
    store.add(p + ".up.bias", uniform({c}, static_cast<double>(up)));
    for (const auto& s : double_conv(p, c, 2 * c)) conv(s.name, s.cout, s.cin, 3, norm);
  }
  const std::size_t c0 = channels_at(u, 0);
  store.add("head.weight", uniform({1, c0}, static_cast<double>(c0)));
  store.add("head.bias", uniform({1}, static_cast<double>(c0)));
}

template <class T>
Var<T> unet_forward(const StepModelConfig& cfg, const ParameterStore<T>& params, const Var<T>& window) {
  const auto& u = cfg.unet;
  auto conv_act = [&](const Var<T>& x, const std::string& name) {
    auto y = ops::add_channel_bias(ops::conv2d(x, params.at(name + ".weight")), params.at(name + ".bias"));
    if (u.norm_groups > 0) {
      y = ops::group_norm(y, u.norm_groups, params.at(name + ".norm.gamma"), params.at(name + ".norm.beta"));
    }
    return ops::gelu(y);
  };
  auto block = [&](const Var<T>& x, const std::string& prefix) {
    return conv_act(conv_act(x, prefix + ".conv1"), prefix + ".conv2");
  };

  std::vector<Var<T>> skips;
  Var<T> x = window;
  for (std::size_t l = 0; l < u.depth; ++l) {
    const std::string p = "enc" + std::to_string(l);
    x = block(x, p);
    skips.push_back(x);
    x = ops::add_channel_bias(ops::conv2d(x, params.at(p + ".down.weight"), 2), params.at(p + ".down.bias"));
  }
  x = block(x, "mid");
  for (std::size_t l = u.depth; l-- > 0;) {
    const std::string p = "dec" + std::to_string(l);
    x = ops::add_channel_bias(ops::conv_transpose2d(x, params.at(p + ".up.weight"), 2), params.at(p + ".up.bias"));
    x = block(ops::concat<T>({x, skips[l]}, 0), p);
  }
  return ops::add_channel_bias(ops::channel_mix(x, params.at("head.weight")), params.at("head.bias"));
}

}  // namespace pderoll::models
