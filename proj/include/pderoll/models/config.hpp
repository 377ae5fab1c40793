#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace pderoll::models {

enum class ModelKind { fno2d, unet };

inline std::string to_string(ModelKind k) { return k == ModelKind::fno2d ? "fno2d" : "unet"; }

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "fno2d") return ModelKind::fno2d;
  if (s == "unet") return ModelKind::unet;
  throw std::invalid_argument("unknown model kind '" + s + "' (expected fno2d | unet)");
}

struct FnoConfig {
  std::size_t modes_x = 8;
  std::size_t modes_y = 8;
  std::size_t width = 16;
  std::size_t n_layers = 4;
  bool coordinate_channels = true;
};

struct UnetConfig {
  std::size_t depth = 3;
  std::size_t base_channels = 16;
  std::size_t norm_groups = 0;  // 0 disables group normalization
};

struct StepModelConfig {
  ModelKind kind = ModelKind::fno2d;
  std::size_t history_len = 10;
  FnoConfig fno;
  UnetConfig unet;

  /// Checks the parts of the configuration that do not depend on the grid.
  void validate() const {
    if (history_len == 0) throw std::invalid_argument("history_len must be positive");
    if (kind == ModelKind::fno2d) {
      if (fno.modes_x == 0 || fno.modes_y == 0 || fno.width == 0 || fno.n_layers == 0) {
        throw std::invalid_argument("fno: modes, width and n_layers must be positive");
      }
    } else {
      if (unet.depth == 0 || unet.base_channels == 0) {
        throw std::invalid_argument("unet: depth and base_channels must be positive");
      }
      if (unet.norm_groups > 0 && unet.base_channels % unet.norm_groups != 0) {
        throw std::invalid_argument("unet: base_channels must be divisible by norm_groups");
      }
    }
  }

  /// Bind-time check against a concrete h×w grid.
  void check_grid(std::size_t h, std::size_t w) const {
    if (kind == ModelKind::fno2d) {
      if (fno.modes_x > h / 2 || fno.modes_y > w / 2) {
        throw std::invalid_argument("fno: modes (" + std::to_string(fno.modes_x) + ", " +
                                    std::to_string(fno.modes_y) + ") exceed Nyquist bounds (" +
                                    std::to_string(h / 2) + ", " + std::to_string(w / 2) + ")");
      }
    } else {
      const std::size_t divisor = std::size_t{1} << unet.depth;
      if (h % divisor != 0 || w % divisor != 0) {
        throw std::invalid_argument("unet: grid " + std::to_string(h) + "x" + std::to_string(w) +
                                    " must be divisible by " + std::to_string(divisor) +
                                    " (2^depth)");
      }
    }
  }
};

inline nlohmann::json to_json(const StepModelConfig& c) {
  return {{"kind", to_string(c.kind)},
          {"history_len", c.history_len},
          {"fno",
           {{"modes_x", c.fno.modes_x},
            {"modes_y", c.fno.modes_y},
            {"width", c.fno.width},
            {"n_layers", c.fno.n_layers},
            {"coordinate_channels", c.fno.coordinate_channels}}},
          {"unet",
           {{"depth", c.unet.depth}, {"base_channels", c.unet.base_channels}, {"norm_groups", c.unet.norm_groups}}}};
}

inline StepModelConfig model_config_from_json(const nlohmann::json& j) {
  StepModelConfig c;
  c.kind = parse_model_kind(j.at("kind").get<std::string>());
  c.history_len = j.at("history_len").get<std::size_t>();
  const auto& f = j.at("fno");
  c.fno = {f.at("modes_x").get<std::size_t>(), f.at("modes_y").get<std::size_t>(), f.at("width").get<std::size_t>(),
           f.at("n_layers").get<std::size_t>(), f.at("coordinate_channels").get<bool>()};
  const auto& u = j.at("unet");
  c.unet = {u.at("depth").get<std::size_t>(), u.at("base_channels").get<std::size_t>(),
            u.at("norm_groups").get<std::size_t>()};
  c.validate();
  return c;
}

}  // namespace pderoll::models
