#pragma once

// Checkpoint file:
//   "CKPT1\0"            6-byte magic
//   u64                  JSON header length in bytes
//   JSON header          configs, epoch, optimizer step, block table
//   f64 blocks           little-endian, parameters then first and second moments
//
// Every block table entry carries name, shape, role and offset (in f64 units
// from the start of the data section).

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pderoll/models/config.hpp"
#include "pderoll/numerics/parameter_store.hpp"
#include "pderoll/trainer/config.hpp"
#include "pderoll/trainer/optim.hpp"

namespace pderoll::trainer {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[6] = {'C', 'K', 'P', 'T', '1', '\0'};

struct NamedBlock {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  models::StepModelConfig model;
  TrainConfig train;
  std::size_t epoch = 0;  // epochs completed
  std::optional<double> val_rel_l2;
  std::uint64_t adam_step = 0;
  std::vector<NamedBlock> params;
  std::vector<std::vector<double>> first_moment, second_moment;  // empty before the first update
};

template <class T>
std::vector<NamedBlock> blocks_of(const ParameterStore<T>& store) {
  std::vector<NamedBlock> out;
  for (const auto& e : store.entries()) {
    const auto& v = e.var.value();
    out.push_back({e.name, v.shape, std::vector<double>(v.data.begin(), v.data.end())});
  }
  return out;
}

template <class T>
ParameterStore<T> store_from(const std::vector<NamedBlock>& blocks, std::uint64_t seed = 0) {
  ParameterStore<T> store(seed);
  for (const auto& b : blocks) {
    Tensor<T> t(b.shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(b.values[i]);
    store.add(b.name, std::move(t));
  }
  return store;
}

template <class T>
Checkpoint make_checkpoint(const models::StepModelConfig& model, const TrainConfig& train, std::size_t epoch,
                           const ParameterStore<T>& params, const Adam& adam, std::optional<double> val_rel_l2) {
  Checkpoint c;
  c.model = model;
  c.train = train;
  c.epoch = epoch;
  c.val_rel_l2 = val_rel_l2;
  c.adam_step = adam.steps();
  c.params = blocks_of(params);
  c.first_moment = adam.first_moment();
  c.second_moment = adam.second_moment();
  return c;
}

namespace checkpoint_detail {

inline void write_f64(std::ofstream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace checkpoint_detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  if (c.first_moment.size() != c.second_moment.size() ||
      (!c.first_moment.empty() && c.first_moment.size() != c.params.size())) {
    throw std::invalid_argument("save_checkpoint: moment lists do not match the parameters");
  }
  nlohmann::json blocks = nlohmann::json::array();
  std::size_t offset = 0;
  auto add_block = [&](const std::string& name, const Shape& shape, const std::string& role, std::size_t n) {
    blocks.push_back({{"name", name}, {"shape", shape}, {"role", role}, {"offset", offset}});
    offset += n;
  };
  for (const auto& p : c.params) add_block(p.name, p.shape, "param", p.values.size());
  for (std::size_t i = 0; i < c.first_moment.size(); ++i) {
    add_block(c.params[i].name, c.params[i].shape, "adam_m", c.first_moment[i].size());
  }
  for (std::size_t i = 0; i < c.second_moment.size(); ++i) {
    add_block(c.params[i].name, c.params[i].shape, "adam_v", c.second_moment[i].size());
  }
  const nlohmann::json header = {
      {"model", models::to_json(c.model)},
      {"train", to_json(c.train)},
      {"epoch", c.epoch},
      {"val_rel_l2", c.val_rel_l2 ? nlohmann::json(*c.val_rel_l2) : nlohmann::json(nullptr)},
      {"adam_step", c.adam_step},
      {"blocks", blocks},
  };
  const std::string text = header.dump();
  const std::uint64_t length = text.size();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  out.write(reinterpret_cast<const char*>(&length), sizeof length);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : c.params) checkpoint_detail::write_f64(out, p.values);
  for (const auto& m : c.first_moment) checkpoint_detail::write_f64(out, m);
  for (const auto& v : c.second_moment) checkpoint_detail::write_f64(out, v);
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[sizeof kCheckpointMagic];
  std::uint64_t length = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&length), sizeof length);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw std::runtime_error(path.string() + ": not a checkpoint file");
  }
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  const auto header = nlohmann::json::parse(text);

  std::vector<double> data;
  {
    const auto start = in.tellg();
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg() - start);
    in.seekg(start);
    if (bytes % sizeof(double) != 0) throw std::runtime_error(path.string() + ": truncated data section");
    data.resize(bytes / sizeof(double));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
  }

  Checkpoint c;
  c.model = models::model_config_from_json(header.at("model"));
  c.train = train_config_from_json(header.at("train"));
  c.epoch = header.at("epoch").get<std::size_t>();
  if (!header.at("val_rel_l2").is_null()) c.val_rel_l2 = header.at("val_rel_l2").get<double>();
  c.adam_step = header.at("adam_step").get<std::uint64_t>();
  for (const auto& b : header.at("blocks")) {
    const Shape shape = b.at("shape").get<Shape>();
    const std::size_t offset = b.at("offset").get<std::size_t>(), n = numel(shape);
    if (offset + n > data.size()) throw std::runtime_error(path.string() + ": block runs past end of file");
    std::vector<double> values(data.begin() + static_cast<std::ptrdiff_t>(offset),
                               data.begin() + static_cast<std::ptrdiff_t>(offset + n));
    const auto role = b.at("role").get<std::string>();
    if (role == "param") {
      c.params.push_back({b.at("name").get<std::string>(), shape, std::move(values)});
    } else if (role == "adam_m") {
      c.first_moment.push_back(std::move(values));
    } else if (role == "adam_v") {
      c.second_moment.push_back(std::move(values));
    } else {
      throw std::runtime_error(path.string() + ": unknown block role " + role);
    }
  }
  return c;
}

}  // namespace pderoll::trainer
