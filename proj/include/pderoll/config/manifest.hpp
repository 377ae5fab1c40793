#pragma once

// Run manifest: one versioned key/value text file with sections.
//
//   # comment
//   version = 1
//   seed = 1
//   [dataset]
//   grid = 32
//   ...
//
// parse_manifest(to_text(m)) == m, and to_text is canonical: every key is
// written in a fixed order with round-trip precision, so equal manifests have
// equal bytes.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pderoll/datagen/dataset.hpp"
#include "pderoll/models/config.hpp"
#include "pderoll/numerics/random.hpp"
#include "pderoll/trainer/config.hpp"

namespace pderoll::config {

inline constexpr int kManifestVersion = 1;

class ManifestError : public std::runtime_error {
 public:
  ManifestError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct EvalSettings {
  std::size_t t_total = 25;                   // frames covered by evaluation rollouts
  std::vector<std::size_t> snapshot_frames;   // frame indices for exported images
  std::size_t snapshot_sample = 0;            // index into the test split
};

struct ReproSettings {
  std::vector<models::ModelKind> models = {models::ModelKind::fno2d, models::ModelKind::unet};
  std::vector<rollout::Scheme> schemes = {rollout::Scheme::free_rollout, rollout::Scheme::teacher_forcing,
                                          rollout::Scheme::curriculum};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
};

struct RunManifest {
  int version = kManifestVersion;
  std::uint64_t seed = 1;
  datagen::DatasetConfig dataset;  // solver.rng_seed is derived, never stored
  models::StepModelConfig fno = [] {
    models::StepModelConfig c;
    c.kind = models::ModelKind::fno2d;
    return c;
  }();
  models::StepModelConfig unet = [] {
    models::StepModelConfig c;
    c.kind = models::ModelKind::unet;
    return c;
  }();
  models::ModelKind model = models::ModelKind::fno2d;  // used by train and eval
  trainer::TrainConfig training;                       // seed is derived, never stored
  EvalSettings eval;
  ReproSettings repro;

  std::size_t t_train_end() const { return training.t_in + training.t_out; }
};

/// Seeds derived from one master seed.
struct DerivedSeeds {
  std::uint64_t datagen, init, train;
};

inline DerivedSeeds derive_seeds(std::uint64_t master) {
  return {derive_seed(master, {0xDA7A}), derive_seed(master, {0x1417}), derive_seed(master, {0x7A19})};
}

/// Concrete configurations for one master seed and one model kind.
struct Resolved {
  datagen::DatasetConfig dataset;
  models::StepModelConfig model;
  trainer::TrainConfig training;
  std::uint64_t init_seed = 0;
};

inline Resolved resolve(const RunManifest& m, std::uint64_t master, models::ModelKind kind) {
  const auto seeds = derive_seeds(master);
  Resolved r;
  r.dataset = m.dataset;
  r.dataset.solver.rng_seed = seeds.datagen;
  r.model = kind == models::ModelKind::fno2d ? m.fno : m.unet;
  r.model.history_len = m.training.t_in;
  r.training = m.training;
  r.training.seed = seeds.train;
  r.init_seed = seeds.init;
  return r;
}

namespace manifest_detail {

inline std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T, class F>
std::string join(const std::vector<T>& v, F&& fmt) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Value {
  std::string text;
  std::size_t line;
};

inline std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || end != s.data() + s.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

inline double to_real(const std::string& s) {
  double v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || end != s.data() + s.size() || !std::isfinite(v)) {
    throw std::invalid_argument("expected a finite number, got '" + s + "'");
  }
  return v;
}

inline bool to_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

}  // namespace manifest_detail

/// Canonical text form.
inline std::string to_text(const RunManifest& m) {
  using namespace manifest_detail;
  const auto& s = m.dataset.solver;
  std::ostringstream o;
  o << "# pderoll run manifest\n";
  o << "version = " << m.version << "\n";
  o << "seed = " << m.seed << "\n\n";
  o << "[dataset]\n";
  o << "grid = " << s.grid_size << "\n";
  o << "viscosity = " << real(s.viscosity) << "\n";
  o << "dt = " << real(s.dt) << "\n";
  o << "record_interval = " << real(s.record_interval) << "\n";
  o << "frames = " << s.n_frames << "\n";
  o << "forcing = " << datagen::to_string(s.forcing) << "\n";
  o << "grf_exponent = " << real(m.dataset.grf.spectral_exponent) << "\n";
  o << "grf_length_scale = " << real(m.dataset.grf.length_scale) << "\n";
  o << "samples = " << m.dataset.n_samples << "\n";
  o << "split = " << join(m.dataset.split_weights, real) << "\n\n";
  o << "[model]\n";
  o << "kind = " << models::to_string(m.model) << "\n";
  o << "fno.modes_x = " << m.fno.fno.modes_x << "\n";
  o << "fno.modes_y = " << m.fno.fno.modes_y << "\n";
  o << "fno.width = " << m.fno.fno.width << "\n";
  o << "fno.layers = " << m.fno.fno.n_layers << "\n";
  o << "fno.coordinates = " << (m.fno.fno.coordinate_channels ? "true" : "false") << "\n";
  o << "unet.depth = " << m.unet.unet.depth << "\n";
  o << "unet.base_channels = " << m.unet.unet.base_channels << "\n";
  o << "unet.norm_groups = " << m.unet.unet.norm_groups << "\n\n";
  const auto& t = m.training;
  o << "[training]\n";
  o << "epochs = " << t.epochs << "\n";
  o << "lr0 = " << real(t.lr0) << "\n";
  o << "lr_halving_period = " << t.lr_halving_period << "\n";
  o << "batch_size = " << t.batch_size << "\n";
  o << "t_in = " << t.t_in << "\n";
  o << "t_out = " << t.t_out << "\n";
  o << "scheme = " << rollout::to_string(t.scheme) << "\n";
  o << "decay = " << rollout::to_string(t.decay) << "\n";
  o << "precision = " << trainer::to_string(t.precision) << "\n";
  o << "grad_clip = " << real(t.grad_clip) << "\n\n";
  o << "[eval]\n";
  o << "t_total = " << m.eval.t_total << "\n";
  o << "snapshot_frames = " << join(m.eval.snapshot_frames, [](std::size_t v) { return std::to_string(v); }) << "\n";
  o << "snapshot_sample = " << m.eval.snapshot_sample << "\n\n";
  o << "[repro]\n";
  o << "models = " << join(m.repro.models, [](models::ModelKind k) { return models::to_string(k); }) << "\n";
  o << "schemes = " << join(m.repro.schemes, [](rollout::Scheme s) { return rollout::to_string(s); }) << "\n";
  o << "seeds = " << join(m.repro.seeds, [](std::uint64_t v) { return std::to_string(v); }) << "\n";
  return o.str();
}

/// Cross-field checks; `line` is reported for errors that no single key owns.
inline void check_manifest(const RunManifest& m, const std::string& source, std::size_t line) {
  auto fail = [&](const std::string& what) { throw ManifestError(source, line, what); };
  try {
    m.dataset.solver.validate();
    m.fno.validate();
    m.unet.validate();
    m.training.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (m.dataset.split_weights.size() != 3) fail("split needs three weights (train, validation, test)");
  if (m.t_train_end() > m.dataset.solver.n_frames) {
    fail("t_in + t_out = " + std::to_string(m.t_train_end()) + " exceeds frames = " +
         std::to_string(m.dataset.solver.n_frames));
  }
  if (m.eval.t_total < m.t_train_end() || m.eval.t_total > m.dataset.solver.n_frames) {
    fail("eval t_total must lie in [t_in + t_out, frames]");
  }
  for (auto f : m.eval.snapshot_frames) {
    if (f < m.training.t_in || f >= m.eval.t_total) {
      fail("snapshot frame " + std::to_string(f) + " outside [t_in, t_total)");
    }
  }
  if (m.repro.models.empty() || m.repro.schemes.empty() || m.repro.seeds.empty()) {
    fail("repro models, schemes and seeds must be non-empty");
  }
}

inline RunManifest parse_manifest(const std::string& text, const std::string& source = "<manifest>") {
  using namespace manifest_detail;
  std::map<std::string, Value> kv;
  std::string section;
  std::size_t line_no = 0, last_line = 0;
  std::istringstream in(text);
  std::string raw;
  static const std::set<std::string> sections = {"dataset", "model", "training", "eval", "repro"};
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    last_line = line_no;
    if (line.front() == '[') {
      if (line.back() != ']') throw ManifestError(source, line_no, "malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (!sections.contains(section)) throw ManifestError(source, line_no, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ManifestError(source, line_no, "expected 'key = value', got '" + line + "'");
    const std::string key = (section.empty() ? "" : section + ".") + trim(line.substr(0, eq));
    if (kv.contains(key)) {
      throw ManifestError(source, line_no, "duplicate key '" + key + "' (first set on line " +
                                               std::to_string(kv.at(key).line) + ")");
    }
    kv[key] = {trim(line.substr(eq + 1)), line_no};
  }

  RunManifest m;
  std::set<std::string> used;
  auto with = [&](const std::string& key, auto&& apply) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    used.insert(key);
    try {
      apply(it->second.text);
    } catch (const std::exception& e) {
      throw ManifestError(source, it->second.line, key + ": " + e.what());
    }
  };
  auto size_key = [&](const std::string& key, std::size_t& dst) {
    with(key, [&](const std::string& v) { dst = static_cast<std::size_t>(to_u64(v)); });
  };
  auto real_key = [&](const std::string& key, double& dst) {
    with(key, [&](const std::string& v) { dst = to_real(v); });
  };

  if (!kv.contains("version")) throw ManifestError(source, 1, "missing 'version'");
  with("version", [&](const std::string& v) {
    if (to_u64(v) != kManifestVersion) {
      throw std::invalid_argument("unsupported version " + v + " (expected " + std::to_string(kManifestVersion) + ")");
    }
  });
  with("seed", [&](const std::string& v) { m.seed = to_u64(v); });

  auto& s = m.dataset.solver;
  size_key("dataset.grid", s.grid_size);
  real_key("dataset.viscosity", s.viscosity);
  real_key("dataset.dt", s.dt);
  real_key("dataset.record_interval", s.record_interval);
  size_key("dataset.frames", s.n_frames);
  with("dataset.forcing", [&](const std::string& v) { s.forcing = datagen::parse_forcing(v); });
  real_key("dataset.grf_exponent", m.dataset.grf.spectral_exponent);
  real_key("dataset.grf_length_scale", m.dataset.grf.length_scale);
  size_key("dataset.samples", m.dataset.n_samples);
  with("dataset.split", [&](const std::string& v) {
    m.dataset.split_weights.clear();
    for (const auto& w : split_list(v)) m.dataset.split_weights.push_back(to_real(w));
  });

  with("model.kind", [&](const std::string& v) { m.model = models::parse_model_kind(v); });
  size_key("model.fno.modes_x", m.fno.fno.modes_x);
  size_key("model.fno.modes_y", m.fno.fno.modes_y);
  size_key("model.fno.width", m.fno.fno.width);
  size_key("model.fno.layers", m.fno.fno.n_layers);
  with("model.fno.coordinates", [&](const std::string& v) { m.fno.fno.coordinate_channels = to_bool(v); });
  size_key("model.unet.depth", m.unet.unet.depth);
  size_key("model.unet.base_channels", m.unet.unet.base_channels);
  size_key("model.unet.norm_groups", m.unet.unet.norm_groups);

  auto& t = m.training;
  size_key("training.epochs", t.epochs);
  real_key("training.lr0", t.lr0);
  size_key("training.lr_halving_period", t.lr_halving_period);
  size_key("training.batch_size", t.batch_size);
  size_key("training.t_in", t.t_in);
  size_key("training.t_out", t.t_out);
  with("training.scheme", [&](const std::string& v) { t.scheme = rollout::parse_scheme(v); });
  with("training.decay", [&](const std::string& v) { t.decay = rollout::parse_decay(v); });
  with("training.precision", [&](const std::string& v) { t.precision = trainer::parse_precision(v); });
  real_key("training.grad_clip", t.grad_clip);

  size_key("eval.t_total", m.eval.t_total);
  with("eval.snapshot_frames", [&](const std::string& v) {
    m.eval.snapshot_frames.clear();
    for (const auto& f : split_list(v)) m.eval.snapshot_frames.push_back(static_cast<std::size_t>(to_u64(f)));
  });
  size_key("eval.snapshot_sample", m.eval.snapshot_sample);

  with("repro.models", [&](const std::string& v) {
    m.repro.models.clear();
    for (const auto& k : split_list(v)) m.repro.models.push_back(models::parse_model_kind(k));
  });
  with("repro.schemes", [&](const std::string& v) {
    m.repro.schemes.clear();
    for (const auto& k : split_list(v)) m.repro.schemes.push_back(rollout::parse_scheme(k));
  });
  with("repro.seeds", [&](const std::string& v) {
    m.repro.seeds.clear();
    for (const auto& k : split_list(v)) m.repro.seeds.push_back(to_u64(k));
  });

  for (const auto& [key, value] : kv) {
    if (!used.contains(key)) throw ManifestError(source, value.line, "unknown key '" + key + "'");
  }
  m.fno.history_len = m.unet.history_len = t.t_in;
  check_manifest(m, source, last_line);
  return m;
}

inline RunManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.string());
}

inline void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  std::ofstream out(path, std::ios::trunc);
  out << to_text(m);
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace pderoll::config
