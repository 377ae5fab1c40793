#pragma once

// Trajectory files, split bookkeeping and parallel dataset generation.
//
// Trajectory file layout (little-endian):
//   "NSTJ1\0" | u32 n_frames | u32 H | u32 W | n_frames*H*W f32, time-major, row-major
// A `dataset.json` sidecar records the solver and field configuration, seeds
// and the split lists.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pderoll/datagen/grf.hpp"
#include "pderoll/datagen/solver.hpp"
#include "pderoll/numerics/random.hpp"

namespace pderoll::datagen {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline constexpr char kTrajectoryMagic[6] = {'N', 'S', 'T', 'J', '1', '\0'};
inline constexpr int kDatasetFormatVersion = 1;
inline constexpr std::uint64_t kSampleSeedTag = 0xDA7A;

/// One simulated solution: n_frames grids of h×w, oldest first.
struct Trajectory {
  std::size_t n_frames = 0, h = 0, w = 0;
  std::vector<double> values;  // time-major, row-major
  std::uint64_t sample_id = 0;
  std::uint64_t seed = 0;

  std::size_t frame_size() const { return h * w; }
  std::span<const double> frame(std::size_t t) const {
    return std::span<const double>(values).subspan(t * frame_size(), frame_size());
  }
  std::span<double> frame(std::size_t t) {
    return std::span<double>(values).subspan(t * frame_size(), frame_size());
  }
};

struct DatasetSplit {
  std::vector<std::uint64_t> train, validation, test;

  std::size_t total() const { return train.size() + validation.size() + test.size(); }
};

struct DatasetConfig {
  SolverConfig solver;
  GrfConfig grf;
  std::size_t n_samples = 280;
  std::vector<double> split_weights = {200, 40, 40};
};

struct Dataset {
  DatasetConfig config;
  DatasetSplit split;
  std::map<std::uint64_t, Trajectory> samples;

  const Trajectory& sample(std::uint64_t id) const {
    auto it = samples.find(id);
    if (it == samples.end()) throw std::out_of_range("dataset has no sample " + std::to_string(id));
    return it->second;
  }
};

inline std::string trajectory_filename(std::uint64_t sample_id) {
  std::ostringstream os;
  os << "sample_" << std::setw(6) << std::setfill('0') << sample_id << ".nstj";
  return os.str();
}

inline void write_trajectory(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kTrajectoryMagic, sizeof(kTrajectoryMagic));
  const std::uint32_t header[3] = {static_cast<std::uint32_t>(traj.n_frames),
                                   static_cast<std::uint32_t>(traj.h),
                                   static_cast<std::uint32_t>(traj.w)};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  std::vector<float> buf(traj.values.begin(), traj.values.end());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline Trajectory read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[sizeof(kTrajectoryMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kTrajectoryMagic, sizeof(magic)) != 0) {
    throw std::runtime_error(path.string() + ": not a trajectory file (bad magic)");
  }
  std::uint32_t header[3];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  Trajectory t;
  t.n_frames = header[0];
  t.h = header[1];
  t.w = header[2];
  std::vector<float> buf(t.n_frames * t.h * t.w);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw std::runtime_error(path.string() + ": truncated trajectory data");
  t.values.assign(buf.begin(), buf.end());
  return t;
}

/// Split sizes by largest remainder over normalized weights; sums to n exactly.
inline std::vector<std::size_t> split_counts(std::size_t n, std::span<const double> weights) {
  if (weights.empty()) throw std::invalid_argument("split weights must not be empty");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0) || std::any_of(weights.begin(), weights.end(), [](double w) { return w < 0; })) {
    throw std::invalid_argument("split weights must be non-negative with a positive sum");
  }
  std::vector<std::size_t> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(n) * weights[i] / total;
    // guard against exact quotients landing a hair below an integer
    const double rounded = std::round(exact);
    const double base = std::abs(exact - rounded) < 1e-9 ? rounded : std::floor(exact);
    counts[i] = static_cast<std::size_t>(base);
    assigned += counts[i];
    remainders.emplace_back(exact - base, i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[remainders[k % remainders.size()].second];
  return counts;
}

/// Contiguous id ranges: train first, then validation, then test.
inline DatasetSplit make_split(std::size_t n, std::span<const double> weights) {
  if (weights.size() != 3) throw std::invalid_argument("expected three split weights (train, validation, test)");
  const auto counts = split_counts(n, weights);
  DatasetSplit s;
  std::uint64_t id = 0;
  for (std::size_t i = 0; i < counts[0]; ++i) s.train.push_back(id++);
  for (std::size_t i = 0; i < counts[1]; ++i) s.validation.push_back(id++);
  for (std::size_t i = 0; i < counts[2]; ++i) s.test.push_back(id++);
  return s;
}

inline std::uint64_t sample_seed(std::uint64_t master, std::uint64_t sample_id) {
  return derive_seed(master, {kSampleSeedTag, sample_id});
}

/// Simulates one sample. Frames are rounded to f32 so the in-memory copy
/// equals what a file round-trip yields.
inline Trajectory simulate_sample(const DatasetConfig& cfg, std::uint64_t sample_id,
                                  const SolverConfig& solver_cfg) {
  Trajectory t;
  t.sample_id = sample_id;
  t.seed = sample_seed(cfg.solver.rng_seed, sample_id);
  t.n_frames = solver_cfg.n_frames;
  t.h = t.w = solver_cfg.grid_size;
  VorticitySolver solver(solver_cfg);
  const auto frames = solver.simulate(sample_grf(solver_cfg.grid_size, t.seed, cfg.grf));
  t.values.reserve(t.n_frames * t.h * t.w);
  for (const auto& f : frames) {
    for (double v : f.data) t.values.push_back(static_cast<double>(static_cast<float>(v)));
  }
  if (!std::all_of(t.values.begin(), t.values.end(), [](double v) { return std::isfinite(v); })) {
    throw SolverDiverged(0);
  }
  return t;
}

inline nlohmann::json to_json(const DatasetConfig& cfg) {
  return {
      {"grid_size", cfg.solver.grid_size},
      {"viscosity", cfg.solver.viscosity},
      {"dt", cfg.solver.dt},
      {"record_interval", cfg.solver.record_interval},
      {"n_frames", cfg.solver.n_frames},
      {"forcing", to_string(cfg.solver.forcing)},
      {"rng_seed", cfg.solver.rng_seed},
      {"spectral_exponent", cfg.grf.spectral_exponent},
      {"length_scale", cfg.grf.length_scale},
      {"n_samples", cfg.n_samples},
      {"split_weights", cfg.split_weights},
  };
}

inline DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
  DatasetConfig cfg;
  cfg.solver.grid_size = j.at("grid_size").get<std::size_t>();
  cfg.solver.viscosity = j.at("viscosity").get<double>();
  cfg.solver.dt = j.at("dt").get<double>();
  cfg.solver.record_interval = j.at("record_interval").get<double>();
  cfg.solver.n_frames = j.at("n_frames").get<std::size_t>();
  cfg.solver.forcing = parse_forcing(j.at("forcing").get<std::string>());
  cfg.solver.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  cfg.grf.spectral_exponent = j.at("spectral_exponent").get<double>();
  cfg.grf.length_scale = j.at("length_scale").get<double>();
  cfg.n_samples = j.at("n_samples").get<std::size_t>();
  cfg.split_weights = j.at("split_weights").get<std::vector<double>>();
  return cfg;
}

struct GenerationResult {
  DatasetSplit split;
  std::vector<std::uint64_t> retried;  // samples regenerated at dt/2
};

/// Generates every sample into out_dir and writes dataset.json. Samples depend
/// only on (rng_seed, sample_id), so the worker count does not change any byte.
/// A diverging sample is retried once at dt/2; a second failure aborts the run.
inline GenerationResult generate_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir,
                                         std::size_t threads = 1) {
  cfg.solver.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());

  GenerationResult result;
  result.split = make_split(cfg.n_samples, cfg.split_weights);

  std::vector<char> retried(cfg.n_samples, 0);
  std::vector<std::string> errors(cfg.n_samples);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t id = next++; id < cfg.n_samples; id = next++) {
      try {
        Trajectory t;
        try {
          t = simulate_sample(cfg, id, cfg.solver);
        } catch (const SolverDiverged&) {
          SolverConfig finer = cfg.solver;
          finer.dt *= 0.5;
          retried[id] = 1;
          t = simulate_sample(cfg, id, finer);
        }
        write_trajectory(out_dir / trajectory_filename(id), t);
      } catch (const std::exception& e) {
        errors[id] = e.what();
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(threads, cfg.n_samples));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t id = 0; id < cfg.n_samples; ++id) {
    if (!errors[id].empty()) {
      throw std::runtime_error("sample " + std::to_string(id) + " failed: " + errors[id]);
    }
    if (retried[id]) result.retried.push_back(id);
  }

  nlohmann::json seeds = nlohmann::json::array();
  for (std::size_t id = 0; id < cfg.n_samples; ++id) seeds.push_back(sample_seed(cfg.solver.rng_seed, id));
  const nlohmann::json meta = {
      {"format_version", kDatasetFormatVersion},
      {"config", to_json(cfg)},
      {"file_pattern", "sample_NNNNNN.nstj"},
      {"sample_seeds", seeds},
      {"retried_at_half_dt", result.retried},
      {"split", {{"train", result.split.train}, {"validation", result.split.validation}, {"test", result.split.test}}},
  };
  const auto meta_path = out_dir / "dataset.json";
  std::ofstream out(meta_path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + meta_path.string() + " for writing");
  out << meta.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + meta_path.string());
  return result;
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const auto meta_path = dir / "dataset.json";
  std::ifstream in(meta_path);
  if (!in) throw std::runtime_error("cannot open " + meta_path.string());
  const auto meta = nlohmann::json::parse(in);
  if (meta.at("format_version").get<int>() != kDatasetFormatVersion) {
    throw std::runtime_error(meta_path.string() + ": unsupported format_version");
  }
  Dataset ds;
  ds.config = dataset_config_from_json(meta.at("config"));
  const auto& split = meta.at("split");
  ds.split.train = split.at("train").get<std::vector<std::uint64_t>>();
  ds.split.validation = split.at("validation").get<std::vector<std::uint64_t>>();
  ds.split.test = split.at("test").get<std::vector<std::uint64_t>>();
  const auto seeds = meta.at("sample_seeds").get<std::vector<std::uint64_t>>();
  for (std::uint64_t id = 0; id < ds.config.n_samples; ++id) {
    Trajectory t = read_trajectory(dir / trajectory_filename(id));
    t.sample_id = id;
    t.seed = id < seeds.size() ? seeds[id] : 0;
    ds.samples.emplace(id, std::move(t));
  }
  return ds;
}

}  // namespace pderoll::datagen
