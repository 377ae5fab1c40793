#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pderoll/datagen/dataset.hpp"
#include "pderoll/eval/metrics.hpp"
#include "pderoll/numerics/parallel.hpp"
#include "pderoll/rollout/rollout.hpp"

namespace pderoll::eval {

/// Frame indices: the model sees [0, t_in), training covered [t_in, t_train_end),
/// and [t_train_end, t_total) is extrapolation.
struct Horizon {
  std::size_t t_in = 10;
  std::size_t t_train_end = 20;
  std::size_t t_total = 25;

  void validate() const {
    if (!(t_in > 0 && t_in < t_train_end && t_train_end <= t_total)) {
      throw std::invalid_argument("eval horizon needs 0 < t_in < t_train_end <= t_total, got " +
                                  std::to_string(t_in) + ", " + std::to_string(t_train_end) + ", " +
                                  std::to_string(t_total));
    }
  }
  std::size_t steps() const { return t_total - t_in; }
  bool extrapolating(std::size_t frame) const { return frame >= t_train_end; }
};

struct EvalReport {
  Horizon horizon;
  std::vector<std::uint64_t> sample_ids;
  std::vector<std::optional<double>> per_sample_rel_l2;  // whole rollout t_in..t_total
  double mean_rel_l2 = 0.0;
  std::size_t excluded = 0;
  std::vector<double> per_timestep_error;  // entry k is frame t_in + k, averaged over samples

  /// Mean of the curve over the extrapolation region.
  double extrapolation_mean() const {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < per_timestep_error.size(); ++k) {
      if (horizon.extrapolating(horizon.t_in + k)) {
        s += per_timestep_error[k];
        ++n;
      }
    }
    return n > 0 ? s / static_cast<double>(n) : std::nan("");
  }
};

/// Free rollout from the first t_in frames; relative L2 per generated frame.
template <class T, class StepFn>
std::vector<std::optional<double>> rollout_error_curve(StepFn&& step, const datagen::Trajectory& traj,
                                                       std::size_t t_in, std::size_t t_total) {
  if (traj.n_frames < t_total) throw rollout::InsufficientFrames(t_total, traj.n_frames);
  rollout::ScheduleState state(rollout::Scheme::free_rollout, 0.0, 0);
  const auto r = rollout::rollout<T>(step, traj, state, t_in, t_total - t_in);
  std::vector<std::optional<double>> curve;
  curve.reserve(r.predictions.size());
  for (std::size_t k = 0; k < r.predictions.size(); ++k) {
    curve.push_back(relative_l2(std::span<const T>(r.predictions[k].value().data), traj.frame(t_in + k)));
  }
  return curve;
}

/// Per-sample and per-timestep errors of `step` under free rollout. Samples are
/// independent; the report is assembled in id order.
template <class T, class StepFn>
EvalReport evaluate(StepFn&& step, const datagen::Dataset& ds, const std::vector<std::uint64_t>& ids,
                    const Horizon& horizon, std::size_t threads = 1) {
  horizon.validate();
  EvalReport report;
  report.horizon = horizon;
  report.sample_ids = ids;
  const std::size_t steps = horizon.steps();
  std::vector<std::optional<double>> whole(ids.size());
  std::vector<std::vector<double>> error_sq(ids.size()), target_sq(ids.size());

  parallel_for(ids.size(), threads, [&](std::size_t i) {
    const auto& traj = ds.sample(ids[i]);
    if (traj.n_frames < horizon.t_total) throw rollout::InsufficientFrames(horizon.t_total, traj.n_frames);
    rollout::ScheduleState state(rollout::Scheme::free_rollout, 0.0, 0);
    const auto r = rollout::rollout<T>(step, traj, state, horizon.t_in, steps);
    L2Accumulator total;
    for (std::size_t k = 0; k < steps; ++k) {
      L2Accumulator frame;
      frame.add(std::span<const T>(r.predictions[k].value().data), traj.frame(horizon.t_in + k));
      error_sq[i].push_back(frame.error_sq);
      target_sq[i].push_back(frame.target_sq);
      total.error_sq += frame.error_sq;
      total.target_sq += frame.target_sq;
    }
    whole[i] = total.ratio();
  });

  report.per_sample_rel_l2 = whole;
  const auto m = mean_defined(whole);
  report.mean_rel_l2 = m.mean;
  report.excluded = m.excluded;
  for (std::size_t k = 0; k < steps; ++k) {
    std::vector<std::optional<double>> at_k(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (target_sq[i][k] > 0.0) at_k[i] = std::sqrt(error_sq[i][k]) / std::sqrt(target_sq[i][k]);
    }
    report.per_timestep_error.push_back(mean_defined(at_k).mean);
  }
  return report;
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// report.csv (one row per sample), curve.csv and eval.json.
inline void write_report(const std::filesystem::path& dir, const EvalReport& r) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.csv", std::ios::trunc);
    out << "sample_id,rel_l2\n";
    for (std::size_t i = 0; i < r.sample_ids.size(); ++i) {
      out << r.sample_ids[i] << ',' << (r.per_sample_rel_l2[i] ? format_real(*r.per_sample_rel_l2[i]) : "undefined")
          << '\n';
    }
    if (!out) throw std::runtime_error("cannot write " + (dir / "report.csv").string());
  }
  {
    std::ofstream out(dir / "curve.csv", std::ios::trunc);
    out << "step,mean_error,region\n";
    for (std::size_t k = 0; k < r.per_timestep_error.size(); ++k) {
      const std::size_t frame = r.horizon.t_in + k;
      out << frame << ',' << format_real(r.per_timestep_error[k]) << ','
          << (r.horizon.extrapolating(frame) ? "extrap" : "interp") << '\n';
    }
    if (!out) throw std::runtime_error("cannot write " + (dir / "curve.csv").string());
  }
  const nlohmann::json summary = {{"mean_rel_l2", r.mean_rel_l2},
                                  {"excluded", r.excluded},
                                  {"samples", r.sample_ids.size()},
                                  {"extrapolation_mean_error", r.extrapolation_mean()},
                                  {"t_in", r.horizon.t_in},
                                  {"t_train_end", r.horizon.t_train_end},
                                  {"t_total", r.horizon.t_total}};
  std::ofstream out(dir / "eval.json", std::ios::trunc);
  out << summary.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + (dir / "eval.json").string());
}

struct CurveRow {
  std::size_t step;
  double mean_error;
  std::string region;
};

inline std::vector<CurveRow> read_curve(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "step,mean_error,region") throw std::runtime_error(path.string() + ": unexpected header '" + line + "'");
  std::vector<CurveRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto a = line.find(','), b = line.rfind(',');
    try {
      if (a == std::string::npos || a == b) throw std::invalid_argument("expected three fields");
      CurveRow row{std::stoul(line.substr(0, a)), std::stod(line.substr(a + 1, b - a - 1)), line.substr(b + 1)};
      if (row.region != "interp" && row.region != "extrap") throw std::invalid_argument("bad region " + row.region);
      rows.push_back(row);
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

namespace snapshot_detail {

inline void write_pgm(const std::filesystem::path& path, std::size_t h, std::size_t w,
                      const std::vector<unsigned char>& pixels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "P5\n" << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

inline void write_f32(const std::filesystem::path& path, const std::vector<float>& values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

// Linear map of [lo, hi] onto 0..255.
inline std::vector<unsigned char> grayscale(const std::vector<float>& v, double lo, double hi) {
  std::vector<unsigned char> px(v.size());
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    px[i] = static_cast<unsigned char>(std::clamp(std::lround(255.0 * (v[i] - lo) / span), 0L, 255L));
  }
  return px;
}

// Symmetric map with zero at 128: ±max|d| onto 1..255.
inline std::vector<unsigned char> diverging(const std::vector<float>& d) {
  double m = 0.0;
  for (float x : d) m = std::max(m, std::abs(static_cast<double>(x)));
  std::vector<unsigned char> px(d.size(), 128);
  if (m == 0.0) return px;
  for (std::size_t i = 0; i < d.size(); ++i) px[i] = static_cast<unsigned char>(128 + std::lround(127.0 * d[i] / m));
  return px;
}

}  // namespace snapshot_detail

inline std::vector<float> read_f32(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<float> v(bytes / sizeof(float));
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  return v;
}

/// For each requested frame index s in [t_in, t_total): target_s, prediction_s and
/// difference_s (prediction - target) as PGM images and headerless little-endian
/// f32 dumps of H×W values.
template <class T, class StepFn>
void export_snapshots(StepFn&& step, const datagen::Trajectory& traj, std::size_t t_in, std::size_t t_total,
                      const std::vector<std::size_t>& frames, const std::filesystem::path& dir) {
  for (auto s : frames) {
    if (s < t_in || s >= t_total) {
      throw std::out_of_range("snapshot frame " + std::to_string(s) + " outside the rollout range [" +
                              std::to_string(t_in) + ", " + std::to_string(t_total) + ")");
    }
  }
  if (frames.empty()) return;
  if (traj.n_frames < t_total) throw rollout::InsufficientFrames(t_total, traj.n_frames);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  const std::size_t last = *std::max_element(frames.begin(), frames.end());
  rollout::ScheduleState state(rollout::Scheme::free_rollout, 0.0, 0);
  const auto r = rollout::rollout<T>(step, traj, state, t_in, last + 1 - t_in);
  for (auto s : frames) {
    const auto& pred = r.predictions[s - t_in].value().data;
    const auto target = traj.frame(s);
    std::vector<float> p(pred.begin(), pred.end()), t(target.begin(), target.end()), d(p.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<float>(static_cast<double>(pred[i]) - target[i]);
    double lo = t[0], hi = t[0];
    for (std::size_t i = 0; i < t.size(); ++i) {
      lo = std::min({lo, double(t[i]), double(p[i])});
      hi = std::max({hi, double(t[i]), double(p[i])});
    }
    const std::string tag = std::to_string(s);
    using namespace snapshot_detail;
    write_pgm(dir / ("target_" + tag + ".pgm"), traj.h, traj.w, grayscale(t, lo, hi));
    write_pgm(dir / ("prediction_" + tag + ".pgm"), traj.h, traj.w, grayscale(p, lo, hi));
    write_pgm(dir / ("difference_" + tag + ".pgm"), traj.h, traj.w, diverging(d));
    write_f32(dir / ("target_" + tag + ".f32"), t);
    write_f32(dir / ("prediction_" + tag + ".f32"), p);
    write_f32(dir / ("difference_" + tag + ".f32"), d);
  }
}

}  // namespace pderoll::eval
