#pragma once

// Stages behind the command-line tool: dataset generation, training,
// evaluation and the multi-seed scheme comparison. Every artifact directory
// receives the canonical manifest that produced it, and a stage that throws
// leaves a FAILED file naming the error.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pderoll/config/manifest.hpp"
#include "pderoll/config/svg.hpp"
#include "pderoll/datagen/dataset.hpp"
#include "pderoll/eval/evaluate.hpp"
#include "pderoll/models/step_model.hpp"
#include "pderoll/trainer/train.hpp"

namespace pderoll::config {

namespace fs = std::filesystem;

struct RunOptions {
  std::size_t threads = 1;
  std::function<void(const std::string&)> progress;  // optional status lines
};

inline void report(const RunOptions& opt, const std::string& line) {
  if (opt.progress) opt.progress(line);
}

inline void write_failed_marker(const fs::path& dir, const std::string& message) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream(dir / "FAILED", std::ios::trunc) << message << '\n';
}

/// Runs fn; on exception writes dir/FAILED and rethrows.
template <class Fn>
auto with_failure_marker(const fs::path& dir, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    write_failed_marker(dir, e.what());
    throw;
  }
}

inline void stamp(const fs::path& dir, const RunManifest& m) {
  fs::create_directories(dir);
  write_manifest(dir / "manifest.ini", m);
}

/// Generates the dataset for `master` into dir, or loads it when dir already
/// holds one generated from the same configuration.
inline datagen::Dataset ensure_dataset(const RunManifest& m, std::uint64_t master, const fs::path& dir,
                                       const RunOptions& opt) {
  const auto cfg = resolve(m, master, m.model).dataset;
  if (fs::exists(dir / "dataset.json")) {
    auto ds = datagen::load_dataset(dir);
    if (datagen::to_json(ds.config) == datagen::to_json(cfg)) return ds;
    throw std::runtime_error(dir.string() + " holds a dataset with a different configuration");
  }
  return with_failure_marker(dir, [&] {
    stamp(dir, m);
    report(opt, "generating " + std::to_string(cfg.n_samples) + " trajectories into " + dir.string());
    datagen::generate_dataset(cfg, dir, opt.threads);
    return datagen::load_dataset(dir);
  });
}

inline eval::Horizon horizon_of(const RunManifest& m) {
  return {m.training.t_in, m.t_train_end(), m.eval.t_total};
}

/// Evaluates params on the test split and writes report.csv, curve.csv,
/// eval.json and snapshots/ into dir.
template <class T>
eval::EvalReport evaluate_into(const RunManifest& m, const models::StepModel<T>& model,
                               const ParameterStore<T>& params, const datagen::Dataset& ds, const fs::path& dir,
                               const RunOptions& opt) {
  return with_failure_marker(dir, [&] {
    stamp(dir, m);
    const auto frozen = params.frozen();
    auto step = [&](const Var<T>& w) { return model(frozen, w); };
    const auto r = eval::evaluate<T>(step, ds, ds.split.test, horizon_of(m), opt.threads);
    eval::write_report(dir, r);
    if (!m.eval.snapshot_frames.empty() && !ds.split.test.empty()) {
      const auto id = ds.split.test.at(std::min(m.eval.snapshot_sample, ds.split.test.size() - 1));
      eval::export_snapshots<T>(step, ds.sample(id), m.training.t_in, m.eval.t_total, m.eval.snapshot_frames,
                                dir / "snapshots");
    }
    return r;
  });
}

template <class T>
struct TrainedRun {
  trainer::TrainResult<T> result;
  eval::EvalReport report;
};

/// Trains one (model, scheme) from the given initialization and evaluates the
/// best-validation parameters.
template <class T>
TrainedRun<T> train_and_evaluate(const RunManifest& m, const Resolved& r, rollout::Scheme scheme,
                                 const ParameterStore<T>& init, const datagen::Dataset& ds, const fs::path& dir,
                                 const RunOptions& opt) {
  return with_failure_marker(dir, [&] {
    stamp(dir, m);
    auto cfg = r.training;
    cfg.scheme = scheme;
    models::StepModel<T> model(r.model, init.frozen());
    trainer::TrainOptions topt;
    topt.out_dir = dir;
    topt.threads = opt.threads;
    const std::string tag = models::to_string(r.model.kind) + "/" + rollout::to_string(scheme);
    topt.on_epoch = [&](const trainer::EpochLog& row) {
      char buf[200];
      std::snprintf(buf, sizeof buf, "%s epoch %zu/%zu e=%.3f lr=%.2e loss=%.4e val=%.4f", tag.c_str(),
                    row.epoch + 1, cfg.epochs, row.e, row.lr, row.train_loss, row.val_rel_l2);
      report(opt, buf);
    };
    TrainedRun<T> run{trainer::train(model, ds, cfg, topt), {}};
    run.report = evaluate_into(m, model, run.result.best_params, ds, dir / "eval", opt);
    return run;
  });
}

struct SummaryRow {
  std::uint64_t seed;
  rollout::Scheme scheme;
  models::ModelKind model;
  double mean_rel_l2;
  double extrapolation_error;
};

inline void write_summary(const fs::path& path, const std::vector<SummaryRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  out << "scheme,model,mean_rel_l2\n";
  for (const auto& r : rows) {
    out << rollout::to_string(r.scheme) << ',' << models::to_string(r.model) << ','
        << eval::format_real(r.mean_rel_l2) << '\n';
  }
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

inline void write_summary_by_seed(const fs::path& path, const std::vector<SummaryRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  out << "seed,scheme,model,mean_rel_l2,extrapolation_error\n";
  for (const auto& r : rows) {
    out << r.seed << ',' << rollout::to_string(r.scheme) << ',' << models::to_string(r.model) << ','
        << eval::format_real(r.mean_rel_l2) << ',' << eval::format_real(r.extrapolation_error) << '\n';
  }
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

struct ReproResult {
  std::vector<SummaryRow> rows;  // seed-major, then model, then scheme
  std::vector<std::string> failures;

  bool all_finite() const {
    for (const auto& r : rows) {
      if (!std::isfinite(r.mean_rel_l2) || !std::isfinite(r.extrapolation_error)) return false;
    }
    return true;
  }
};

/// For each seed: one dataset, one initialization per model shared by every
/// scheme, then train and evaluate each scheme. Writes summary.csv (mean over
/// seeds), summary_by_seed.csv, and per-seed summaries and curve charts.
template <class T>
ReproResult run_repro(const RunManifest& m, const fs::path& out, const RunOptions& opt) {
  stamp(out, m);
  ReproResult result;
  for (auto seed : m.repro.seeds) {
    const fs::path seed_dir = out / ("seed_" + std::to_string(seed));
    stamp(seed_dir, m);
    const auto ds = ensure_dataset(m, seed, seed_dir / "data", opt);
    std::vector<SummaryRow> seed_rows;
    for (auto kind : m.repro.models) {
      const auto r = resolve(m, seed, kind);
      const auto init = models::init_params<T>(r.model, r.init_seed);
      stamp(seed_dir / models::to_string(kind), m);
      std::vector<Series> curves;
      double boundary = static_cast<double>(m.t_train_end());
      for (auto scheme : m.repro.schemes) {
        const fs::path dir = seed_dir / models::to_string(kind) / rollout::to_string(scheme);
        SummaryRow row{seed, scheme, kind, std::nan(""), std::nan("")};
        try {
          const auto run = train_and_evaluate<T>(m, r, scheme, init, ds, dir, opt);
          row.mean_rel_l2 = run.report.mean_rel_l2;
          row.extrapolation_error = run.report.extrapolation_mean();
          auto [series, rule] = curve_series(eval::read_curve(dir / "eval" / "curve.csv"), rollout::to_string(scheme));
          curves.push_back(std::move(series));
          boundary = rule;
        } catch (const std::exception& e) {
          result.failures.push_back(dir.string() + ": " + e.what());
          report(opt, "FAILED " + dir.string() + ": " + e.what());
        }
        seed_rows.push_back(row);
        result.rows.push_back(row);
      }
      if (!curves.empty()) {
        ChartLabels labels;
        labels.title = models::to_string(kind) + " rollout error, seed " + std::to_string(seed);
        std::ofstream(seed_dir / models::to_string(kind) / "curves.svg", std::ios::trunc)
            << render_line_chart(curves, boundary, labels);
      }
    }
    write_summary(seed_dir / "summary.csv", seed_rows);
  }

  std::vector<SummaryRow> mean_rows;
  for (auto kind : m.repro.models) {
    for (auto scheme : m.repro.schemes) {
      SummaryRow agg{0, scheme, kind, 0.0, 0.0};
      double n = 0;
      for (const auto& r : result.rows) {
        if (r.model == kind && r.scheme == scheme) {
          agg.mean_rel_l2 += r.mean_rel_l2;
          agg.extrapolation_error += r.extrapolation_error;
          ++n;
        }
      }
      agg.mean_rel_l2 /= n;
      agg.extrapolation_error /= n;
      mean_rows.push_back(agg);
    }
  }
  write_summary(out / "summary.csv", mean_rows);
  write_summary_by_seed(out / "summary_by_seed.csv", result.rows);
  if (!result.failures.empty() || !result.all_finite()) {
    std::string msg = result.failures.empty() ? "non-finite error in summary" : result.failures.front();
    write_failed_marker(out, msg);
  }
  return result;
}

}  // namespace pderoll::config
