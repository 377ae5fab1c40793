#pragma once

// Training loop. Each sample of a batch is rolled out on its own clone of the
// parameters, so per-sample gradients are independent of scheduling; they are
// then summed in sample order. Results are therefore identical for every
// thread count.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pderoll/datagen/dataset.hpp"
#include "pderoll/eval/metrics.hpp"
#include "pderoll/models/step_model.hpp"
#include "pderoll/numerics/parallel.hpp"
#include "pderoll/numerics/random.hpp"
#include "pderoll/rollout/rollout.hpp"
#include "pderoll/trainer/checkpoint.hpp"
#include "pderoll/trainer/config.hpp"
#include "pderoll/trainer/optim.hpp"

namespace pderoll::trainer {

inline constexpr std::uint64_t kScheduleStream = 0x5C4E;
inline constexpr std::uint64_t kShuffleStream = 0x5F1E;

struct EpochLog {
  std::size_t epoch = 0;
  double e = 0.0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_rel_l2 = 0.0;
};

inline std::string csv_header() { return "epoch,e,lr,train_loss,val_rel_l2"; }

inline std::string csv_row(const EpochLog& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g", r.epoch, r.e, r.lr, r.train_loss, r.val_rel_l2);
  return buf;
}

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: nothing is written
  std::size_t threads = 1;
  std::function<void(const EpochLog&)> on_epoch;
};

template <class T>
struct TrainResult {
  ParameterStore<T> final_params;
  ParameterStore<T> best_params;
  std::size_t best_epoch = 0;  // epochs completed when the best parameters were taken
  double best_val_rel_l2 = std::numeric_limits<double>::infinity();
  std::vector<EpochLog> log;
};

/// Seeded Fisher-Yates permutation of the training ids for one epoch.
inline std::vector<std::uint64_t> epoch_order(std::vector<std::uint64_t> ids, std::uint64_t seed, std::size_t epoch) {
  RandomStream rng(derive_seed(seed, {kShuffleStream, epoch}));
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.next() % i]);
  return ids;
}

/// Seed of the schedule stream for one sample in one epoch.
inline std::uint64_t schedule_seed(std::uint64_t seed, std::size_t epoch, std::uint64_t sample_id) {
  return derive_seed(seed, {kScheduleStream, epoch, sample_id});
}

/// Mean relative L2 under free rollout over `ids`, t_in -> t_in + t_out.
template <class T>
double validation_rel_l2(const models::StepModel<T>& model, const ParameterStore<T>& params,
                         const datagen::Dataset& ds, const std::vector<std::uint64_t>& ids, std::size_t t_in,
                         std::size_t t_out, std::size_t threads) {
  if (ids.empty()) return std::nan("");
  const auto frozen = params.frozen();
  std::vector<std::optional<double>> per_sample(ids.size());
  parallel_for(ids.size(), threads, [&](std::size_t i) {
    const auto& traj = ds.sample(ids[i]);
    rollout::ScheduleState state(rollout::Scheme::free_rollout, 0.0, 0);
    auto r = rollout::rollout<T>([&](const Var<T>& w) { return model(frozen, w); }, traj, state, t_in, t_out);
    per_sample[i] = eval::relative_l2(r.predictions, traj, t_in);
  });
  return eval::mean_defined(per_sample).mean;
}

namespace train_detail {

template <class T>
void write_checkpoint(const TrainOptions& opt, const std::string& name, const models::StepModel<T>& model,
                      const TrainConfig& cfg, std::size_t epoch, const ParameterStore<T>& params, const Adam& adam,
                      std::optional<double> val) {
  if (opt.out_dir.empty()) return;
  save_checkpoint(opt.out_dir / name, make_checkpoint(model.config(), cfg, epoch, params, adam, val));
}

}  // namespace train_detail

/// Trains `model` in place on the dataset's training split. Writes
/// train_log.csv, best.ckpt and final.ckpt when opt.out_dir is set; on
/// divergence, last_good.ckpt holds the parameters before the failed update
/// and TrainingDiverged propagates.
template <class T>
TrainResult<T> train(models::StepModel<T>& model, const datagen::Dataset& ds, const TrainConfig& cfg,
                     const TrainOptions& opt = {}) {
  cfg.validate();
  const auto& train_ids = ds.split.train;
  if (train_ids.empty()) throw std::invalid_argument("train: the training split is empty");
  for (auto id : train_ids) {
    const auto& traj = ds.sample(id);
    if (traj.n_frames < cfg.t_in + cfg.t_out) {
      throw rollout::InsufficientFrames(cfg.t_in + cfg.t_out, traj.n_frames);
    }
    model.check_grid(traj.h, traj.w);
  }
  if (model.config().history_len != cfg.t_in) {
    throw std::invalid_argument("train: model history_len " + std::to_string(model.config().history_len) +
                                " differs from t_in " + std::to_string(cfg.t_in));
  }
  if (!opt.out_dir.empty()) std::filesystem::create_directories(opt.out_dir);

  auto& params = model.params();
  Adam adam(params);
  TrainResult<T> result;
  std::ofstream log_file;
  if (!opt.out_dir.empty()) {
    log_file.open(opt.out_dir / "train_log.csv", std::ios::trunc);
    if (!log_file) throw std::runtime_error("cannot write " + (opt.out_dir / "train_log.csv").string());
    log_file << csv_header() << '\n';
  }

  auto validate_now = [&] {
    return validation_rel_l2(model, params, ds, ds.split.validation, cfg.t_in, cfg.t_out, opt.threads);
  };
  auto as_optional = [](double v) { return std::isnan(v) ? std::nullopt : std::optional<double>(v); };

  const double initial_val = validate_now();
  result.best_params = params.frozen();
  result.best_val_rel_l2 = std::isnan(initial_val) ? std::numeric_limits<double>::infinity() : initial_val;
  train_detail::write_checkpoint(opt, "best.ckpt", model, cfg, 0, params, adam, as_optional(initial_val));

  const std::size_t n_entries = params.size();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double e = ratio_for_epoch(epoch, cfg);
    const double lr = lr_at(epoch, cfg);
    const auto order = epoch_order(train_ids, cfg.seed, epoch);
    double loss_sum = 0.0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t batch = std::min(cfg.batch_size, order.size() - start);
      std::vector<std::vector<std::vector<T>>> sample_grads(batch);
      std::vector<double> sample_loss(batch);

      parallel_for(batch, opt.threads, [&](std::size_t b) {
        const std::uint64_t id = order[start + b];
        const auto& traj = ds.sample(id);
        auto local = params.clone();
        rollout::ScheduleState state(cfg.scheme, e, schedule_seed(cfg.seed, epoch, id));
        auto r = rollout::rollout<T>([&](const Var<T>& w) { return model(local, w); }, traj, state, cfg.t_in,
                                     cfg.t_out);
        std::vector<Var<T>> targets;
        targets.reserve(cfg.t_out);
        for (std::size_t k = 0; k < cfg.t_out; ++k) targets.push_back(rollout::recorded_frame<T>(traj, cfg.t_in + k));
        auto loss = sequence_mse(r.predictions, targets);
        backward(loss);
        sample_loss[b] = static_cast<double>(loss.value()[0]);
        auto& g = sample_grads[b];
        g.resize(n_entries);
        for (std::size_t i = 0; i < n_entries; ++i) {
          const auto src = local.entries()[i].var.grad();
          g[i].assign(local.entries()[i].var.size(), T(0));
          if (!src.empty()) std::copy(src.begin(), src.end(), g[i].begin());
        }
      });

      std::vector<std::vector<double>> grads(n_entries);
      for (std::size_t i = 0; i < n_entries; ++i) grads[i].assign(params.entries()[i].var.size(), 0.0);
      for (std::size_t b = 0; b < batch; ++b) {
        loss_sum += sample_loss[b];
        for (std::size_t i = 0; i < n_entries; ++i) {
          for (std::size_t j = 0; j < grads[i].size(); ++j) grads[i][j] += static_cast<double>(sample_grads[b][i][j]);
        }
      }
      const double inv = 1.0 / static_cast<double>(batch);
      for (auto& g : grads) {
        for (double& v : g) v *= inv;
      }
      if (cfg.grad_clip > 0.0) clip_global_norm(grads, cfg.grad_clip);
      try {
        adam.step(params, grads, lr, epoch);
      } catch (const TrainingDiverged&) {
        train_detail::write_checkpoint(opt, "last_good.ckpt", model, cfg, epoch, params, adam, std::nullopt);
        throw;
      }
    }

    EpochLog row{epoch, e, lr, loss_sum / static_cast<double>(order.size()), validate_now()};
    result.log.push_back(row);
    if (log_file) log_file << csv_row(row) << '\n' << std::flush;
    if (opt.on_epoch) opt.on_epoch(row);
    if (row.val_rel_l2 < result.best_val_rel_l2) {
      result.best_val_rel_l2 = row.val_rel_l2;
      result.best_epoch = epoch + 1;
      result.best_params = params.frozen();
      train_detail::write_checkpoint(opt, "best.ckpt", model, cfg, epoch + 1, params, adam, row.val_rel_l2);
    }
  }

  result.final_params = params.frozen();
  train_detail::write_checkpoint(opt, "final.ckpt", model, cfg, cfg.epochs, params, adam,
                                 result.log.empty() ? as_optional(initial_val)
                                                    : std::optional<double>(result.log.back().val_rel_l2));
  return result;
}

}  // namespace pderoll::trainer
