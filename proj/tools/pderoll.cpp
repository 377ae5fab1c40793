// pderoll: dataset generation, training, evaluation, plotting and the
// multi-seed scheme comparison, driven by one manifest file.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pderoll/config/pipeline.hpp"
#include "pderoll/trainer/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace pderoll;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::size_t threads = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> precision;
  std::optional<std::string> model;
  std::optional<std::string> scheme;
};

void add_common(CLI::App* app, Common& c, bool needs_out = true) {
  app->add_option("--config", c.config, "run manifest")->required()->check(CLI::ExistingFile);
  auto* out = app->add_option("--out", c.out, "output directory");
  if (needs_out) out->required();
  app->add_option("--threads", c.threads, "worker threads; 1 is strictly deterministic")->check(CLI::PositiveNumber);
  app->add_option("--seed", c.seed, "override the manifest master seed");
  app->add_option("--precision", c.precision, "single | double")->check(CLI::IsMember({"single", "double"}));
}

config::RunManifest effective_manifest(const Common& c) {
  auto m = config::load_manifest(c.config);
  if (c.seed) m.seed = *c.seed;
  if (c.precision) m.training.precision = trainer::parse_precision(*c.precision);
  if (c.model) m.model = models::parse_model_kind(*c.model);
  if (c.scheme) m.training.scheme = rollout::parse_scheme(*c.scheme);
  config::check_manifest(m, c.config, 0);
  return m;
}

config::RunOptions run_options(const Common& c) {
  config::RunOptions o;
  o.threads = c.threads;
  o.progress = [](const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); };
  return o;
}

template <class Fn>
int dispatch(trainer::Precision p, Fn&& fn) {
  return p == trainer::Precision::single ? fn.template operator()<float>() : fn.template operator()<double>();
}

int fail_nonfinite(const fs::path& dir, const std::string& what) {
  config::write_failed_marker(dir, "non-finite " + what);
  std::fprintf(stderr, "error: non-finite %s\n", what.c_str());
  return 3;
}

int gen_data(const Common& c) {
  const auto m = effective_manifest(c);
  const auto ds = config::ensure_dataset(m, m.seed, c.out, run_options(c));
  for (const auto& [id, traj] : ds.samples) {
    for (double v : traj.values) {
      if (!std::isfinite(v)) return fail_nonfinite(c.out, "value in sample " + std::to_string(id));
    }
  }
  std::printf("%zu samples (train %zu, validation %zu, test %zu) in %s\n", ds.samples.size(), ds.split.train.size(),
              ds.split.validation.size(), ds.split.test.size(), c.out.c_str());
  return 0;
}

int train(const Common& c, const std::string& data) {
  const auto m = effective_manifest(c);
  const auto opt = run_options(c);
  const fs::path out = c.out;
  const auto ds = data.empty() ? config::ensure_dataset(m, m.seed, out / "data", opt) : datagen::load_dataset(data);
  const auto r = config::resolve(m, m.seed, m.model);
  return dispatch(m.training.precision, [&]<class T>() {
    const auto init = models::init_params<T>(r.model, r.init_seed);
    const auto run = config::train_and_evaluate<T>(m, r, m.training.scheme, init, ds, out, opt);
    for (const auto& row : run.result.log) {
      if (!std::isfinite(row.train_loss) || !std::isfinite(row.val_rel_l2)) return fail_nonfinite(out, "training log");
    }
    if (!std::isfinite(run.report.mean_rel_l2)) return fail_nonfinite(out / "eval", "test error");
    std::printf("best epoch %zu, validation %.6g, test mean_rel_l2 %.6g\n", run.result.best_epoch,
                run.result.best_val_rel_l2, run.report.mean_rel_l2);
    return 0;
  });
}

int evaluate(const Common& c, const std::string& data, const std::string& ckpt_path) {
  const auto m = effective_manifest(c);
  const auto ckpt = trainer::load_checkpoint(ckpt_path);
  const auto ds = datagen::load_dataset(data);
  return dispatch(m.training.precision, [&]<class T>() {
    auto params = trainer::store_from<T>(ckpt.params);
    models::StepModel<T> model(ckpt.model, params.frozen());
    const auto report = config::evaluate_into<T>(m, model, params, ds, c.out, run_options(c));
    if (!std::isfinite(report.mean_rel_l2)) return fail_nonfinite(c.out, "test error");
    std::printf("mean_rel_l2 %.6g over %zu samples (%zu excluded)\n", report.mean_rel_l2,
                report.per_sample_rel_l2.size(), report.excluded);
    return 0;
  });
}

int plot(const std::vector<std::string>& curves, std::vector<std::string> labels, const std::string& out,
         const std::string& title) {
  if (!labels.empty() && labels.size() != curves.size()) {
    throw std::invalid_argument("plot: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(curves.size()) + " curves");
  }
  std::vector<config::Series> series;
  std::optional<double> rule;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto label = labels.empty() ? fs::path(curves[i]).parent_path().string() : labels[i];
    auto [s, boundary] = config::curve_series(eval::read_curve(curves[i]), label.empty() ? curves[i] : label);
    if (rule && *rule != boundary) throw std::invalid_argument("plot: curves disagree on the extrapolation boundary");
    rule = boundary;
    series.push_back(std::move(s));
  }
  config::ChartLabels l;
  if (!title.empty()) l.title = title;
  const auto svg = config::render_line_chart(series, rule, l);
  std::ofstream f(out, std::ios::trunc);
  f << svg;
  if (!f) throw std::runtime_error("cannot write " + out);
  return 0;
}

int repro(const Common& c) {
  const auto m = effective_manifest(c);
  return dispatch(m.training.precision, [&]<class T>() {
    const auto r = config::run_repro<T>(m, c.out, run_options(c));
    std::ifstream summary(fs::path(c.out) / "summary.csv");
    std::cout << summary.rdbuf();
    for (const auto& f : r.failures) std::fprintf(stderr, "failed: %s\n", f.c_str());
    if (!r.failures.empty()) return 1;
    if (!r.all_finite()) return fail_nonfinite(c.out, "error in summary");
    return 0;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Autoregressive PDE surrogate training under free rollout, teacher forcing and curriculum"};
  app.require_subcommand(1);

  Common gen_opts, train_opts, eval_opts, repro_opts;
  std::string train_data, eval_data, eval_ckpt;

  auto* gen = app.add_subcommand("gen-data", "generate the vorticity dataset");
  add_common(gen, gen_opts);

  auto* tr = app.add_subcommand("train", "train one model under one scheme, then evaluate its best checkpoint");
  add_common(tr, train_opts);
  tr->add_option("--data", train_data, "dataset directory (generated into <out>/data when omitted)")
      ->check(CLI::ExistingDirectory);
  tr->add_option("--model", train_opts.model, "fno2d | unet")->check(CLI::IsMember({"fno2d", "unet"}));
  tr->add_option("--scheme", train_opts.scheme, "free_rollout | teacher_forcing | curriculum")
      ->check(CLI::IsMember({"free_rollout", "teacher_forcing", "curriculum"}));

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(ev, eval_opts);
  ev->add_option("--data", eval_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);

  std::vector<std::string> curves, labels;
  std::string plot_out, plot_title;
  auto* pl = app.add_subcommand("plot", "render curve.csv files to an SVG line chart");
  pl->add_option("curves", curves, "curve.csv files")->required()->check(CLI::ExistingFile);
  pl->add_option("--label", labels, "one label per curve");
  pl->add_option("--title", plot_title, "chart title");
  pl->add_option("--out", plot_out, "SVG path")->required();

  auto* rp = app.add_subcommand("repro", "three-scheme comparison over the manifest's models and seeds");
  add_common(rp, repro_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return gen_data(gen_opts);
    if (tr->parsed()) return train(train_opts, train_data);
    if (ev->parsed()) return evaluate(eval_opts, eval_data, eval_ckpt);
    if (pl->parsed()) return plot(curves, labels, plot_out, plot_title);
    if (rp->parsed()) return repro(repro_opts);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
