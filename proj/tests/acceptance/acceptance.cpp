// Acceptance checks 1-7. Prints one PASS/FAIL line per criterion and exits
// nonzero if any selected criterion fails.
//
//   acceptance [--criterion N]... [--repro-dir DIR] [--fresh]
//
// Criteria 1 and 2 read a desk-scale repro from --repro-dir. A directory whose
// manifest.ini equals the desk manifest and that finished without a FAILED
// marker is reused; otherwise the repro is run there first (hours on one core).

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "pderoll/config/pipeline.hpp"
#include "pderoll/datagen/grf.hpp"
#include "pderoll/datagen/solver.hpp"
#include "pderoll/models/spectral_conv.hpp"
#include "pderoll/numerics/grad_check.hpp"
#include "pderoll/trainer/checkpoint.hpp"
#include "pderoll/trainer/optim.hpp"

namespace fs = std::filesystem;
using namespace pderoll;
using V = Var<double>;
using C = std::complex<double>;

namespace {

// Tolerances and thresholds.
constexpr std::size_t kSeedsRequired = 2;        // wins needed out of 3 seeds
constexpr double kBernoulliLo = 0.494, kBernoulliHi = 0.506;
constexpr int kBernoulliDraws = 100000;
constexpr double kGradTol = 1e-5;
constexpr double kFdStep = 1e-5;
constexpr double kDftTol = 1e-10;
constexpr double kOracleTol = 1e-12;
constexpr double kHeatTol = 1e-6;
constexpr double kZeroModeTol = 1e-12;
constexpr std::size_t kDegenerateSamples = 10;

// Desk scale the repro must run at.
constexpr std::size_t kDeskGrid = 32, kDeskFrames = 25, kDeskTin = 10, kDeskTout = 10, kDeskEpochs = 50;
constexpr std::size_t kDeskTrain = 200, kDeskVal = 40, kDeskTest = 40;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back((ok ? "ok: " : "FAILED: ") + what);
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  RandomStream rng(seed);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

V probe(const V& y, std::uint64_t seed = 99) {
  auto r = V::constant(random_tensor(y.shape(), seed));
  return ops::sum(ops::mul(r, ops::mul(y, y)));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// ---------------------------------------------------------------- 1 and 2

fs::path source_path(const std::string& rel) { return fs::path(PDEROLL_SOURCE_DIR) / rel; }

config::RunManifest desk_manifest(Outcome& o) {
  const auto m = config::load_manifest(source_path("configs/desk.ini"));
  const auto counts = datagen::split_counts(m.dataset.n_samples, m.dataset.split_weights);
  o.require(m.dataset.solver.grid_size == kDeskGrid && m.dataset.solver.n_frames == kDeskFrames &&
                counts == std::vector<std::size_t>{kDeskTrain, kDeskVal, kDeskTest} &&
                m.training.t_in == kDeskTin && m.training.t_out == kDeskTout &&
                m.eval.t_total == kDeskFrames && m.training.epochs == kDeskEpochs && m.repro.seeds.size() == 3 &&
                m.repro.models.size() == 2 && m.repro.schemes.size() == 3,
            "desk manifest is 32x32, 200/40/40, 25 frames, 10+10+5, 50 epochs, 3 seeds, both models, 3 schemes");
  return m;
}

bool repro_reusable(const fs::path& dir, const config::RunManifest& m) {
  return fs::exists(dir / "manifest.ini") && slurp(dir / "manifest.ini") == config::to_text(m) &&
         fs::exists(dir / "summary_by_seed.csv") && !fs::exists(dir / "FAILED");
}

struct SeedRow {
  double mean_rel_l2, extrapolation;
};
using SeedTable = std::map<std::string, std::map<std::string, std::map<std::uint64_t, SeedRow>>>;  // model/scheme/seed

SeedTable read_seed_table(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  SeedTable t;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string seed, scheme, model, err, ext;
    std::getline(ss, seed, ',');
    std::getline(ss, scheme, ',');
    std::getline(ss, model, ',');
    std::getline(ss, err, ',');
    std::getline(ss, ext, ',');
    t[model][scheme][std::stoull(seed)] = {std::stod(err), std::stod(ext)};
  }
  return t;
}

const SeedTable* desk_table(const fs::path& dir, bool fresh, Outcome& o) {
  static std::optional<SeedTable> table;
  if (table) return &*table;
  const auto m = desk_manifest(o);
  if (fresh || !repro_reusable(dir, m)) {
    std::fprintf(stderr, "running the desk repro into %s\n", dir.string().c_str());
    fs::remove_all(dir);
    config::RunOptions opt;
    opt.progress = [](const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); };
    const auto r = config::run_repro<float>(m, dir, opt);
    o.require(r.failures.empty(), "every desk run completed");
  } else {
    std::fprintf(stderr, "reusing the desk repro in %s\n", dir.string().c_str());
  }
  o.require(repro_reusable(dir, m), "desk repro finished with the desk manifest");
  if (!fs::exists(dir / "summary_by_seed.csv")) return nullptr;
  table = read_seed_table(dir / "summary_by_seed.csv");
  return &*table;
}

std::size_t wins(const std::map<std::uint64_t, SeedRow>& a, const std::map<std::uint64_t, SeedRow>& b,
                 double SeedRow::*field, std::string& detail) {
  std::size_t n = 0;
  for (const auto& [seed, ra] : a) {
    const auto& rb = b.at(seed);
    const bool win = ra.*field < rb.*field;
    n += win;
    detail += " s" + std::to_string(seed) + ":" + fmt("%.4f", ra.*field) + (win ? "<" : ">=") + fmt("%.4f", rb.*field);
  }
  return n;
}

Outcome scheme_ordering(const fs::path& dir, bool fresh) {
  Outcome o;
  const auto* t = desk_table(dir, fresh, o);
  if (!t) return o;
  for (const auto& model : {"fno2d", "unet"}) {
    const auto& rows = t->at(model);
    std::string d1, d2;
    const auto cl = wins(rows.at("curriculum"), rows.at("free_rollout"), &SeedRow::mean_rel_l2, d1);
    const auto tf = wins(rows.at("teacher_forcing"), rows.at("free_rollout"), &SeedRow::mean_rel_l2, d2);
    o.require(cl >= kSeedsRequired, std::string(model) + " curriculum < free_rollout on " + std::to_string(cl) +
                                        "/3 seeds:" + d1);
    o.require(tf >= kSeedsRequired, std::string(model) + " teacher_forcing < free_rollout on " +
                                        std::to_string(tf) + "/3 seeds:" + d2);
  }
  return o;
}

Outcome extrapolation(const fs::path& dir, bool fresh) {
  Outcome o;
  const auto* t = desk_table(dir, fresh, o);
  if (!t) return o;
  for (const auto& model : {"fno2d", "unet"}) {
    const auto& rows = t->at(model);
    std::string d;
    const auto n = wins(rows.at("curriculum"), rows.at("free_rollout"), &SeedRow::extrapolation, d);
    o.require(n >= kSeedsRequired, std::string(model) + " curriculum extrapolation error < free_rollout on " +
                                       std::to_string(n) + "/3 seeds:" + d);
  }
  const std::size_t t_train_end = kDeskTin + kDeskTout;
  std::size_t curves = 0, bad = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.path().filename() != "curve.csv") continue;
    ++curves;
    const auto rows = eval::read_curve(e.path());
    bool ok = !rows.empty();
    for (const auto& r : rows) ok = ok && ((r.region == "extrap") == (r.step >= t_train_end));
    ok = ok && config::curve_series(rows, "c").second == double(t_train_end);
    bad += !ok;
  }
  o.require(curves == 18 && bad == 0, std::to_string(curves) + " curves, " + std::to_string(bad) +
                                          " with a boundary other than frame " + std::to_string(t_train_end));
  return o;
}

// ---------------------------------------------------------------- 3

datagen::Trajectory random_trajectory(std::size_t frames, std::size_t n, std::uint64_t seed) {
  datagen::Trajectory t;
  t.n_frames = frames;
  t.h = t.w = n;
  t.values = random_tensor({frames, n, n}, seed).data;
  return t;
}

bool same(const rollout::RolloutResult<double>& a, const rollout::RolloutResult<double>& b) {
  if (a.predictions.size() != b.predictions.size()) return false;
  for (std::size_t k = 0; k < a.predictions.size(); ++k) {
    if (!(a.predictions[k].value() == b.predictions[k].value())) return false;
  }
  return true;
}

Outcome degenerate_schedules() {
  Outcome o;
  using models::ModelKind;
  for (auto kind : {ModelKind::fno2d, ModelKind::unet}) {
    models::StepModelConfig cfg;
    cfg.kind = kind;
    cfg.history_len = kDeskTin;
    cfg.fno = {6, 6, 12, 3, true};
    cfg.unet = {2, 8, 0};
    const auto model = models::StepModel<double>::initialized(cfg, 3);
    auto step = [&](const V& w) { return model.forward(w); };
    std::size_t tf_same = 0, free_same = 0;
    for (std::uint64_t s = 0; s < kDegenerateSamples; ++s) {
      const auto traj = random_trajectory(kDeskFrames, 16, 100 + s);
      rollout::ScheduleState tf(rollout::Scheme::teacher_forcing, 0.0, s), c1(rollout::Scheme::curriculum, 1.0, s + 7);
      rollout::ScheduleState fr(rollout::Scheme::free_rollout, 0.0, s), c0(rollout::Scheme::curriculum, 0.0, s + 7);
      tf_same += same(rollout::rollout<double>(step, traj, tf, kDeskTin, kDeskTout),
                      rollout::rollout<double>(step, traj, c1, kDeskTin, kDeskTout));
      free_same += same(rollout::rollout<double>(step, traj, fr, kDeskTin, kDeskTout),
                        rollout::rollout<double>(step, traj, c0, kDeskTin, kDeskTout));
    }
    const auto name = models::to_string(kind);
    o.require(tf_same == kDegenerateSamples, name + " curriculum e=1 equals teacher forcing bitwise on " +
                                                 std::to_string(tf_same) + "/10 samples");
    o.require(free_same == kDegenerateSamples, name + " curriculum e=0 equals free rollout bitwise on " +
                                                   std::to_string(free_same) + "/10 samples");
  }
  return o;
}

// ---------------------------------------------------------------- 4

Outcome schedule_correctness() {
  Outcome o;
  using rollout::Decay;
  const std::size_t total = 500;
  o.require(rollout::e_schedule(0, total, Decay::linear) == 1.0 &&
                rollout::e_schedule(total / 2, total, Decay::linear) == 0.5 &&
                rollout::e_schedule(total, total, Decay::linear) == 0.0,
            "linear schedule is exactly 1.0, 0.5, 0.0 at start, middle, end");
  rollout::ScheduleState s(rollout::Scheme::curriculum, 0.5, 20240601);
  int truth = 0;
  for (int i = 0; i < kBernoulliDraws; ++i) truth += rollout::step_choice(s) == rollout::Source::ground_truth;
  const double frac = double(truth) / kBernoulliDraws;
  o.require(frac >= kBernoulliLo && frac <= kBernoulliHi, "ground-truth fraction at e=0.5 is " + fmt("%.5f", frac));
  bool monotone = true;
  for (auto d : {Decay::linear, Decay::exponential, Decay::inverse_sigmoid}) {
    for (std::size_t n : {1u, 9u, 49u, 50u, 500u}) {
      for (std::size_t t = 1; t <= n; ++t) monotone = monotone && rollout::e_schedule(t, n, d) <= rollout::e_schedule(t - 1, n, d);
    }
  }
  o.require(monotone, "linear, exponential and inverse-sigmoid schedules never increase");
  return o;
}

// ---------------------------------------------------------------- 5

double check_params(const std::function<V(const ParameterStore<double>&)>& body,
                    const std::vector<std::pair<std::string, Shape>>& inputs) {
  ParameterStore<double> ps;
  std::uint64_t seed = 30;
  for (const auto& [name, shape] : inputs) ps.add(name, random_tensor(shape, seed++));
  return grad_check([&](const ParameterStore<double>& p) { return probe(body(p)); }, ps, kFdStep);
}

double check_unary(const std::function<V(const V&)>& op, Shape shape) {
  return grad_check([&](const V& x) { return probe(op(x)); }, random_tensor(shape, 21), kFdStep);
}

Tensor<double> spectral_conv_oracle(const Tensor<double>& x, const Tensor<C>& wts) {
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t cout = wts.dim(1), mx = wts.dim(2), my = wts.dim(3);
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<long> kxs;
  for (long k = 0; k < long((mx + 1) / 2); ++k) kxs.push_back(k);
  for (long k = -long(mx / 2); k < 0; ++k) kxs.push_back(k);
  Tensor<double> out({cout, h, w});
  for (std::size_t o = 0; o < cout; ++o) {
    std::vector<C> full(h * w);
    auto at = [&](long kx, long ky) -> C& {
      return full[((kx % long(h) + long(h)) % long(h)) * w + (ky % long(w) + long(w)) % long(w)];
    };
    for (std::size_t r = 0; r < mx; ++r) {
      for (std::size_t ky = 0; ky < my; ++ky) {
        C y{};
        for (std::size_t c = 0; c < cin; ++c) {
          C f{};
          for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
              f += x[(c * h + i) * w + j] * std::polar(1.0, -two_pi * (double(kxs[r]) * i / h + double(ky) * j / w));
            }
          }
          y += f * wts[((c * cout + o) * mx + r) * my + ky];
        }
        const double half = ky == 0 ? 0.5 : 1.0;
        at(kxs[r], long(ky)) += half * y;
        at(-kxs[r], -long(ky)) += half * std::conj(y);
      }
    }
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        C acc{};
        for (std::size_t a = 0; a < h; ++a) {
          for (std::size_t b = 0; b < w; ++b) {
            acc += full[a * w + b] * std::polar(1.0, two_pi * (double(a) * i / h + double(b) * j / w));
          }
        }
        out[(o * h + i) * w + j] = acc.real() / double(h * w);
      }
    }
  }
  return out;
}

Outcome numerics_oracles() {
  Outcome o;
  std::map<std::string, double> g;
  auto binary = [](auto op) {
    return check_params([op](const ParameterStore<double>& p) { return op(p.at("a"), p.at("b")); },
                        {{"a", {3, 5}}, {"b", {3, 5}}});
  };
  g["add"] = binary([](const V& a, const V& b) { return ops::add(a, b); });
  g["sub"] = binary([](const V& a, const V& b) { return ops::sub(a, b); });
  g["mul"] = binary([](const V& a, const V& b) { return ops::mul(a, b); });
  g["scale"] = check_unary([](const V& x) { return ops::scale(x, -1.7); }, {4, 4});
  g["gelu"] = check_unary([](const V& x) { return ops::gelu(x); }, {6, 6});
  g["relu"] = check_unary([](const V& x) { return ops::relu(x); }, {6, 6});
  g["sum"] = check_unary([](const V& x) { return ops::sum(x); }, {5, 5});
  g["mean"] = check_unary([](const V& x) { return ops::mean(x); }, {5, 5});
  g["channel_mix"] = check_params([](const auto& p) { return ops::channel_mix(p.at("x"), p.at("w")); },
                                  {{"x", {3, 5, 5}}, {"w", {4, 3}}});
  g["add_channel_bias"] = check_params([](const auto& p) { return ops::add_channel_bias(p.at("x"), p.at("b")); },
                                       {{"x", {3, 4, 4}}, {"b", {3}}});
  g["group_norm"] = check_params([](const auto& p) { return ops::group_norm(p.at("x"), 2, p.at("g"), p.at("b")); },
                                 {{"x", {4, 5, 5}}, {"g", {4}}, {"b", {4}}});
  for (std::size_t stride : {1u, 2u}) {
    for (auto pad : {ops::Padding::circular, ops::Padding::zero}) {
      const auto name = "conv2d/s" + std::to_string(stride) + (pad == ops::Padding::zero ? "/zero" : "/circular");
      g[name] = check_params([=](const auto& p) { return ops::conv2d(p.at("x"), p.at("w"), stride, pad); },
                             {{"x", {2, 8, 8}}, {"w", {3, 2, 3, 3}}});
    }
  }
  g["conv_transpose2d"] = check_params([](const auto& p) { return ops::conv_transpose2d(p.at("x"), p.at("w"), 2); },
                                       {{"x", {3, 4, 4}}, {"w", {3, 2, 2, 2}}});
  g["slice"] = check_unary([](const V& x) { return ops::slice(x, 1, 1, 3); }, {2, 6, 4});
  g["pad"] = check_unary([](const V& x) { return ops::pad(x, 2, 1, 2); }, {2, 4, 4});
  g["circular_pad"] = check_unary([](const V& x) { return ops::circular_pad(x, 2); }, {2, 4, 5});
  g["concat"] = check_params([](const auto& p) { return ops::concat<double>({p.at("a"), p.at("b")}, 1); },
                             {{"a", {2, 3, 4}}, {"b", {2, 5, 4}}});
  g["fft2"] = check_unary([](const V& x) { return ops::real_part(ops::fft2(ops::to_complex(x))); }, {2, 8, 8});
  g["ifft2"] = check_unary([](const V& x) { return ops::real_part(ops::ifft2(ops::to_complex(x))); }, {2, 6, 6});
  g["complex_mul"] = check_params(
      [](const auto& p) {
        auto y = ops::ifft2(ops::mul(ops::fft2(ops::as_complex(p.at("x"))), ops::as_complex(p.at("w"))));
        return ops::real_part(ops::mul(y, Var<C>::constant(Tensor<C>(y.shape(), C(0.3, 0.8)))));
      },
      {{"x", {1, 4, 4, 2}}, {"w", {1, 4, 4, 2}}});
  g["mode_contract"] = check_params(
      [](const auto& p) {
        auto y = ops::mode_contract(ops::as_complex(p.at("x")), ops::as_complex(p.at("w")));
        return ops::real_part(ops::mul(y, Var<C>::constant(Tensor<C>(y.shape(), C(-0.4, 0.9)))));
      },
      {{"x", {3, 2, 4, 2}}, {"w", {3, 2, 2, 4, 2}}});
  g["spectral_conv"] = check_params(
      [](const auto& p) { return models::spectral_conv(p.at("x"), ops::as_complex(p.at("w"))); },
      {{"x", {2, 8, 8}}, {"w", {2, 2, 3, 3, 2}}});

  auto full_model = [&](models::StepModelConfig cfg, std::size_t n) {
    const auto params = models::init_params<double>(cfg, 7);
    const models::StepModel<double> model(cfg, params);
    const auto window = V::constant(random_tensor({cfg.history_len, n, n}, 8));
    const auto target = V::constant(random_tensor({1, n, n}, 9));
    return grad_check(
        [&](const ParameterStore<double>& p) {
          auto d = ops::sub(model(p, window), target);
          return ops::mean(ops::mul(d, d));
        },
        params, kFdStep);
  };
  models::StepModelConfig fno;
  fno.kind = models::ModelKind::fno2d;
  fno.history_len = 4;
  fno.fno = {4, 4, 6, 2, true};
  g["fno2d model"] = full_model(fno, 16);
  models::StepModelConfig unet;
  unet.kind = models::ModelKind::unet;
  unet.history_len = 4;
  unet.unet = {2, 4, 2};
  g["unet model"] = full_model(unet, 16);

  double worst = 0;
  std::string worst_name;
  for (const auto& [name, e] : g) {
    if (!(e < kGradTol)) o.require(false, "grad_check " + name + " error " + fmt("%.3e", e));
    if (!(e <= worst)) worst = e, worst_name = name;
  }
  o.require(worst < kGradTol, std::to_string(g.size()) + " grad checks, worst " + worst_name + " " +
                                  fmt("%.3e", worst));

  double dft = 0;
  struct Case {
    Shape x;
    std::size_t cout, mx, my;
  };
  for (const auto& cs : {Case{{1, 4, 4}, 1, 2, 2}, Case{{2, 6, 6}, 3, 3, 2}, Case{{3, 8, 8}, 2, 4, 3},
                         Case{{2, 8, 6}, 2, 1, 3}, Case{{2, 5, 7}, 2, 2, 3}}) {
    const auto x = random_tensor(cs.x, 11);
    const auto re = random_tensor({cs.x[0], cs.cout, cs.mx, cs.my}, 12);
    const auto im = random_tensor({cs.x[0], cs.cout, cs.mx, cs.my}, 13);
    Tensor<C> w(re.shape);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = {re[i], im[i]};
    const auto ref = spectral_conv_oracle(x, w);
    const auto got = models::spectral_conv(V::constant(x), Var<C>::constant(w)).value();
    for (std::size_t i = 0; i < got.size(); ++i) dft = std::max(dft, std::abs(got[i] - ref[i]));
  }
  o.require(dft < kDftTol, "spectral_conv vs dense DFT max abs difference " + fmt("%.3e", dft));

  std::vector<V> p, t;
  for (int k = 0; k < 5; ++k) {
    p.push_back(V::constant(random_tensor({1, 6, 7}, 10 + k)));
    t.push_back(V::constant(random_tensor({1, 6, 7}, 20 + k)));
  }
  double mse = 0, num = 0, den = 0;
  std::vector<double> flat_p, flat_t;
  for (int k = 0; k < 5; ++k) {
    for (std::size_t i = 0; i < 42; ++i) {
      const double a = p[k].value()[i], b = t[k].value()[i];
      mse += (a - b) * (a - b);
      num += (a - b) * (a - b);
      den += b * b;
      flat_p.push_back(a);
      flat_t.push_back(b);
    }
  }
  mse /= 210.0;
  const double mse_err = std::abs(trainer::sequence_mse(p, t).value()[0] - mse);
  const double rel_err = std::abs(*eval::relative_l2(std::span<const double>(flat_p), std::span<const double>(flat_t)) -
                                  std::sqrt(num / den));
  o.require(mse_err < kOracleTol, "sequence_mse vs summation oracle " + fmt("%.3e", mse_err));
  o.require(rel_err < kOracleTol, "relative_l2 vs summation oracle " + fmt("%.3e", rel_err));
  return o;
}

// ---------------------------------------------------------------- 6

Outcome solver_oracles() {
  Outcome o;
  using namespace datagen;
  const std::size_t n = 32;
  SolverConfig heat;
  heat.grid_size = n;
  heat.forcing = Forcing::none;
  heat.viscosity = 1e-3;
  heat.dt = 1e-3;
  Tensor<double> w({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) w[i * n + j] = std::sin(2 * std::numbers::pi * double(i) / n);
  }
  {
    VorticitySolver solver(heat);
    auto w_hat = solver.to_spectral(w.data);
    solver.advance(w_hat, 500);
    const auto out = solver.to_physical(w_hat);
    const double decay = std::exp(-heat.viscosity * 4 * std::numbers::pi * std::numbers::pi * 0.5);
    double err = 0, ref = 0;
    for (std::size_t k = 0; k < out.size(); ++k) {
      err = std::max(err, std::abs(out[k] - decay * w[k]));
      ref = std::max(ref, std::abs(decay * w[k]));
    }
    o.require(err / ref < kHeatTol, "single-mode decay at t=0.5 relative error " + fmt("%.3e", err / ref));
  }
  {
    SolverConfig cfg;
    cfg.grid_size = n;
    cfg.forcing = Forcing::fixed_sinusoidal;
    VorticitySolver solver(cfg);
    auto w0 = sample_grf(n, 9, {});
    for (auto& v : w0.data) v += 0.25;
    auto w_hat = solver.to_spectral(w0.data);
    const auto before = w_hat[0];
    solver.advance(w_hat, 100);
    const double drift = std::abs(w_hat[0] - before) / double(n * n);
    o.require(drift < kZeroModeTol, "mean vorticity drift over 100 steps " + fmt("%.3e", drift));
  }
  {
    SolverConfig cfg = heat;
    cfg.n_frames = 25;
    VorticitySolver solver(cfg);
    const auto frames = solver.simulate(sample_grf(n, 17, {}));
    bool monotone = true;
    for (std::size_t f = 1; f < frames.size(); ++f) {
      monotone = monotone && solver.kinetic_energy(frames[f].data) <= solver.kinetic_energy(frames[f - 1].data);
    }
    o.require(monotone, "unforced kinetic energy never increases over 25 frames");
  }
  {
    DatasetConfig cfg;
    cfg.solver.grid_size = 16;
    cfg.solver.n_frames = 6;
    cfg.solver.rng_seed = 77;
    cfg.n_samples = 6;
    cfg.split_weights = {4, 1, 1};
    const auto a = fs::temp_directory_path() / "pderoll_accept_ds_a";
    const auto b = fs::temp_directory_path() / "pderoll_accept_ds_b";
    fs::remove_all(a);
    fs::remove_all(b);
    generate_dataset(cfg, a, 1);
    generate_dataset(cfg, b, 1);
    bool identical = slurp(a / "dataset.json") == slurp(b / "dataset.json");
    for (std::uint64_t id = 0; id < cfg.n_samples; ++id) {
      identical = identical && slurp(a / trajectory_filename(id)) == slurp(b / trajectory_filename(id));
    }
    o.require(identical, "dataset regenerated from the same configuration is bitwise identical");
  }
  return o;
}

// ---------------------------------------------------------------- 7

template <class T>
bool checkpoint_transparent(models::ModelKind kind) {
  models::StepModelConfig cfg;
  cfg.kind = kind;
  cfg.history_len = 4;
  cfg.fno = {4, 4, 8, 2, true};
  cfg.unet = {2, 4, 2};
  const auto params = models::init_params<T>(cfg, 5);
  trainer::Adam adam(params);
  const auto path = fs::temp_directory_path() / "pderoll_accept.ckpt";
  trainer::save_checkpoint(path, trainer::make_checkpoint(cfg, trainer::TrainConfig{}, 0, params, adam, 0.5));
  const auto back = trainer::load_checkpoint(path);
  const models::StepModel<T> a(cfg, params.frozen()), b(back.model, trainer::store_from<T>(back.params));
  Tensor<T> x({4, 16, 16});
  RandomStream rng(6);
  for (auto& v : x.data) v = static_cast<T>(rng.uniform(-1, 1));
  return a.forward(Var<T>::constant(x)).value() == b.forward(Var<T>::constant(x)).value();
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return files;
}

Outcome reproducibility() {
  Outcome o;
  for (auto kind : {models::ModelKind::fno2d, models::ModelKind::unet}) {
    const auto name = models::to_string(kind);
    o.require(checkpoint_transparent<float>(kind), name + " float forward unchanged by checkpoint round trip");
    o.require(checkpoint_transparent<double>(kind), name + " double forward unchanged by checkpoint round trip");
  }
  const auto m = config::parse_manifest(R"(version = 1
seed = 5
[dataset]
grid = 16
frames = 12
samples = 10
split = 6,2,2
[model]
fno.modes_x = 4
fno.modes_y = 4
fno.width = 6
fno.layers = 2
unet.depth = 2
unet.base_channels = 4
[training]
epochs = 3
lr_halving_period = 1
batch_size = 4
t_in = 4
t_out = 4
[eval]
t_total = 12
snapshot_frames = 4,11
[repro]
seeds = 1,2
)",
                                        "small repro manifest");
  std::map<std::string, std::string> runs[2];
  for (int r = 0; r < 2; ++r) {
    const auto dir = fs::temp_directory_path() / ("pderoll_accept_repro_" + std::to_string(r));
    fs::remove_all(dir);
    const auto res = config::run_repro<float>(m, dir, {});
    o.require(res.failures.empty() && res.all_finite(), "small repro run " + std::to_string(r + 1) + " completed");
    runs[r] = tree(dir);
  }
  std::size_t ckpts = 0, differing = 0;
  for (const auto& [rel, bytes] : runs[0]) {
    ckpts += rel.ends_with(".ckpt");
    auto it = runs[1].find(rel);
    if (it == runs[1].end() || it->second != bytes) {
      ++differing;
      o.notes.push_back("differs: " + rel);
    }
  }
  o.require(runs[0].size() == runs[1].size() && differing == 0 && ckpts > 0,
            "two single-threaded repro runs: " + std::to_string(runs[0].size()) + " files (" +
                std::to_string(ckpts) + " checkpoints), " + std::to_string(differing) + " differ");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-7"};
  std::vector<int> selected;
  std::string repro_dir = PDEROLL_DESK_REPRO_DIR;
  bool fresh = false;
  app.add_option("--criterion", selected, "criteria to run (default: all)")->check(CLI::Range(1, 7));
  app.add_option("--repro-dir", repro_dir, "desk repro directory for criteria 1 and 2");
  app.add_flag("--fresh", fresh, "rerun the desk repro even if a matching one exists");
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7};

  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria = {
      {1, {"scheme ordering at desk scale", [&] { return scheme_ordering(repro_dir, fresh); }}},
      {2, {"extrapolation behaviour and region boundary", [&] { return extrapolation(repro_dir, fresh); }}},
      {3, {"degenerate schedule equivalence", degenerate_schedules}},
      {4, {"schedule correctness", schedule_correctness}},
      {5, {"numerics oracles", numerics_oracles}},
      {6, {"solver oracles", solver_oracles}},
      {7, {"reproducibility", reproducibility}},
  };
  bool all = true;
  for (int c : std::set<int>(selected.begin(), selected.end())) {
    const auto& [name, run] = criteria.at(c);
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& n : o.notes) std::printf("    %s\n", n.c_str());
    std::printf("criterion %d: %s  %s (%.1fs)\n", c, o.pass ? "PASS" : "FAIL", name.c_str(), secs);
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
