#include <gtest/gtest.h>

#include "pderoll/models/step_model.hpp"
#include "pderoll/rollout/rollout.hpp"
#include "test_support.hpp"

namespace pderoll::rollout {
namespace {

using V = Var<double>;

datagen::Trajectory random_trajectory(std::size_t frames, std::size_t n, std::uint64_t seed) {
  datagen::Trajectory t;
  t.n_frames = frames;
  t.h = t.w = n;
  t.values = testing::random_tensor({frames, n, n}, seed).data;
  return t;
}

TEST(Schedule, LinearEndpointsAndMidpoint) {
  EXPECT_EQ(e_schedule(0, 500, Decay::linear), 1.0);
  EXPECT_EQ(e_schedule(250, 500, Decay::linear), 0.5);
  EXPECT_EQ(e_schedule(500, 500, Decay::linear), 0.0);
}

TEST(Schedule, ExponentialEndsAtOnePercent) {
  EXPECT_EQ(e_schedule(0, 50, Decay::exponential), 1.0);
  EXPECT_NEAR(e_schedule(50, 50, Decay::exponential), 0.01, 1e-15);
}

TEST(Schedule, AllVariantsStartHighAndNeverIncrease) {
  for (auto variant : {Decay::linear, Decay::exponential, Decay::inverse_sigmoid}) {
    for (std::size_t total : {1u, 9u, 49u, 50u, 500u}) {
      EXPECT_GE(e_schedule(0, total, variant), 0.9) << to_string(variant) << " " << total;
      for (std::size_t t = 1; t <= total; ++t) {
        const double e = e_schedule(t, total, variant);
        EXPECT_LE(e, e_schedule(t - 1, total, variant));
        EXPECT_GE(e, 0.0);
      }
    }
  }
}

TEST(Schedule, EpochOutOfRangeRejected) {
  EXPECT_THROW(e_schedule(11, 10, Decay::linear), std::out_of_range);
}

TEST(Schedule, ParseRoundTrip) {
  for (auto s : {Scheme::free_rollout, Scheme::teacher_forcing, Scheme::curriculum}) {
    EXPECT_EQ(parse_scheme(to_string(s)), s);
  }
  for (auto d : {Decay::linear, Decay::exponential, Decay::inverse_sigmoid}) EXPECT_EQ(parse_decay(to_string(d)), d);
  EXPECT_THROW(parse_scheme("scheduled"), std::invalid_argument);
}

TEST(StepChoice, DegenerateRatios) {
  ScheduleState all_truth(Scheme::curriculum, 1.0, 3), none(Scheme::curriculum, 0.0, 3);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(step_choice(all_truth), Source::ground_truth);
    EXPECT_EQ(step_choice(none), Source::prediction);
  }
  ScheduleState tf(Scheme::teacher_forcing, 0.0, 1), fr(Scheme::free_rollout, 1.0, 1);
  EXPECT_EQ(step_choice(tf), Source::ground_truth);
  EXPECT_EQ(step_choice(fr), Source::prediction);
  EXPECT_THROW(ScheduleState(Scheme::curriculum, 1.5, 0), std::invalid_argument);
}

TEST(StepChoice, BernoulliFractionAtHalf) {
  ScheduleState s(Scheme::curriculum, 0.5, 20240601);
  int truth = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) truth += step_choice(s) == Source::ground_truth;
  const double fraction = double(truth) / draws;
  EXPECT_GE(fraction, 0.494);
  EXPECT_LE(fraction, 0.506);
}

TEST(HistoryWindow, EvictsOldestAndKeepsTags) {
  HistoryWindow<double> w(3);
  for (int i = 0; i < 3; ++i) w.push(V::constant(Tensor<double>({1, 2, 2}, i)), Source::ground_truth);
  w.push(V::constant(Tensor<double>({1, 2, 2}, 9)), Source::prediction);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w.slot(0).value()[0], 1.0);
  EXPECT_EQ(w.slot(2).value()[0], 9.0);
  EXPECT_EQ(w.tags().back(), Source::prediction);
  const auto stacked = w.stacked().value();
  EXPECT_EQ(stacked.shape, (Shape{3, 2, 2}));
  EXPECT_EQ(stacked[4], 2.0);
}

// Model hard-wired to the mean of its window.
RolloutResult<double> mean_model_rollout(const datagen::Trajectory& traj, ScheduleState& state, std::size_t n,
                                         std::size_t t_out) {
  auto step = [n](const V& window) {
    return ops::channel_mix(window, V::constant(Tensor<double>({1, n}, 1.0 / double(n))));
  };
  return rollout<double>(step, traj, state, n, t_out);
}

TEST(Rollout, MeanModelKeepsConstantTrajectory) {
  datagen::Trajectory traj = random_trajectory(8, 4, 1);
  std::fill(traj.values.begin(), traj.values.end(), 0.625);
  for (auto scheme : {Scheme::free_rollout, Scheme::teacher_forcing, Scheme::curriculum}) {
    ScheduleState s(scheme, 0.5, 7);
    auto r = mean_model_rollout(traj, s, 4, 4);
    ASSERT_EQ(r.predictions.size(), 4u);
    ASSERT_EQ(r.choice_log.size(), 4u);
    for (const auto& p : r.predictions) {
      for (double v : p.value().data) EXPECT_EQ(v, 0.625);
    }
  }
}

TEST(Rollout, FreeRolloutFeedsPredictionsBack) {
  auto traj = random_trajectory(6, 2, 2);
  ScheduleState s(Scheme::free_rollout, 0.0, 0);
  std::size_t calls = 0;
  auto step = [&](const V& window) {
    ++calls;
    return ops::add(ops::slice(window, 0, 2, 1), V::constant(Tensor<double>({1, 2, 2}, 1.0)));
  };
  auto r = rollout<double>(step, traj, s, 3, 4);
  // Each prediction is the newest slot plus one, so free rollout climbs by one per step.
  const double base = traj.frame(2)[0];
  for (std::size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(r.predictions[k].value()[0], base + double(k + 1));
  EXPECT_EQ(calls, 4u);
  for (auto c : r.choice_log) EXPECT_EQ(c, Source::prediction);
}

TEST(Rollout, TeacherForcingUsesRecordedFrames) {
  auto traj = random_trajectory(7, 2, 3);
  ScheduleState s(Scheme::teacher_forcing, 0.0, 0);
  auto step = [](const V& window) { return ops::slice(window, 0, 2, 1); };
  auto r = rollout<double>(step, traj, s, 3, 4);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(r.predictions[k].value()[0], traj.frame(2 + k)[0]);
}

TEST(Rollout, InsufficientFramesReportsCounts) {
  auto traj = random_trajectory(12, 4, 3);
  ScheduleState s(Scheme::teacher_forcing, 0.0, 0);
  try {
    mean_model_rollout(traj, s, 10, 5);
    FAIL();
  } catch (const InsufficientFrames& e) {
    EXPECT_EQ(e.required(), 15u);
    EXPECT_EQ(e.available(), 12u);
    EXPECT_NE(std::string(e.what()).find("15 required"), std::string::npos);
  }
  // Free rollout needs only the initial window.
  ScheduleState f(Scheme::free_rollout, 0.0, 0);
  EXPECT_EQ(mean_model_rollout(traj, f, 10, 20).predictions.size(), 20u);
}

void expect_bitwise_equal(const RolloutResult<double>& a, const RolloutResult<double>& b, bool with_log) {
  ASSERT_EQ(a.predictions.size(), b.predictions.size());
  for (std::size_t k = 0; k < a.predictions.size(); ++k) {
    EXPECT_TRUE(a.predictions[k].value() == b.predictions[k].value()) << "step " << k;
  }
  if (with_log) {
    EXPECT_EQ(a.choice_log, b.choice_log);
  }
}

TEST(Rollout, DegenerateSchedulesMatchBitwise) {
  using models::ModelKind;
  for (auto kind : {ModelKind::fno2d, ModelKind::unet}) {
    models::StepModelConfig cfg;
    cfg.kind = kind;
    cfg.history_len = 4;
    cfg.fno = {3, 3, 6, 2, true};
    cfg.unet = {2, 4, 0};
    const auto model = models::StepModel<double>::initialized(cfg, 5);
    auto step = [&](const V& w) { return model.forward(w); };
    const auto traj = random_trajectory(10, 8, 9);

    ScheduleState tf(Scheme::teacher_forcing, 0.0, 1), c1(Scheme::curriculum, 1.0, 2);
    expect_bitwise_equal(rollout<double>(step, traj, tf, 4, 6), rollout<double>(step, traj, c1, 4, 6), true);

    ScheduleState fr(Scheme::free_rollout, 0.0, 1);
    const auto free = rollout<double>(step, traj, fr, 4, 6);
    for (std::uint64_t seed : {0u, 17u, 99u}) {
      ScheduleState c0(Scheme::curriculum, 0.0, seed);
      expect_bitwise_equal(free, rollout<double>(step, traj, c0, 4, 6), true);
    }
  }
}

TEST(Rollout, DeterministicPerSeedAndFractionTracksRatio) {
  const auto traj = random_trajectory(40, 2, 4);
  auto step = [](const V& w) { return ops::slice(w, 0, 0, 1); };
  ScheduleState a(Scheme::curriculum, 0.3, 11), b(Scheme::curriculum, 0.3, 11);
  auto ra = rollout<double>(step, traj, a, 2, 38);
  auto rb = rollout<double>(step, traj, b, 2, 38);
  expect_bitwise_equal(ra, rb, true);

  std::size_t truth = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    ScheduleState s(Scheme::curriculum, 0.3, derive_seed(5, {seed}));
    for (auto c : rollout<double>(step, traj, s, 2, 38).choice_log) {
      truth += c == Source::ground_truth;
      ++total;
    }
  }
  const double p = 0.3, n = double(total);
  EXPECT_NEAR(double(truth) / n, p, 3.0 * std::sqrt(p * (1 - p) / n));
}

// Parameter gradient of the squared norm of prediction k.
std::vector<double> prediction_gradient(Scheme scheme, std::size_t k, bool truncate) {
  models::StepModelConfig cfg;
  cfg.history_len = 3;
  cfg.fno = {2, 2, 4, 1, true};
  const auto params = models::init_params<double>(cfg, 8).clone();
  const models::StepModel<double> model(cfg, params);
  auto step = [&](const V& w) { return model(params, w); };
  const auto traj = random_trajectory(10, 8, 10);
  ScheduleState s(scheme, 0.0, 0);
  auto r = rollout<double>(step, traj, s, 3, k + 1, RolloutOptions{truncate});
  backward(ops::sum(ops::mul(r.predictions[k], r.predictions[k])));
  std::vector<double> g;
  for (const auto& e : params.entries()) g.insert(g.end(), e.var.grad().begin(), e.var.grad().end());
  return g;
}

TEST(Rollout, FreeRolloutGradientFlowsThroughPredictions) {
  const auto full = prediction_gradient(Scheme::free_rollout, 3, false);
  const auto truncated = prediction_gradient(Scheme::free_rollout, 3, true);
  double diff = 0;
  for (std::size_t i = 0; i < full.size(); ++i) diff = std::max(diff, std::abs(full[i] - truncated[i]));
  EXPECT_GT(diff, 1e-8);
}

TEST(Rollout, TeacherForcingGradientIgnoresEarlierPredictions) {
  EXPECT_EQ(prediction_gradient(Scheme::teacher_forcing, 3, false),
            prediction_gradient(Scheme::teacher_forcing, 3, true));
}

}  // namespace
}  // namespace pderoll::rollout
