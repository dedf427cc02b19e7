#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "igct/schedule.hpp"

using namespace igct;

namespace {

ScheduleConfig defaults() { return ScheduleConfig{}; }

// Independent sigmoid via tanh: sigma(-t) = (1 - tanh(t/2)) / 2.
double n_ref(double t) { return 1.0 + 8.0 * 0.5 * (1.0 - std::tanh(0.5 * t)); }

}  // namespace

TEST(NoiseLevel, ClampsAtBothEnds) {
  const auto cfg = defaults();
  // raw t = exp(p_mean + p_std g); choose g to hit a target raw value
  auto g_for = [&](double raw) { return (std::log(raw) - cfg.p_mean) / cfg.p_std; };
  EXPECT_EQ(noise_level_from_gaussian(g_for(200.0), cfg), 80.0);
  EXPECT_EQ(noise_level_from_gaussian(g_for(1e-5), cfg), 0.002);
  EXPECT_NEAR(noise_level_from_gaussian(g_for(3.0), cfg), 3.0, 1e-12);
}

TEST(NoiseLevel, MedianMatchesLognormal) {
  auto cfg = defaults();
  // Widen the clamp so the empirical median is of the unclamped law.
  cfg.t_min = 1e-300;
  cfg.t_low = 1e-200;
  cfg.t_high = 1e-100;
  cfg.t_max = 1e300;
  Rng rng = derive_rng(7, 0);
  std::vector<double> v(1'000'000);
  for (auto& x : v) x = sample_noise_level(rng, cfg);
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  EXPECT_NEAR(v[v.size() / 2] / std::exp(-1.1), 1.0, 0.01);
}

TEST(NoiseLevel, AlwaysWithinBounds) {
  const auto cfg = defaults();
  Rng rng = derive_rng(3, 0);
  for (int i = 0; i < 200000; ++i) {
    const double t = sample_noise_level(rng, cfg);
    ASSERT_GE(t, cfg.t_min);
    ASSERT_LE(t, cfg.t_max);
  }
}

TEST(SigmoidAdjust, KnownValues) {
  EXPECT_EQ(sigmoid_adjust(0.0), 5.0);
  EXPECT_NEAR(sigmoid_adjust(80.0), 1.0, 1e-12);
  EXPECT_NEAR(sigmoid_adjust(1.0), 3.1515, 1e-4);
  for (double t : {0.0, 0.3, 1.0, 2.5, 10.0, 40.0}) EXPECT_NEAR(sigmoid_adjust(t), n_ref(t), 1e-13);
}

TEST(SigmoidAdjust, StrictlyDecreasingWithinRange) {
  double prev = sigmoid_adjust(0.0);
  for (int i = 1; i <= 1000; ++i) {
    const double t = 0.03 * i;
    const double v = sigmoid_adjust(t);
    EXPECT_LT(v, prev);
    EXPECT_GT(v, 1.0);
    EXPECT_LE(v, 5.0);
    prev = v;
  }
}

TEST(StepPair, EarlyTrainingIsPureDenoising) {
  const auto cfg = defaults();
  const StepPair p = step_pair(80.0, 0, cfg);
  EXPECT_NEAR(p.raw_delta_t, 80.0 * n_ref(80.0), 1e-9);
  EXPECT_EQ(p.r, 0.002);
  EXPECT_DOUBLE_EQ(p.delta_t, 79.998);
}

TEST(StepPair, HalvesAfterOneStage) {
  const auto cfg = defaults();
  EXPECT_EQ(step_pair(80.0, cfg.d, cfg).raw_delta_t, step_pair(80.0, 0, cfg).raw_delta_t / 2.0);
}

TEST(StepPair, LateStageValue) {
  const auto cfg = defaults();
  const StepPair p = step_pair(10.0, 10 * cfg.d, cfg);
  EXPECT_NEAR(n_ref(10.0), 1.00036, 1e-5);
  EXPECT_NEAR(p.raw_delta_t, 10.0 * n_ref(10.0) / 1024.0, 1e-14);
  EXPECT_GT(p.r, cfg.t_min);
  EXPECT_DOUBLE_EQ(p.r, 10.0 - p.raw_delta_t);
}

TEST(StepPair, ExactHalvingProperty) {
  const auto cfg = defaults();
  Rng rng = derive_rng(11, 0);
  for (int i = 0; i < 1000; ++i) {
    const double t = cfg.t_min + (cfg.t_max - cfg.t_min) * uniform01(rng);
    const auto k = static_cast<std::int64_t>(uniform01(rng) * 12 * cfg.d);
    ASSERT_EQ(step_pair(t, k + cfg.d, cfg).raw_delta_t, step_pair(t, k, cfg).raw_delta_t / 2.0);
  }
}

TEST(StepPair, InvariantsHold) {
  const auto cfg = defaults();
  Rng rng = derive_rng(12, 0);
  for (int i = 0; i < 20000; ++i) {
    const double t = std::exp(std::log(cfg.t_min) + (std::log(cfg.t_max) - std::log(cfg.t_min)) * uniform01(rng));
    if (t == cfg.t_min) continue;
    const auto k = static_cast<std::int64_t>(uniform01(rng) * 12 * cfg.d);
    const StepPair p = step_pair(t, k, cfg);
    ASSERT_GE(p.r, cfg.t_min);
    ASSERT_LT(p.r, p.t);
    ASSERT_GT(p.delta_t, 0.0);
    ASSERT_EQ(p.lambda_gct, 1.0 / (p.t - p.r));
    ASSERT_NEAR(p.lambda_gct * (p.t - p.r), 1.0, 1e-15);
    ASSERT_EQ(p.lambda_ict, p.delta_t / cfg.t_max);
  }
}

TEST(StepPair, RejectsOutOfRange) {
  const auto cfg = defaults();
  EXPECT_THROW(step_pair(0.001, 0, cfg), std::domain_error);
  EXPECT_THROW(step_pair(80.5, 0, cfg), std::domain_error);
}

TEST(StepPair, BoundaryLevelHasNoStep) {
  const auto cfg = defaults();
  const StepPair p = step_pair(cfg.t_min, 0, cfg);
  EXPECT_EQ(p.r, cfg.t_min);
  EXPECT_EQ(p.delta_t, 0.0);
}

TEST(StepPair, NineHalvingsShrinkStep512) {
  const auto cfg = defaults();
  EXPECT_EQ(step_pair(5.0, 9 * cfg.d, cfg).raw_delta_t * 512.0, step_pair(5.0, 0, cfg).raw_delta_t);
}

TEST(GuidanceMask, EndpointsAndMidpoint) {
  const auto cfg = defaults();
  EXPECT_EQ(guidance_mask_prob(11.0, cfg), 0.0);
  EXPECT_EQ(guidance_mask_prob(14.3, cfg), 0.9);
  EXPECT_NEAR(guidance_mask_prob(12.65, cfg), 0.225, 1e-12);
}

TEST(GuidanceMask, ShapeOnGrid) {
  const auto cfg = defaults();
  double prev = -1.0;
  for (int i = 0; i < 10000; ++i) {
    const double t = 20.0 * i / 9999.0;
    const double q = guidance_mask_prob(t, cfg);
    if (t <= cfg.t_low) EXPECT_EQ(q, 0.0);
    if (t >= cfg.t_high) EXPECT_EQ(q, cfg.q_cap);
    EXPECT_GE(q, prev);
    prev = q;
  }
}

TEST(GuidanceWeight, DegenerateInterval) {
  auto cfg = defaults();
  cfg.w_max = cfg.w_min = 1.0;
  Rng rng = derive_rng(1, 0);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_guidance_w(rng, cfg), 1.0);
}

TEST(GuidanceWeight, UniformMeanAndRange) {
  const auto cfg = defaults();
  Rng rng = derive_rng(2, 0);
  double sum = 0.0;
  const int n = 1'000'000;
  for (int i = 0; i < n; ++i) {
    const double w = sample_guidance_w(rng, cfg);
    ASSERT_GE(w, 1.0);
    ASSERT_LE(w, 15.0);
    sum += w;
  }
  EXPECT_NEAR(sum / n / 8.0, 1.0, 0.01);
}

TEST(KarrasLevels, EndpointsExactAndDescending) {
  const auto lv = karras_levels(18, 0.002, 80.0, 7.0);
  ASSERT_EQ(lv.size(), 19u);
  EXPECT_EQ(lv.front(), 80.0);
  EXPECT_EQ(lv.back(), 0.002);
  for (std::size_t i = 1; i < lv.size(); ++i) EXPECT_LT(lv[i], lv[i - 1]);
}

TEST(ScheduleConfig, ValidationNamesField) {
  auto cfg = defaults();
  cfg.t_high = 10.0;
  try {
    cfg.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("schedule.t_high"), std::string::npos);
  }
  cfg = defaults();
  cfg.q_cap = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = defaults();
  cfg.d = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
