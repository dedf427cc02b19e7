#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "igct/error.hpp"
#include "igct/rng.hpp"

namespace igct {

/// Noise, step-size and guidance schedule constants shared by training and
/// sampling. Defaults are the CIFAR-10 values; sigma_data is normally filled
/// from the data world.
struct ScheduleConfig {
  double p_mean = -1.1;
  double p_std = 2.0;
  double t_min = 0.002;
  double t_max = 80.0;
  std::int64_t d = 40000;
  double t_low = 11.0;
  double t_high = 14.3;
  double w_min = 1.0;
  double w_max = 15.0;
  double sigma_data = 0.5;
  double q_cap = 0.9;

  void validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
      throw ConfigError("schedule." + field + ": " + why);
    };
    if (!(t_min > 0.0)) fail("t_min", "must be > 0");
    if (!(t_low > t_min)) fail("t_low", "must be > t_min");
    if (!(t_high > t_low)) fail("t_high", "must be > t_low");
    if (!(t_max > t_high)) fail("t_max", "must be > t_high");
    if (!(w_min >= 0.0)) fail("w_min", "must be >= 0");
    if (!(w_max >= w_min)) fail("w_max", "must be >= w_min");
    if (d < 1) fail("d", "must be >= 1");
    if (!(p_std > 0.0)) fail("p_std", "must be > 0");
    if (!(q_cap >= 0.0 && q_cap <= 1.0)) fail("q_cap", "must lie in [0, 1]");
    if (!(sigma_data > 0.0)) fail("sigma_data", "must be > 0");
    if (!std::isfinite(p_mean)) fail("p_mean", "must be finite");
  }
};

/// A (noisier t, cleaner r) pair for one consistency step.
struct StepPair {
  double t = 0.0;
  double r = 0.0;
  double delta_t = 0.0;      // t - r after clamping r to t_min
  double raw_delta_t = 0.0;  // t * n(t) / 2^floor(k/d), before clamping
  double lambda_gct = 0.0;   // 1 / (t - r)
  double lambda_ict = 0.0;   // delta_t / t_max
};

/// Lognormal noise level for a given standard-normal draw, clamped to
/// [t_min, t_max].
inline double noise_level_from_gaussian(double g, const ScheduleConfig& cfg) {
  const double raw = std::exp(cfg.p_mean + cfg.p_std * g);
  return std::clamp(raw, cfg.t_min, cfg.t_max);
}

inline double sample_noise_level(Rng& rng, const ScheduleConfig& cfg) {
  return noise_level_from_gaussian(standard_normal(rng), cfg);
}

/// n(t) = 1 + 8 sigmoid(-t).
inline double sigmoid_adjust(double t) { return 1.0 + 8.0 / (1.0 + std::exp(t)); }

/// Number of completed step-size halvings at iteration k.
inline std::int64_t halving_stage(std::int64_t k, std::int64_t d) { return k / d; }

inline StepPair step_pair(double t, std::int64_t k, const ScheduleConfig& cfg) {
  if (!(t >= cfg.t_min && t <= cfg.t_max)) {
    throw std::domain_error("step_pair: t=" + std::to_string(t) + " outside [t_min, t_max]");
  }
  if (k < 0) throw std::domain_error("step_pair: negative iteration");
  StepPair p;
  p.t = t;
  const auto stage = halving_stage(k, cfg.d);
  // ldexp keeps each halving exact.
  p.raw_delta_t = std::ldexp(t * sigmoid_adjust(t), -static_cast<int>(std::min<std::int64_t>(stage, 4096)));
  p.r = std::max(t - p.raw_delta_t, cfg.t_min);
  p.delta_t = t - p.r;
  if (p.delta_t <= 0.0) {
    // t sits exactly on t_min (or the step underflowed): no cleaner level.
    p.r = t;
    p.delta_t = 0.0;
    p.lambda_gct = 0.0;
    p.lambda_ict = 0.0;
    return p;
  }
  p.lambda_gct = 1.0 / p.delta_t;
  p.lambda_ict = p.delta_t / cfg.t_max;
  return p;
}

/// Guidance mask probability q(t): zero below t_low, ramps quadratically to
/// q_cap at t_high.
inline double guidance_mask_prob(double t, const ScheduleConfig& cfg) {
  const double ramp = std::clamp((t - cfg.t_low) / (cfg.t_high - cfg.t_low), 0.0, 1.0);
  return cfg.q_cap * ramp * ramp;
}

inline double sample_guidance_w(Rng& rng, const ScheduleConfig& cfg) {
  if (cfg.w_max == cfg.w_min) return cfg.w_min;
  return cfg.w_min + (cfg.w_max - cfg.w_min) * uniform01(rng);
}

/// Karras rho-spaced levels from hi down to lo, n steps (n + 1 levels).
/// Endpoints are exactly hi and lo.
inline std::vector<double> karras_levels(int n, double lo, double hi, double rho = 7.0) {
  if (n < 1) throw std::invalid_argument("karras_levels: n must be >= 1");
  if (!(hi > lo) || !(lo > 0.0)) throw std::invalid_argument("karras_levels: need 0 < lo < hi");
  std::vector<double> out(static_cast<std::size_t>(n) + 1);
  const double a = std::pow(hi, 1.0 / rho);
  const double b = std::pow(lo, 1.0 / rho);
  for (int i = 0; i <= n; ++i) {
    const double f = static_cast<double>(i) / n;
    out[static_cast<std::size_t>(i)] = std::pow(a + f * (b - a), rho);
  }
  out.front() = hi;
  out.back() = lo;
  return out;
}

}  // namespace igct
