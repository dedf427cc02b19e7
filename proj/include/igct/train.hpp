#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "igct/losses.hpp"
#include "igct/model.hpp"
#include "igct/net.hpp"
#include "igct/oracle.hpp"
#include "igct/schedule.hpp"

namespace igct {

enum class Algorithm { kIgct, kCfgEdm, kGuidedCd };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kIgct: return "igct";
    case Algorithm::kCfgEdm: return "cfg-edm";
    case Algorithm::kGuidedCd: return "guided-cd";
  }
  return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "igct") return Algorithm::kIgct;
  if (s == "cfg-edm") return Algorithm::kCfgEdm;
  if (s == "guided-cd") return Algorithm::kGuidedCd;
  throw ConfigError("algorithm: unknown value '" + s + "' (expected igct | cfg-edm | guided-cd)");
}

struct TrainConfig {
  int batch_size = 256;
  std::int64_t iterations = 40000;
  std::int64_t i_skip = 10;
  /// (until_iteration, value): value applies while k <= until_iteration; the
  /// last value persists past the final threshold.
  std::vector<std::pair<std::int64_t, double>> lambda_recon_schedule{{std::numeric_limits<std::int64_t>::max(), 2e-5}};
  double huber_c = 0.03;
  double label_dropout = 0.1;
  int distill_n = 18;
  double rho = 7.0;
  double lr = 1e-3;
  double lr_noiser = 1e-3;
  /// Cosine decay of both learning rates to lr * lr_final_ratio at the last
  /// iteration; 1 keeps them constant.
  double lr_final_ratio = 1.0;
  /// Stop once floor(k / d) exceeds this many halvings (unset: run all iterations).
  std::optional<std::int64_t> max_stage;
  std::int64_t log_every = 100;
  std::int64_t checkpoint_every = 0;  // 0: only the final checkpoint
  bool record_wall_ms = false;

  void validate() const {
    auto fail = [](const std::string& f, const std::string& why) { throw ConfigError("train." + f + ": " + why); };
    if (batch_size < 1) fail("batch_size", "must be >= 1");
    if (iterations < 0) fail("iterations", "must be >= 0");
    if (i_skip < 1) fail("i_skip", "must be >= 1");
    if (!(huber_c > 0.0)) fail("huber_c", "must be > 0");
    if (!(label_dropout >= 0.0 && label_dropout <= 1.0)) fail("label_dropout", "must lie in [0, 1]");
    if (distill_n < 1) fail("distill_n", "must be >= 1");
    if (!(rho > 0.0)) fail("rho", "must be > 0");
    if (!(lr > 0.0)) fail("lr", "must be > 0");
    if (!(lr_noiser > 0.0)) fail("lr_noiser", "must be > 0");
    if (!(lr_final_ratio > 0.0 && lr_final_ratio <= 1.0)) fail("lr_final_ratio", "must lie in (0, 1]");
    if (log_every < 1) fail("log_every", "must be >= 1");
    if (checkpoint_every < 0) fail("checkpoint_every", "must be >= 0");
    if (lambda_recon_schedule.empty()) fail("lambda_recon_schedule", "must be non-empty");
    for (std::size_t i = 0; i < lambda_recon_schedule.size(); ++i) {
      if (i > 0 && lambda_recon_schedule[i].first <= lambda_recon_schedule[i - 1].first) {
        fail("lambda_recon_schedule", "thresholds must be strictly increasing");
      }
      if (!(lambda_recon_schedule[i].second >= 0.0)) fail("lambda_recon_schedule", "values must be >= 0");
    }
  }

  double lr_scale_at(std::int64_t k) const {
    if (lr_final_ratio == 1.0 || iterations <= 1) return 1.0;
    const double f = std::min(1.0, static_cast<double>(k) / static_cast<double>(iterations - 1));
    return lr_final_ratio + (1.0 - lr_final_ratio) * 0.5 * (1.0 + std::cos(M_PI * f));
  }

  double lambda_recon_at(std::int64_t k) const {
    for (const auto& [until, value] : lambda_recon_schedule) {
      if (k <= until) return value;
    }
    return lambda_recon_schedule.back().second;
  }
};

struct RunRecordRow {
  std::int64_t k = 0;
  double loss_gct = 0.0;
  double loss_ict = 0.0;
  double loss_recon = 0.0;
  double lambda_recon = 0.0;
  std::int64_t delta_t_stage = 0;
  std::int64_t wall_ms = 0;
};

struct RunRecord {
  Algorithm algorithm = Algorithm::kIgct;
  std::vector<RunRecordRow> rows;
};

/// Everything a training loop owns. The loops update this in place so a
/// caller still holds the last good state if a step diverges.
struct TrainState {
  Algorithm algorithm = Algorithm::kIgct;
  std::int64_t k = 0;
  std::uint64_t seed = 0;
  PrecondModel denoiser;
  std::optional<PrecondModel> noiser;
  OptState opt_denoiser;
  std::optional<OptState> opt_noiser;
  RunRecord record;
};

using CheckpointHook = std::function<void(const TrainState&)>;

/// The noiser takes no guidance input.
inline NetSpec noiser_spec(NetSpec s) {
  s.guidance_features = 0;
  return s;
}

namespace detail {

// Stream ids for derive_rng. Each loss owns its stream so that removing one
// network never perturbs the randomness seen by the other.
enum Stream : std::uint64_t {
  kInitDenoiser = 1,
  kInitNoiser = 2,
  kGctStream = 11,
  kIctStream = 12,
  kReconStream = 13,
  kEdmStream = 21,
  kGcdStream = 31,
};

class WallClock {
 public:
  explicit WallClock(bool on) : on_(on), start_(std::chrono::steady_clock::now()) {}
  std::int64_t ms() const {
    if (!on_) return 0;
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool on_;
  std::chrono::steady_clock::time_point start_;
};

inline bool should_stop(const TrainState& s, const TrainConfig& cfg, const ScheduleConfig& sched) {
  if (s.k >= cfg.iterations) return true;
  return cfg.max_stage && halving_stage(s.k, sched.d) > *cfg.max_stage;
}

inline void maybe_checkpoint(const TrainState& s, const TrainConfig& cfg, const CheckpointHook& hook) {
  if (hook && cfg.checkpoint_every > 0 && s.k % cfg.checkpoint_every == 0) hook(s);
}

}  // namespace detail

inline TrainState init_state(Algorithm algo, const NetSpec& spec_in, const ScheduleConfig& sched,
                             const MixtureWorld& world, const TrainConfig& cfg, std::uint64_t seed) {
  NetSpec spec = spec_in;
  spec.data_dim = world.dims();
  spec.n_classes = world.n_classes();
  if (algo == Algorithm::kCfgEdm) spec.guidance_features = 0;
  TrainState s;
  s.algorithm = algo;
  s.seed = seed;
  s.record.algorithm = algo;
  Rng init_d = derive_rng(seed, detail::kInitDenoiser);
  s.denoiser = {ModelKind::kDenoiser, init_params(spec, init_d), sched.sigma_data, sched.t_min, sched.t_max};
  s.opt_denoiser = OptState::for_params(s.denoiser.net, cfg.lr);
  if (algo == Algorithm::kIgct) {
    Rng init_n = derive_rng(seed, detail::kInitNoiser);
    s.noiser = PrecondModel{ModelKind::kNoiser, init_params(noiser_spec(spec), init_n), sched.sigma_data,
                            sched.t_min, sched.t_max};
    s.opt_noiser = OptState::for_params(s.noiser->net, cfg.lr_noiser);
  }
  return s;
}

struct IgctOptions {
  bool with_noiser = true;  // false: denoiser-only ablation
  CheckpointHook on_checkpoint;
};

/// Joint loop: L = L_gct + L_ict + lambda_recon * L_recon, with L_recon only
/// on iterations where k % i_skip == 0. Denoiser gets gradients from L_gct and
/// the reconstruction term, noiser from L_ict and the reconstruction term.
inline void run_igct(TrainState& s, const TrainConfig& cfg, const ScheduleConfig& sched, const MixtureWorld& world,
                     const IgctOptions& opts = {}) {
  cfg.validate();
  sched.validate();
  const bool noiser_on = opts.with_noiser && s.noiser.has_value();
  Rng rng_gct = derive_rng(s.seed, detail::kGctStream);
  Rng rng_ict = derive_rng(s.seed, detail::kIctStream);
  Rng rng_recon = derive_rng(s.seed, detail::kReconStream);
  const detail::WallClock clock(cfg.record_wall_ms);
  while (!detail::should_stop(s, cfg, sched)) {
    s.opt_denoiser.lr = cfg.lr * cfg.lr_scale_at(s.k);
    if (s.opt_noiser) s.opt_noiser->lr = cfg.lr_noiser * cfg.lr_scale_at(s.k);
    LossResult gct = loss_gct(s.denoiser, s.k, cfg.batch_size, cfg.huber_c, sched, world, rng_gct);
    RunRecordRow row;
    row.k = s.k;
    row.loss_gct = gct.loss;
    row.delta_t_stage = halving_stage(s.k, sched.d);
    if (noiser_on) {
      LossResult ict = loss_ict(*s.noiser, s.k, cfg.batch_size, cfg.huber_c, sched, world, rng_ict);
      row.loss_ict = ict.loss;
      const double lam = cfg.lambda_recon_at(s.k);
      row.lambda_recon = lam;
      JointLossResult rec = loss_recon(s.denoiser, *s.noiser, s.k, cfg.i_skip, cfg.batch_size, sched.w_min,
                                       cfg.huber_c, world, rng_recon);
      row.loss_recon = rec.loss;
      gct.grad += rec.grad_denoiser.scale(lam);
      ict.grad += rec.grad_noiser.scale(lam);
      optimizer_step(s.denoiser.net, gct.grad, s.opt_denoiser);
      optimizer_step(s.noiser->net, ict.grad, *s.opt_noiser);
    } else {
      optimizer_step(s.denoiser.net, gct.grad, s.opt_denoiser);
    }
    if (s.k % cfg.log_every == 0) {
      row.wall_ms = clock.ms();
      s.record.rows.push_back(row);
    }
    ++s.k;
    detail::maybe_checkpoint(s, cfg, opts.on_checkpoint);
  }
}

/// Conditional EDM denoiser trained with label dropout, the CFG baseline.
inline void run_cfg_edm(TrainState& s, const TrainConfig& cfg, const ScheduleConfig& sched, const MixtureWorld& world,
                        const CheckpointHook& hook = {}) {
  cfg.validate();
  sched.validate();
  Rng rng = derive_rng(s.seed, detail::kEdmStream);
  const detail::WallClock clock(cfg.record_wall_ms);
  while (!detail::should_stop(s, cfg, sched)) {
    s.opt_denoiser.lr = cfg.lr * cfg.lr_scale_at(s.k);
    LossResult res = loss_edm_denoise(s.denoiser, cfg.batch_size, cfg.label_dropout, sched, world, rng);
    optimizer_step(s.denoiser.net, res.grad, s.opt_denoiser);
    if (s.k % cfg.log_every == 0) {
      RunRecordRow row;
      row.k = s.k;
      row.loss_gct = res.loss;
      row.wall_ms = clock.ms();
      s.record.rows.push_back(row);
    }
    ++s.k;
    detail::maybe_checkpoint(s, cfg, hook);
  }
}

/// Guided consistency distillation against the analytic CFG teacher on a
/// fixed Karras grid of distill_n steps.
inline void run_guided_cd(TrainState& s, const TrainConfig& cfg, const ScheduleConfig& sched,
                          const MixtureWorld& world, const CheckpointHook& hook = {}) {
  cfg.validate();
  sched.validate();
  Rng rng = derive_rng(s.seed, detail::kGcdStream);
  const auto desc = karras_levels(cfg.distill_n, sched.t_min, sched.t_max, cfg.rho);
  const std::vector<double> levels(desc.rbegin(), desc.rend());
  const detail::WallClock clock(cfg.record_wall_ms);
  while (!detail::should_stop(s, cfg, sched)) {
    s.opt_denoiser.lr = cfg.lr * cfg.lr_scale_at(s.k);
    const auto draws = draw_gcd(rng, cfg.batch_size, levels, sched, world);
    LossResult res = gcd_loss(s.denoiser, draws, cfg.huber_c);
    optimizer_step(s.denoiser.net, res.grad, s.opt_denoiser);
    if (s.k % cfg.log_every == 0) {
      RunRecordRow row;
      row.k = s.k;
      row.loss_gct = res.loss;
      row.wall_ms = clock.ms();
      s.record.rows.push_back(row);
    }
    ++s.k;
    detail::maybe_checkpoint(s, cfg, hook);
  }
}

inline void run_training(TrainState& s, const TrainConfig& cfg, const ScheduleConfig& sched,
                         const MixtureWorld& world, const CheckpointHook& hook = {}) {
  switch (s.algorithm) {
    case Algorithm::kIgct: run_igct(s, cfg, sched, world, {true, hook}); break;
    case Algorithm::kCfgEdm: run_cfg_edm(s, cfg, sched, world, hook); break;
    case Algorithm::kGuidedCd: run_guided_cd(s, cfg, sched, world, hook); break;
  }
}

}  // namespace igct
