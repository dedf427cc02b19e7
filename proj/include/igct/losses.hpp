#pragma once

// Training objectives. Each objective is split into a draw step, which
// consumes randomness and builds the (online input, target input) pairs, and
// an evaluation step, which runs the networks and returns the batch-mean loss
// with its gradients. Splitting them lets tests feed hand-built draws.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "igct/error.hpp"
#include "igct/model.hpp"
#include "igct/oracle.hpp"
#include "igct/schedule.hpp"

namespace igct {

/// sqrt(||a - b||^2 + c^2) - c
inline double pseudo_huber(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double c) {
  if (a.size() != b.size()) throw std::invalid_argument("pseudo_huber: dimension mismatch");
  if (!(c > 0.0)) throw std::invalid_argument("pseudo_huber: c must be > 0");
  return std::sqrt((a - b).squaredNorm() + c * c) - c;
}

/// d/da of pseudo_huber(a, b, c).
inline Eigen::VectorXd pseudo_huber_grad(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double c) {
  const Eigen::VectorXd diff = a - b;
  return diff / std::sqrt(diff.squaredNorm() + c * c);
}

struct LossResult {
  double loss = 0.0;
  NetParams grad;
};

struct JointLossResult {
  double loss = 0.0;
  NetParams grad_denoiser;
  NetParams grad_noiser;
};

namespace detail {

inline void check_finite_loss(double loss, const char* what) {
  if (!std::isfinite(loss)) throw DivergenceError(std::string(what) + ": non-finite loss");
}

inline Eigen::MatrixXd stack(std::span<const Eigen::VectorXd* const> cols, int dims) {
  Eigen::MatrixXd m(dims, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = *cols[j];
  return m;
}

/// Batch-mean of weight_i * pseudo_huber(online_i, target_i) and the upstream
/// gradient with respect to the online outputs.
inline double weighted_huber(const Eigen::MatrixXd& online, const Eigen::MatrixXd& target,
                             std::span<const double> weight, double c, Eigen::MatrixXd& upstream) {
  const auto B = online.cols();
  upstream.resize(online.rows(), B);
  double total = 0.0;
  for (Eigen::Index j = 0; j < B; ++j) {
    const double wj = weight[static_cast<std::size_t>(j)];
    const Eigen::VectorXd a = online.col(j);
    const Eigen::VectorXd b = target.col(j);
    total += wj * pseudo_huber(a, b, c);
    upstream.col(j) = (wj / static_cast<double>(B)) * pseudo_huber_grad(a, b, c);
  }
  return total / static_cast<double>(B);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Guided consistency training (denoiser)
// ---------------------------------------------------------------------------

struct GctDraw {
  Eigen::VectorXd x_t, x_r;
  double t = 0.0, r = 0.0, w = 1.0, lambda = 0.0;
  int c = 0;
  bool guided = false;
};

/// Builds one guided-CT pair from explicit ingredients.
inline GctDraw make_gct_draw(const LabeledSample& src, const LabeledSample& tar, const Eigen::VectorXd& z, double t,
                             double w, bool guided, std::int64_t k, const ScheduleConfig& cfg) {
  const StepPair sp = step_pair(t, k, cfg);
  GctDraw d;
  d.t = t;
  d.r = sp.r;
  d.w = w;
  d.lambda = sp.lambda_gct;
  d.guided = guided;
  d.x_t = src.x + t * z;
  if (!guided) {
    d.x_r = d.x_t - sp.delta_t * z;
    d.c = src.c;
  } else {
    const Eigen::VectorXd z_star = (d.x_t - tar.x) / t;
    d.x_r = d.x_t - sp.delta_t * (w * z_star + (1.0 - w) * z);
    d.c = tar.c;
  }
  return d;
}

/// Draw a batch following the guided-CT recipe: source and target samples,
/// noise, noise level, guidance weight, then the branch coin.
inline std::vector<GctDraw> draw_gct(Rng& rng, int batch, std::int64_t k, const ScheduleConfig& cfg,
                                     const MixtureWorld& world) {
  std::vector<GctDraw> out;
  out.reserve(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) {
    const LabeledSample src = sample_data(rng, world);
    const LabeledSample tar = sample_data(rng, world);
    const Eigen::VectorXd z = normal_vector(rng, world.dims());
    const double t = sample_noise_level(rng, cfg);
    const double w = sample_guidance_w(rng, cfg);
    const double rho = uniform01(rng);
    const bool guided = !(rho > guidance_mask_prob(t, cfg));
    out.push_back(make_gct_draw(src, tar, z, t, w, guided, k, cfg));
  }
  return out;
}

inline LossResult gct_loss(const PrecondModel& denoiser, std::span<const GctDraw> draws, double huber_c) {
  const auto B = draws.size();
  const int dims = denoiser.net.spec.data_dim;
  Eigen::MatrixXd x_t(dims, static_cast<Eigen::Index>(B)), x_r(dims, static_cast<Eigen::Index>(B));
  std::vector<double> t(B), r(B), lam(B);
  std::vector<int> c(B);
  Eigen::VectorXd w(static_cast<Eigen::Index>(B));
  for (std::size_t i = 0; i < B; ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    x_t.col(j) = draws[i].x_t;
    x_r.col(j) = draws[i].x_r;
    t[i] = draws[i].t;
    r[i] = draws[i].r;
    lam[i] = draws[i].lambda;
    c[i] = draws[i].c;
    w[j] = draws[i].w;
  }
  ModelTape tape;
  const Eigen::MatrixXd online = apply_model(denoiser, x_t, t, c, &w, &tape);
  const Eigen::MatrixXd target = apply_model(denoiser, x_r, r, c, &w, nullptr);
  Eigen::MatrixXd upstream;
  LossResult res;
  res.loss = detail::weighted_huber(online, target, lam, huber_c, upstream);
  detail::check_finite_loss(res.loss, "loss_gct");
  res.grad = backward_model(denoiser, tape, upstream).params;
  return res;
}

inline LossResult loss_gct(const PrecondModel& denoiser, std::int64_t k, int batch, double huber_c,
                           const ScheduleConfig& cfg, const MixtureWorld& world, Rng& rng) {
  const auto draws = draw_gct(rng, batch, k, cfg, world);
  return gct_loss(denoiser, draws, huber_c);
}

// ---------------------------------------------------------------------------
// Inverse consistency training (noiser)
// ---------------------------------------------------------------------------

struct IctDraw {
  Eigen::VectorXd x_t, x_r;
  double t = 0.0, r = 0.0, lambda = 0.0;
  int c = 0;
};

inline IctDraw make_ict_draw(const LabeledSample& s, const Eigen::VectorXd& z, double t, std::int64_t k,
                             const ScheduleConfig& cfg) {
  const StepPair sp = step_pair(t, k, cfg);
  IctDraw d;
  d.t = t;
  d.r = sp.r;
  d.lambda = sp.lambda_ict;
  d.c = s.c;
  d.x_t = s.x + t * z;
  d.x_r = d.x_t - sp.delta_t * z;
  return d;
}

inline std::vector<IctDraw> draw_ict(Rng& rng, int batch, std::int64_t k, const ScheduleConfig& cfg,
                                     const MixtureWorld& world) {
  std::vector<IctDraw> out;
  out.reserve(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) {
    const LabeledSample s = sample_data(rng, world);
    const Eigen::VectorXd z = normal_vector(rng, world.dims());
    const double t = sample_noise_level(rng, cfg);
    out.push_back(make_ict_draw(s, z, t, k, cfg));
  }
  return out;
}

/// Online branch is the cleaner point x_r; the noisier point x_t is the
/// frozen target.
inline LossResult ict_loss(const PrecondModel& noiser, std::span<const IctDraw> draws, double huber_c) {
  const auto B = draws.size();
  const int dims = noiser.net.spec.data_dim;
  Eigen::MatrixXd x_t(dims, static_cast<Eigen::Index>(B)), x_r(dims, static_cast<Eigen::Index>(B));
  std::vector<double> t(B), r(B), lam(B);
  std::vector<int> c(B);
  for (std::size_t i = 0; i < B; ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    x_t.col(j) = draws[i].x_t;
    x_r.col(j) = draws[i].x_r;
    t[i] = draws[i].t;
    r[i] = draws[i].r;
    lam[i] = draws[i].lambda;
    c[i] = draws[i].c;
  }
  ModelTape tape;
  const Eigen::MatrixXd online = apply_model(noiser, x_r, r, c, nullptr, &tape);
  const Eigen::MatrixXd target = apply_model(noiser, x_t, t, c, nullptr, nullptr);
  Eigen::MatrixXd upstream;
  LossResult res;
  res.loss = detail::weighted_huber(online, target, lam, huber_c, upstream);
  detail::check_finite_loss(res.loss, "loss_ict");
  res.grad = backward_model(noiser, tape, upstream).params;
  return res;
}

inline LossResult loss_ict(const PrecondModel& noiser, std::int64_t k, int batch, double huber_c,
                           const ScheduleConfig& cfg, const MixtureWorld& world, Rng& rng) {
  const auto draws = draw_ict(rng, batch, k, cfg, world);
  return ict_loss(noiser, draws, huber_c);
}

// ---------------------------------------------------------------------------
// Reconstruction (both networks)
// ---------------------------------------------------------------------------

/// d(D(N(x_0, t_min, c), t_max, c, w), x_0), gradients through both nets.
inline JointLossResult recon_loss(const PrecondModel& denoiser, const PrecondModel& noiser,
                                  std::span<const LabeledSample> batch, double w, double huber_c) {
  const auto B = batch.size();
  const int dims = denoiser.net.spec.data_dim;
  Eigen::MatrixXd x0(dims, static_cast<Eigen::Index>(B));
  std::vector<int> c(B);
  for (std::size_t i = 0; i < B; ++i) {
    x0.col(static_cast<Eigen::Index>(i)) = batch[i].x;
    c[i] = batch[i].c;
  }
  const std::vector<double> t_lo(B, noiser.t_min), t_hi(B, denoiser.t_max);
  const Eigen::VectorXd wv = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(B), w);
  ModelTape n_tape, d_tape;
  const Eigen::MatrixXd latent = apply_model(noiser, x0, t_lo, c, nullptr, &n_tape);
  const Eigen::MatrixXd recon = apply_model(denoiser, latent, t_hi, c, &wv, &d_tape);
  const std::vector<double> ones(B, 1.0);
  Eigen::MatrixXd upstream;
  JointLossResult res;
  res.loss = detail::weighted_huber(recon, x0, ones, huber_c, upstream);
  detail::check_finite_loss(res.loss, "loss_recon");
  Gradients gd = backward_model(denoiser, d_tape, upstream);
  res.grad_denoiser = std::move(gd.params);
  res.grad_noiser = backward_model(noiser, n_tape, gd.input).params;
  return res;
}

inline std::vector<LabeledSample> draw_data(Rng& rng, int batch, const MixtureWorld& world) {
  std::vector<LabeledSample> out;
  out.reserve(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) out.push_back(sample_data(rng, world));
  return out;
}

/// Reconstruction objective gated by the i_skip cadence: off-cadence
/// iterations contribute exactly zero loss and gradient.
inline JointLossResult loss_recon(const PrecondModel& denoiser, const PrecondModel& noiser, std::int64_t k,
                                  std::int64_t i_skip, int batch, double w, double huber_c, const MixtureWorld& world,
                                  Rng& rng) {
  if (k % i_skip != 0) {
    return {0.0, denoiser.net.zeros_like(), noiser.net.zeros_like()};
  }
  const auto data = draw_data(rng, batch, world);
  return recon_loss(denoiser, noiser, data, w, huber_c);
}

// ---------------------------------------------------------------------------
// CFG diffusion baseline (EDM denoising with label dropout)
// ---------------------------------------------------------------------------

struct EdmDraw {
  Eigen::VectorXd x0, x_t;
  double t = 0.0;
  int c = kNullClass;
};

inline double edm_weight(double t, double sigma_data) {
  return (t * t + sigma_data * sigma_data) / (t * sigma_data * t * sigma_data);
}

inline std::vector<EdmDraw> draw_edm(Rng& rng, int batch, double label_dropout, const ScheduleConfig& cfg,
                                     const MixtureWorld& world) {
  std::vector<EdmDraw> out;
  out.reserve(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) {
    const LabeledSample s = sample_data(rng, world);
    const bool drop = uniform01(rng) < label_dropout;
    const Eigen::VectorXd z = normal_vector(rng, world.dims());
    const double t = sample_noise_level(rng, cfg);
    out.push_back({s.x, s.x + t * z, t, drop ? kNullClass : s.c});
  }
  return out;
}

inline LossResult edm_loss(const PrecondModel& denoiser, std::span<const EdmDraw> draws) {
  const auto B = draws.size();
  const int dims = denoiser.net.spec.data_dim;
  Eigen::MatrixXd x_t(dims, static_cast<Eigen::Index>(B)), x0(dims, static_cast<Eigen::Index>(B));
  std::vector<double> t(B);
  std::vector<int> c(B);
  for (std::size_t i = 0; i < B; ++i) {
    x_t.col(static_cast<Eigen::Index>(i)) = draws[i].x_t;
    x0.col(static_cast<Eigen::Index>(i)) = draws[i].x0;
    t[i] = draws[i].t;
    c[i] = draws[i].c;
  }
  ModelTape tape;
  const Eigen::MatrixXd out = apply_model(denoiser, x_t, t, c, nullptr, &tape);
  Eigen::MatrixXd upstream(dims, static_cast<Eigen::Index>(B));
  double total = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    const double lam = edm_weight(t[i], denoiser.sigma_data);
    const Eigen::VectorXd diff = out.col(j) - x0.col(j);
    total += lam * diff.squaredNorm();
    upstream.col(j) = (2.0 * lam / static_cast<double>(B)) * diff;
  }
  LossResult res;
  res.loss = total / static_cast<double>(B);
  detail::check_finite_loss(res.loss, "loss_edm_denoise");
  res.grad = backward_model(denoiser, tape, upstream).params;
  return res;
}

inline LossResult loss_edm_denoise(const PrecondModel& denoiser, int batch, double label_dropout,
                                   const ScheduleConfig& cfg, const MixtureWorld& world, Rng& rng) {
  const auto draws = draw_edm(rng, batch, label_dropout, cfg, world);
  return edm_loss(denoiser, draws);
}

// ---------------------------------------------------------------------------
// Guided consistency distillation baseline with the analytic teacher
// ---------------------------------------------------------------------------

struct GcdDraw {
  Eigen::VectorXd x_next, x_cur;  // x at t_{n+1} and the teacher's x at t_n
  double t_next = 0.0, t_cur = 0.0, w = 1.0;
  int c = 0;
};

/// One teacher Heun step of the guided analytic ODE for a single sample.
inline Eigen::VectorXd teacher_step(const Eigen::VectorXd& x, double t_from, double t_to, const MixtureWorld& world,
                                    int c, double w) {
  const DenoiseFn fn = [&](const Eigen::MatrixXd& xs, double t) { return cfg_denoiser(xs, t, world, c, w); };
  return heun_step(Eigen::MatrixXd(x), t_from, t_to, fn).col(0);
}

/// levels ascend: levels[0] = t_min ... levels[N] = t_max.
inline std::vector<GcdDraw> draw_gcd(Rng& rng, int batch, std::span<const double> levels, const ScheduleConfig& cfg,
                                     const MixtureWorld& world) {
  const int N = static_cast<int>(levels.size()) - 1;
  std::vector<GcdDraw> out;
  out.reserve(static_cast<std::size_t>(batch));
  std::uniform_int_distribution<int> pick(0, N - 1);
  for (int i = 0; i < batch; ++i) {
    const LabeledSample s = sample_data(rng, world);
    const Eigen::VectorXd z = normal_vector(rng, world.dims());
    const int n = pick(rng);
    const double w = sample_guidance_w(rng, cfg);
    GcdDraw d;
    d.t_next = levels[static_cast<std::size_t>(n + 1)];
    d.t_cur = levels[static_cast<std::size_t>(n)];
    d.w = w;
    d.c = s.c;
    d.x_next = s.x + d.t_next * z;
    d.x_cur = teacher_step(d.x_next, d.t_next, d.t_cur, world, s.c, w);
    out.push_back(std::move(d));
  }
  return out;
}

inline LossResult gcd_loss(const PrecondModel& denoiser, std::span<const GcdDraw> draws, double huber_c) {
  const auto B = draws.size();
  const int dims = denoiser.net.spec.data_dim;
  Eigen::MatrixXd xn(dims, static_cast<Eigen::Index>(B)), xc(dims, static_cast<Eigen::Index>(B));
  std::vector<double> tn(B), tc(B);
  std::vector<int> c(B);
  Eigen::VectorXd w(static_cast<Eigen::Index>(B));
  for (std::size_t i = 0; i < B; ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    xn.col(j) = draws[i].x_next;
    xc.col(j) = draws[i].x_cur;
    tn[i] = draws[i].t_next;
    tc[i] = draws[i].t_cur;
    c[i] = draws[i].c;
    w[j] = draws[i].w;
  }
  ModelTape tape;
  const Eigen::MatrixXd online = apply_model(denoiser, xn, tn, c, &w, &tape);
  const Eigen::MatrixXd target = apply_model(denoiser, xc, tc, c, &w, nullptr);
  const std::vector<double> ones(B, 1.0);
  Eigen::MatrixXd upstream;
  LossResult res;
  res.loss = detail::weighted_huber(online, target, ones, huber_c, upstream);
  detail::check_finite_loss(res.loss, "loss_gcd");
  res.grad = backward_model(denoiser, tape, upstream).params;
  return res;
}

}  // namespace igct
