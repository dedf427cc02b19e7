#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "igct/model.hpp"
#include "igct/oracle.hpp"
#include "igct/rng.hpp"
#include "igct/schedule.hpp"

namespace igct {

enum class ModelSource { kIgct, kCfgEdm, kGuidedCd, kOracle };

inline std::string to_string(ModelSource m) {
  switch (m) {
    case ModelSource::kIgct: return "igct";
    case ModelSource::kCfgEdm: return "cfg-edm";
    case ModelSource::kGuidedCd: return "guided-cd";
    case ModelSource::kOracle: return "oracle";
  }
  return "?";
}

inline ModelSource parse_model_source(const std::string& s) {
  if (s == "igct") return ModelSource::kIgct;
  if (s == "cfg-edm") return ModelSource::kCfgEdm;
  if (s == "guided-cd") return ModelSource::kGuidedCd;
  if (s == "oracle") return ModelSource::kOracle;
  throw std::invalid_argument("unknown method '" + s + "' (expected igct | cfg-edm | guided-cd | oracle)");
}

struct SampleRequest {
  ModelSource model = ModelSource::kIgct;
  int cls = 0;
  double w = 1.0;
  int nfe = 1;
  int count = 1000;
  std::uint64_t seed = 0;
  double t_mid = 0.8;  // re-noising level of the second consistency step
  double rho = 7.0;

  void validate() const {
    if (nfe < 1) throw std::invalid_argument("sample request: nfe must be >= 1");
    if (count < 1) throw std::invalid_argument("sample request: count must be >= 1");
    if ((model == ModelSource::kIgct || model == ModelSource::kGuidedCd) && nfe > 2) {
      throw std::invalid_argument("sample request: consistency sampling supports nfe 1 or 2");
    }
  }
};

/// Unguided class-conditional (or null-class) denoiser over a batch.
using ClassDenoiser = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&, double, ClassId)>;

inline ClassDenoiser oracle_denoiser(const MixtureWorld& world) {
  return [&world](const Eigen::MatrixXd& x, double t, ClassId c) { return exact_denoiser(x, t, world, c); };
}

inline ClassDenoiser model_denoiser(const PrecondModel& m, NfeCounter* counter = nullptr) {
  return [&m, counter](const Eigen::MatrixXd& x, double t, ClassId c) {
    return apply_model(m, x, t, c, std::nullopt, counter);
  };
}

/// Classifier-free combination w * D(x|c) + (1 - w) * D(x|null).
inline DenoiseFn guided(const ClassDenoiser& d, ClassId c, double w) {
  return [d, c, w](const Eigen::MatrixXd& x, double t) -> Eigen::MatrixXd {
    if (!c || w == 1.0) return d(x, t, c);
    return w * d(x, t, c) + (1.0 - w) * d(x, t, std::nullopt);
  };
}

/// Initial latents t_max * z, one derived stream per sample index.
inline Eigen::MatrixXd initial_latents(const SampleRequest& req, int dims, double t_max) {
  Eigen::MatrixXd x(dims, req.count);
  for (int i = 0; i < req.count; ++i) {
    Rng rng = derive_rng(req.seed, static_cast<std::uint64_t>(i));
    x.col(i) = t_max * normal_vector(rng, dims);
  }
  return x;
}

/// One or two step consistency sampling with a w-conditioned denoiser.
inline Eigen::MatrixXd cm_sample(const PrecondModel& denoiser, const SampleRequest& req, const ScheduleConfig& sched,
                                 NfeCounter* counter = nullptr) {
  req.validate();
  const int dims = denoiser.net.spec.data_dim;
  Eigen::MatrixXd x = initial_latents(req, dims, sched.t_max);
  x = apply_model(denoiser, x, sched.t_max, req.cls, req.w, counter);
  if (req.nfe == 2) {
    if (!(req.t_mid >= sched.t_min && req.t_mid <= sched.t_max)) {
      throw std::invalid_argument("cm_sample: t_mid outside [t_min, t_max]");
    }
    const double scale = std::sqrt(req.t_mid * req.t_mid - sched.t_min * sched.t_min);
    for (int i = 0; i < req.count; ++i) {
      Rng rng = derive_rng(req.seed, static_cast<std::uint64_t>(i));
      normal_vector(rng, dims);  // skip the first-step latent
      x.col(i) += scale * normal_vector(rng, dims);
    }
    x = apply_model(denoiser, x, req.t_mid, req.cls, req.w, counter);
  }
  return x;
}

/// Deterministic Heun sampling on the Karras grid from t_max to t_min.
inline Eigen::MatrixXd heun_sample(const SampleRequest& req, const ScheduleConfig& sched, const ClassDenoiser& model,
                                   int dims, std::vector<TrajectoryPoint>* trajectory = nullptr) {
  req.validate();
  const Eigen::MatrixXd x0 = initial_latents(req, dims, sched.t_max);
  const auto levels = karras_levels(req.nfe, sched.t_min, sched.t_max, req.rho);
  auto path = integrate_pf_ode(x0, levels, guided(model, req.cls, req.w), trajectory != nullptr);
  Eigen::MatrixXd out = path.back().x;
  if (trajectory) *trajectory = std::move(path);
  return out;
}

/// Single-step inversion: latent = N(x, t_min, c), a point at level t_max.
inline Eigen::MatrixXd noiser_invert(const PrecondModel& noiser, const Eigen::MatrixXd& x, int cls,
                                     NfeCounter* counter = nullptr) {
  return apply_model(noiser, x, noiser.t_min, cls, std::nullopt, counter);
}

inline Eigen::MatrixXd noiser_invert(const PrecondModel& noiser, const Eigen::MatrixXd& x, std::span<const int> classes,
                                     NfeCounter* counter = nullptr) {
  const std::vector<double> ts(classes.size(), noiser.t_min);
  return apply_model(noiser, x, ts, classes, nullptr, nullptr, counter);
}

/// Reverse Heun integration of the unguided ODE from t_min to t_max on the
/// same Karras grid heun_sample uses.
inline Eigen::MatrixXd ddim_invert(const ClassDenoiser& model, const Eigen::MatrixXd& x, int cls, int n_steps,
                                   const ScheduleConfig& sched, double rho = 7.0) {
  const auto down = karras_levels(n_steps, sched.t_min, sched.t_max, rho);
  const std::vector<double> up(down.rbegin(), down.rend());
  return integrate_pf_ode(x, up, guided(model, cls, 1.0), false).back().x;
}

/// Generation leg that starts from given latents instead of fresh noise.
inline Eigen::MatrixXd heun_generate_from(const ClassDenoiser& model, const Eigen::MatrixXd& latent, int cls, double w,
                                          int n_steps, const ScheduleConfig& sched, double rho = 7.0) {
  const auto levels = karras_levels(n_steps, sched.t_min, sched.t_max, rho);
  return integrate_pf_ode(latent, levels, guided(model, cls, w), false).back().x;
}

enum class EditMethod { kIgct, kDdim };

/// Two network evaluations: invert with the source class, then one
/// denoising step at t_max with the target class.
inline Eigen::MatrixXd edit_igct(const PrecondModel& denoiser, const PrecondModel& noiser, const Eigen::MatrixXd& x_src,
                                 int c_src, int c_tar, double w, NfeCounter* counter = nullptr) {
  if (c_src < 0 || c_src >= noiser.net.spec.n_classes) throw std::out_of_range("edit: unknown source class");
  if (c_tar < 0 || c_tar >= denoiser.net.spec.n_classes) throw std::out_of_range("edit: unknown target class");
  const Eigen::MatrixXd latent = noiser_invert(noiser, x_src, c_src, counter);
  return apply_model(denoiser, latent, denoiser.t_max, c_tar, w, counter);
}

/// Multi-step baseline: unguided inversion with the source class, guided
/// generation with the target class.
inline Eigen::MatrixXd edit_ddim(const ClassDenoiser& model, const Eigen::MatrixXd& x_src, int c_src, int c_tar,
                                 double w, int n_steps, const ScheduleConfig& sched, double rho = 7.0) {
  const Eigen::MatrixXd latent = ddim_invert(model, x_src, c_src, n_steps, sched, rho);
  return heun_generate_from(model, latent, c_tar, w, n_steps, sched, rho);
}

}  // namespace igct
