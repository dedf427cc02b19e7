#pragma once

// Sample generation per method and EvalReport assembly over a w sweep.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "igct/metrics.hpp"
#include "igct/sampler.hpp"
#include "igct/train.hpp"

namespace igct {

/// Trained states available for sampling; any may be absent.
struct ModelSet {
  std::optional<TrainState> igct, cfg_edm, guided_cd;

  const TrainState& require(ModelSource m) const {
    const std::optional<TrainState>* s = nullptr;
    switch (m) {
      case ModelSource::kIgct: s = &igct; break;
      case ModelSource::kCfgEdm: s = &cfg_edm; break;
      case ModelSource::kGuidedCd: s = &guided_cd; break;
      case ModelSource::kOracle: throw std::logic_error("oracle has no trained state");
    }
    if (!s->has_value()) throw std::invalid_argument("no trained " + to_string(m) + " checkpoint available");
    return **s;
  }
};

/// Seed for the samples of one class, so classes never share latents.
inline std::uint64_t class_seed(std::uint64_t seed, int cls) {
  return seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(cls + 1);
}

/// Generates req.count samples for one class. For trajectories (multi-step
/// methods only) pass a non-null `trajectory`.
inline Eigen::MatrixXd generate(const ModelSet& models, const MixtureWorld& world, const ScheduleConfig& sched,
                                const SampleRequest& req, NfeCounter* counter = nullptr,
                                std::vector<TrajectoryPoint>* trajectory = nullptr) {
  req.validate();
  world.check_class(req.cls);
  switch (req.model) {
    case ModelSource::kIgct:
    case ModelSource::kGuidedCd: {
      if (trajectory) throw std::invalid_argument("trajectories need a multi-step method");
      return cm_sample(models.require(req.model).denoiser, req, sched, counter);
    }
    case ModelSource::kCfgEdm:
      return heun_sample(req, sched, model_denoiser(models.require(req.model).denoiser, counter), world.dims(),
                         trajectory);
    case ModelSource::kOracle:
      return heun_sample(req, sched, oracle_denoiser(world), world.dims(), trajectory);
  }
  throw std::logic_error("generate: unreachable");
}

/// Held-out reference data for one class.
inline Eigen::MatrixXd reference_data(const MixtureWorld& world, int cls, int count, std::uint64_t seed) {
  Rng rng = derive_rng(seed ^ 0xda7a5e7ull, static_cast<std::uint64_t>(cls));
  Eigen::MatrixXd x(world.dims(), count);
  for (int i = 0; i < count; ++i) x.col(i) = sample_data(rng, world, cls).x;
  return x;
}

struct EvalSettings {
  int count = 10000;  // per class
  int k = 5;
  double band_sigmas = 3.0;
  int nfe = 1;
  int heun_steps = 18;
  double t_mid = 0.8;
  int recon_samples = 1000;
  std::uint64_t seed = 0;
};

/// Metrics for one (method, w): samples from every class pooled against an
/// equally sized reference set.
inline EvalReport evaluate_condition(const ModelSet& models, const MixtureWorld& world, const ScheduleConfig& sched,
                                     ModelSource method, double w, const EvalSettings& es) {
  const bool cm = method == ModelSource::kIgct || method == ModelSource::kGuidedCd;
  const int nfe = cm ? es.nfe : es.heun_steps;
  const int nc = world.n_classes();
  Eigen::MatrixXd gen(world.dims(), static_cast<Eigen::Index>(es.count) * nc);
  Eigen::MatrixXd ref(world.dims(), gen.cols());
  for (int c = 0; c < nc; ++c) {
    SampleRequest req;
    req.model = method;
    req.cls = c;
    req.w = w;
    req.nfe = nfe;
    req.count = es.count;
    req.seed = class_seed(es.seed, c);
    req.t_mid = es.t_mid;
    gen.middleCols(static_cast<Eigen::Index>(c) * es.count, es.count) = generate(models, world, sched, req);
    ref.middleCols(static_cast<Eigen::Index>(c) * es.count, es.count) = reference_data(world, c, es.count, es.seed);
  }
  EvalReport r;
  r.method = to_string(method);
  r.w = w;
  r.nfe = nfe;
  r.n_samples = static_cast<int>(gen.cols());
  r.w1 = wasserstein1(gen, ref);
  const PrecisionRecall pr = knn_precision_recall(gen, ref, es.k);
  r.precision = pr.precision;
  r.recall = pr.recall;
  r.overshoot_fraction = overshoot_fraction(gen, world, es.band_sigmas);

  if (method == ModelSource::kIgct && models.igct->noiser) {
    const TrainState& s = *models.igct;
    Eigen::MatrixXd x(world.dims(), es.recon_samples);
    std::vector<int> cls(static_cast<std::size_t>(es.recon_samples));
    Rng rng = derive_rng(es.seed ^ 0x4ec0ull, 0);
    for (int i = 0; i < es.recon_samples; ++i) {
      const LabeledSample d = sample_data(rng, world);
      x.col(i) = d.x;
      cls[static_cast<std::size_t>(i)] = d.c;
    }
    r.recon_mae = reconstruction_mae(s.denoiser, *s.noiser, x, cls, sched.w_min);
    const auto [mean_norm, std_ratio] = latent_statistics(noiser_invert(*s.noiser, x, cls), sched.t_max);
    r.latent_mean_norm = mean_norm;
    r.latent_std_ratio = std_ratio;
  }
  return r;
}

}  // namespace igct
