#pragma once

// Analytic labeled Gaussian-mixture world. Every quantity a diffusion or
// consistency model tries to learn has a closed form here: the noisy
// marginals, the posterior mean E[x_0 | x_t] (with and without a class), the
// score, and the guided probability-flow ODE.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "igct/error.hpp"
#include "igct/rng.hpp"
#include "igct/schedule.hpp"

namespace igct {

using ClassId = std::optional<int>;  // nullopt is the unconditional (null) class

struct Component {
  int class_id = 0;
  Eigen::VectorXd mean;
  double std = 1.0;
  double weight = 1.0;
};

struct LabeledSample {
  Eigen::VectorXd x;
  int c = 0;
};

class MixtureWorld {
 public:
  MixtureWorld() = default;
  MixtureWorld(int dims, std::vector<Component> components)
      : dims_(dims), components_(std::move(components)) {
    validate();
    derive();
  }

  /// Two classes, one isotropic Gaussian each, at -separation/2 and
  /// +separation/2 along every axis. dims = 1 gives the +-2 toy.
  static MixtureWorld two_mode(int dims = 1, double center = 2.0, double std = 0.2) {
    std::vector<Component> c(2);
    c[0] = {0, Eigen::VectorXd::Constant(dims, -center), std, 0.5};
    c[1] = {1, Eigen::VectorXd::Constant(dims, center), std, 0.5};
    return MixtureWorld(dims, std::move(c));
  }

  int dims() const { return dims_; }
  int n_classes() const { return n_classes_; }
  double sigma_data() const { return sigma_data_; }
  const std::vector<Component>& components() const { return components_; }
  double class_weight(int c) const { return class_weight_.at(static_cast<std::size_t>(c)); }

  void check_class(int c) const {
    if (c < 0 || c >= n_classes_) {
      throw std::out_of_range("unknown class id " + std::to_string(c));
    }
  }

 private:
  void validate() const {
    if (dims_ < 1) throw ConfigError("world.dims: must be >= 1");
    if (components_.empty()) throw ConfigError("world.components: must be non-empty");
    double total = 0.0;
    std::set<int> ids;
    for (std::size_t i = 0; i < components_.size(); ++i) {
      const auto& c = components_[i];
      const std::string where = "world.components[" + std::to_string(i) + "]";
      if (c.mean.size() != dims_) throw ConfigError(where + ".mean: dimension mismatch");
      if (!(c.std > 0.0)) throw ConfigError(where + ".std: must be > 0");
      if (!(c.weight > 0.0)) throw ConfigError(where + ".weight: must be > 0");
      if (c.class_id < 0) throw ConfigError(where + ".class_id: must be >= 0");
      total += c.weight;
      ids.insert(c.class_id);
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("world.components: weights must sum to 1");
    // Class ids must be 0..n-1 so they index the embedding table directly.
    int expect = 0;
    for (int id : ids) {
      if (id != expect++) throw ConfigError("world.components: class ids must be contiguous from 0");
    }
  }

  void derive() {
    n_classes_ = 0;
    for (const auto& c : components_) n_classes_ = std::max(n_classes_, c.class_id + 1);
    class_weight_.assign(static_cast<std::size_t>(n_classes_), 0.0);
    Eigen::VectorXd m = Eigen::VectorXd::Zero(dims_);
    for (const auto& c : components_) {
      class_weight_[static_cast<std::size_t>(c.class_id)] += c.weight;
      m += c.weight * c.mean;
    }
    double var = 0.0;
    for (const auto& c : components_) {
      var += c.weight * ((c.mean - m).squaredNorm() + dims_ * c.std * c.std);
    }
    sigma_data_ = std::sqrt(var / dims_);
  }

  int dims_ = 1;
  std::vector<Component> components_;
  int n_classes_ = 0;
  std::vector<double> class_weight_;
  double sigma_data_ = 1.0;
};

namespace detail {

inline bool in_class(const Component& comp, const ClassId& cls) {
  return !cls || comp.class_id == *cls;
}

/// Normalized posterior component responsibilities at a single point.
/// Log-sum-exp keeps tiny t (t_min = 0.002) finite.
inline void responsibilities(const Eigen::Ref<const Eigen::VectorXd>& x, double t,
                             const MixtureWorld& world, const ClassId& cls,
                             std::vector<double>& out) {
  const auto& comps = world.components();
  out.assign(comps.size(), -std::numeric_limits<double>::infinity());
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < comps.size(); ++k) {
    if (!in_class(comps[k], cls)) continue;
    const double v = comps[k].std * comps[k].std + t * t;
    const double lw = std::log(comps[k].weight) - 0.5 * world.dims() * std::log(v) -
                      0.5 * (x - comps[k].mean).squaredNorm() / v;
    out[k] = lw;
    best = std::max(best, lw);
  }
  double sum = 0.0;
  for (double& v : out) {
    v = std::isinf(v) ? 0.0 : std::exp(v - best);
    sum += v;
  }
  for (double& v : out) v /= sum;
}

}  // namespace detail

/// Draw one labeled sample, optionally restricted to a class.
inline LabeledSample sample_data(Rng& rng, const MixtureWorld& world, ClassId cls = std::nullopt) {
  if (cls) world.check_class(*cls);
  const auto& comps = world.components();
  const double total = cls ? world.class_weight(*cls) : 1.0;
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  std::size_t pick = comps.size();
  std::size_t last = comps.size();
  for (std::size_t k = 0; k < comps.size(); ++k) {
    if (!detail::in_class(comps[k], cls)) continue;
    last = k;
    acc += comps[k].weight;
    if (u < acc) {
      pick = k;
      break;
    }
  }
  if (pick == comps.size()) pick = last;  // u rounded onto the upper edge
  const auto& c = comps[pick];
  LabeledSample s;
  s.x = c.mean + c.std * normal_vector(rng, world.dims());
  s.c = c.class_id;
  return s;
}

/// E[x_0 | x_t] for x_t = x_0 + t z, column-wise over a batch.
inline Eigen::MatrixXd exact_denoiser(const Eigen::MatrixXd& x_t, double t, const MixtureWorld& world,
                                      ClassId cls = std::nullopt) {
  if (t < 0.0) throw std::domain_error("exact_denoiser: negative t");
  if (cls) world.check_class(*cls);
  const auto& comps = world.components();
  Eigen::MatrixXd out(x_t.rows(), x_t.cols());
  std::vector<double> resp;
  for (Eigen::Index j = 0; j < x_t.cols(); ++j) {
    const auto x = x_t.col(j);
    detail::responsibilities(x, t, world, cls, resp);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(x_t.rows());
    for (std::size_t k = 0; k < comps.size(); ++k) {
      if (resp[k] == 0.0) continue;
      const double s2 = comps[k].std * comps[k].std;
      const double shrink = s2 / (s2 + t * t);
      acc += resp[k] * (comps[k].mean + shrink * (x - comps[k].mean));
    }
    out.col(j) = acc;
  }
  return out;
}

inline Eigen::VectorXd exact_denoiser(const Eigen::VectorXd& x_t, double t, const MixtureWorld& world,
                                      ClassId cls = std::nullopt) {
  return exact_denoiser(Eigen::MatrixXd(x_t), t, world, cls).col(0);
}

/// log p_t(x) of the mixture convolved with N(0, t^2 I).
inline double log_density(const Eigen::VectorXd& x, double t, const MixtureWorld& world,
                          ClassId cls = std::nullopt) {
  const auto& comps = world.components();
  const double total = cls ? world.class_weight(*cls) : 1.0;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> lw;
  for (const auto& c : comps) {
    if (!detail::in_class(c, cls)) continue;
    const double v = c.std * c.std + t * t;
    const double l = std::log(c.weight / total) - 0.5 * x.size() * std::log(2.0 * M_PI * v) -
                     0.5 * (x - c.mean).squaredNorm() / v;
    lw.push_back(l);
    best = std::max(best, l);
  }
  double s = 0.0;
  for (double l : lw) s += std::exp(l - best);
  return best + std::log(s);
}

/// Score of the noisy marginal: (E[x_0 | x_t] - x_t) / t^2.
inline Eigen::MatrixXd exact_score(const Eigen::MatrixXd& x_t, double t, const MixtureWorld& world,
                                   ClassId cls = std::nullopt) {
  if (!(t > 0.0)) throw std::domain_error("exact_score: t must be > 0");
  return (exact_denoiser(x_t, t, world, cls) - x_t) / (t * t);
}

/// Classifier-free guided denoiser w * D(x|c) + (1 - w) * D(x|null).
inline Eigen::MatrixXd cfg_denoiser(const Eigen::MatrixXd& x_t, double t, const MixtureWorld& world,
                                    ClassId cls, double w) {
  if (!cls) return exact_denoiser(x_t, t, world, std::nullopt);
  if (w == 1.0) return exact_denoiser(x_t, t, world, cls);
  return w * exact_denoiser(x_t, t, world, cls) + (1.0 - w) * exact_denoiser(x_t, t, world, std::nullopt);
}

// ---------------------------------------------------------------------------
// Probability-flow ODE
// ---------------------------------------------------------------------------

/// Denoiser at a shared noise level for a batch of columns.
using DenoiseFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&, double)>;

struct TrajectoryPoint {
  double t = 0.0;
  Eigen::MatrixXd x;
};

/// One Heun step of dx/dt = (x - D(x; t)) / t from t_cur to t_next.
inline Eigen::MatrixXd heun_step(const Eigen::MatrixXd& x, double t_cur, double t_next, const DenoiseFn& denoise) {
  const double h = t_next - t_cur;
  const Eigen::MatrixXd d1 = (x - denoise(x, t_cur)) / t_cur;
  const Eigen::MatrixXd x_euler = x + h * d1;
  if (t_next == 0.0) return x_euler;
  const Eigen::MatrixXd d2 = (x_euler - denoise(x_euler, t_next)) / t_next;
  return x + h * 0.5 * (d1 + d2);
}

/// Heun integration along an explicit, strictly monotone level sequence.
inline std::vector<TrajectoryPoint> integrate_pf_ode(const Eigen::MatrixXd& x_start, const std::vector<double>& levels,
                                                     const DenoiseFn& denoise, bool keep_path = true) {
  if (levels.size() < 2) throw std::invalid_argument("integrate_pf_ode: need at least two levels");
  const bool down = levels[1] < levels[0];
  for (std::size_t i = 1; i < levels.size(); ++i) {
    const bool ok = down ? levels[i] < levels[i - 1] : levels[i] > levels[i - 1];
    if (!ok) throw std::invalid_argument("integrate_pf_ode: non-monotone time grid");
    if (!(levels[i - 1] > 0.0)) throw std::invalid_argument("integrate_pf_ode: levels must be > 0");
  }
  std::vector<TrajectoryPoint> path;
  path.push_back({levels[0], x_start});
  Eigen::MatrixXd x = x_start;
  for (std::size_t i = 1; i < levels.size(); ++i) {
    x = heun_step(x, levels[i - 1], levels[i], denoise);
    if (keep_path || i + 1 == levels.size()) path.push_back({levels[i], x});
  }
  return path;
}

/// Karras grid between two levels, ordered from t_start towards t_end.
inline std::vector<double> ode_levels(double t_start, double t_end, int n_steps, double rho = 7.0) {
  if (t_start == t_end) throw std::invalid_argument("ode_levels: t_start == t_end");
  if (t_start > t_end) return karras_levels(n_steps, t_end, t_start, rho);
  auto lv = karras_levels(n_steps, t_start, t_end, rho);
  return {lv.rbegin(), lv.rend()};
}

/// Guided PF-ODE of the analytic world, Heun on a Karras grid. t_start >
/// t_end generates; t_start < t_end inverts.
inline std::vector<TrajectoryPoint> solve_pf_ode(const Eigen::MatrixXd& x_start, double t_start, double t_end,
                                                 const MixtureWorld& world, ClassId cls, double w, int n_steps,
                                                 bool keep_path = true) {
  if (n_steps < 1) throw std::invalid_argument("solve_pf_ode: n_steps must be >= 1");
  const DenoiseFn fn = [&](const Eigen::MatrixXd& x, double t) { return cfg_denoiser(x, t, world, cls, w); };
  return integrate_pf_ode(x_start, ode_levels(t_start, t_end, n_steps), fn, keep_path);
}

}  // namespace igct
