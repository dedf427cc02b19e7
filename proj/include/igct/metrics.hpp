#pragma once

// Low-dimensional sample-quality metrics: W1 (exact in 1D, sliced above),
// k-NN manifold precision/recall, out-of-mode overshoot, reconstruction error.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "igct/model.hpp"
#include "igct/oracle.hpp"
#include "igct/rng.hpp"

namespace igct {

struct EvalReport {
  std::string method;
  double w = 1.0;
  int nfe = 1;
  double w1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double overshoot_fraction = 0.0;
  std::optional<double> recon_mae;
  std::optional<double> latent_mean_norm;
  std::optional<double> latent_std_ratio;
  int n_samples = 0;
};

namespace detail {

inline std::vector<double> sorted_row(const Eigen::MatrixXd& m, Eigen::Index row) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(j)] = m(row, j);
  std::sort(v.begin(), v.end());
  return v;
}

/// Exact W1 between two sorted empirical distributions of any sizes:
/// integral over u of |F^-1(u) - G^-1(u)|.
inline double w1_sorted(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double u = 0.0, total = 0.0;
  while (i < a.size() && j < b.size()) {
    const double next_a = static_cast<double>(i + 1) / na;
    const double next_b = static_cast<double>(j + 1) / nb;
    const double next = std::min(next_a, next_b);
    total += (next - u) * std::abs(a[i] - b[j]);
    u = next;
    if (next_a <= next) ++i;
    if (next_b <= next) ++j;
  }
  return total;
}

/// k-th nearest-neighbour distance of every point within its own set (self
/// excluded).
inline std::vector<double> knn_radii(const Eigen::MatrixXd& pts, int k) {
  const Eigen::Index n = pts.cols();
  std::vector<double> radii(static_cast<std::size_t>(n));
  if (pts.rows() == 1) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return pts(0, a) < pts(0, b); });
    std::vector<double> cand;
    for (Eigen::Index p = 0; p < n; ++p) {
      cand.clear();
      const Eigen::Index lo = std::max<Eigen::Index>(0, p - k), hi = std::min<Eigen::Index>(n - 1, p + k);
      const double x = pts(0, order[static_cast<std::size_t>(p)]);
      for (Eigen::Index q = lo; q <= hi; ++q) {
        if (q != p) cand.push_back(std::abs(pts(0, order[static_cast<std::size_t>(q)]) - x));
      }
      std::nth_element(cand.begin(), cand.begin() + (k - 1), cand.end());
      radii[static_cast<std::size_t>(order[static_cast<std::size_t>(p)])] = cand[static_cast<std::size_t>(k - 1)];
    }
    return radii;
  }
  std::vector<double> d(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) d[m++] = (pts.col(i) - pts.col(j)).norm();
    }
    std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
    radii[static_cast<std::size_t>(i)] = d[static_cast<std::size_t>(k - 1)];
  }
  return radii;
}

/// Fraction of `query` columns inside the union of balls (centers, radii).
inline double coverage(const Eigen::MatrixXd& query, const Eigen::MatrixXd& centers, const std::vector<double>& radii) {
  const Eigen::Index nq = query.cols();
  std::size_t hits = 0;
  if (query.rows() == 1) {
    // Union of intervals, merged, then binary search.
    std::vector<std::pair<double, double>> iv(radii.size());
    for (std::size_t i = 0; i < radii.size(); ++i) {
      const double c = centers(0, static_cast<Eigen::Index>(i));
      iv[i] = {c - radii[i], c + radii[i]};
    }
    std::sort(iv.begin(), iv.end());
    std::vector<std::pair<double, double>> merged;
    for (const auto& s : iv) {
      if (!merged.empty() && s.first <= merged.back().second) {
        merged.back().second = std::max(merged.back().second, s.second);
      } else {
        merged.push_back(s);
      }
    }
    for (Eigen::Index q = 0; q < nq; ++q) {
      const double x = query(0, q);
      auto it = std::upper_bound(merged.begin(), merged.end(), x,
                                 [](double v, const std::pair<double, double>& s) { return v < s.first; });
      if (it != merged.begin() && x <= std::prev(it)->second) ++hits;
    }
  } else {
    for (Eigen::Index q = 0; q < nq; ++q) {
      for (Eigen::Index i = 0; i < centers.cols(); ++i) {
        if ((query.col(q) - centers.col(i)).norm() <= radii[static_cast<std::size_t>(i)]) {
          ++hits;
          break;
        }
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(nq);
}

}  // namespace detail

/// W1 distance. Exact for one-dimensional data; sliced (mean over a fixed set
/// of projection directions) otherwise.
inline double wasserstein1(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& reference, int projections = 64) {
  if (samples.cols() == 0 || reference.cols() == 0) throw std::invalid_argument("wasserstein1: empty input");
  if (samples.rows() != reference.rows()) throw std::invalid_argument("wasserstein1: dimension mismatch");
  if (samples.rows() == 1) return detail::w1_sorted(detail::sorted_row(samples, 0), detail::sorted_row(reference, 0));
  const int dims = static_cast<int>(samples.rows());
  Rng rng = derive_rng(0x51ced, static_cast<std::uint64_t>(dims));
  double total = 0.0;
  for (int p = 0; p < projections; ++p) {
    Eigen::VectorXd dir(dims);
    if (dims == 2) {
      const double a = M_PI * p / projections;
      dir << std::cos(a), std::sin(a);
    } else {
      dir = normal_vector(rng, dims).normalized();
    }
    const Eigen::MatrixXd ps = dir.transpose() * samples;
    const Eigen::MatrixXd pr = dir.transpose() * reference;
    total += detail::w1_sorted(detail::sorted_row(ps, 0), detail::sorted_row(pr, 0));
  }
  return total / projections;
}

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  bool degenerate = false;  // some k-NN radius was zero and got floored
};

/// Manifold precision/recall: a generated point is precise if it lies within
/// the k-NN radius of some real point; a real point is recalled if it lies
/// within the k-NN radius of some generated point.
inline PrecisionRecall knn_precision_recall(const Eigen::MatrixXd& gen, const Eigen::MatrixXd& real, int k = 5) {
  if (gen.cols() == 0 || real.cols() == 0) throw std::invalid_argument("knn_precision_recall: empty input");
  if (gen.rows() != real.rows()) throw std::invalid_argument("knn_precision_recall: dimension mismatch");
  if (k < 1 || k >= gen.cols() || k >= real.cols()) {
    throw std::invalid_argument("knn_precision_recall: need 1 <= k < set sizes");
  }
  PrecisionRecall out;
  auto floor_radii = [&](std::vector<double>& r) {
    for (double& v : r) {
      if (v <= 0.0) {
        v = std::numeric_limits<double>::epsilon();
        out.degenerate = true;
      }
    }
  };
  auto r_real = detail::knn_radii(real, k);
  auto r_gen = detail::knn_radii(gen, k);
  floor_radii(r_real);
  floor_radii(r_gen);
  out.precision = detail::coverage(gen, real, r_real);
  out.recall = detail::coverage(real, gen, r_gen);
  return out;
}

/// Fraction of samples farther than band_sigmas * std from every component
/// mean of the world.
inline double overshoot_fraction(const Eigen::MatrixXd& samples, const MixtureWorld& world, double band_sigmas) {
  if (samples.cols() == 0) return 0.0;
  std::size_t out = 0;
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    bool far = true;
    for (const auto& c : world.components()) {
      if ((samples.col(j) - c.mean).norm() <= band_sigmas * c.std) {
        far = false;
        break;
      }
    }
    if (far) ++out;
  }
  return static_cast<double>(out) / static_cast<double>(samples.cols());
}

/// Mean ||D(N(x, t_min, c), t_max, c, w) - x|| over a labeled dataset.
inline double reconstruction_mae(const PrecondModel& denoiser, const PrecondModel& noiser, const Eigen::MatrixXd& x,
                                 std::span<const int> classes, double w) {
  const std::vector<double> lo(classes.size(), noiser.t_min), hi(classes.size(), denoiser.t_max);
  const Eigen::VectorXd wv = Eigen::VectorXd::Constant(x.cols(), w);
  const Eigen::MatrixXd latent = apply_model(noiser, x, lo, classes, nullptr, nullptr);
  const Eigen::MatrixXd rec = apply_model(denoiser, latent, hi, classes, &wv, nullptr);
  return (rec - x).colwise().norm().mean();
}

/// Latent Gaussianity summary: (||mean|| / t_max, pooled std / t_max).
inline std::pair<double, double> latent_statistics(const Eigen::MatrixXd& latent, double t_max) {
  const Eigen::VectorXd mean = latent.rowwise().mean();
  const double var = (latent.colwise() - mean).squaredNorm() / static_cast<double>(latent.size());
  return {mean.norm() / t_max, std::sqrt(var) / t_max};
}

/// Spearman rank correlation (average ranks for ties).
inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need equal sizes >= 2");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j);
      for (std::size_t q = i; q <= j; ++q) r[idx[q]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace igct
