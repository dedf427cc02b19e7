#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "igct/metrics.hpp"
#include "igct/train.hpp"

using namespace igct;

namespace {

Eigen::MatrixXd row(std::initializer_list<double> v) {
  Eigen::MatrixXd m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

Eigen::MatrixXd gaussian_cloud(Rng& rng, int dims, int n, double shift = 0.0, double scale = 1.0) {
  Eigen::MatrixXd m(dims, n);
  for (int j = 0; j < n; ++j) m.col(j) = (scale * normal_vector(rng, dims)).array() + shift;
  return m;
}

// Integral of |F_a - F_b| over the merged support.
double w1_by_cdf(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  std::vector<double> pts;
  for (Eigen::Index i = 0; i < a.cols(); ++i) pts.push_back(a(0, i));
  for (Eigen::Index i = 0; i < b.cols(); ++i) pts.push_back(b(0, i));
  std::sort(pts.begin(), pts.end());
  auto cdf = [](const Eigen::MatrixXd& m, double x) {
    return static_cast<double>((m.array() <= x).count()) / static_cast<double>(m.cols());
  };
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) total += std::abs(cdf(a, pts[i]) - cdf(b, pts[i])) * (pts[i + 1] - pts[i]);
  return total;
}

// Brute force k-NN radii and coverage.
std::vector<double> brute_radii(const Eigen::MatrixXd& p, int k) {
  std::vector<double> r;
  for (Eigen::Index i = 0; i < p.cols(); ++i) {
    std::vector<double> d;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      if (j != i) d.push_back((p.col(i) - p.col(j)).norm());
    }
    std::sort(d.begin(), d.end());
    r.push_back(d[static_cast<std::size_t>(k - 1)]);
  }
  return r;
}

double brute_coverage(const Eigen::MatrixXd& q, const Eigen::MatrixXd& c, const std::vector<double>& r) {
  int hits = 0;
  for (Eigen::Index i = 0; i < q.cols(); ++i) {
    bool in = false;
    for (Eigen::Index j = 0; j < c.cols(); ++j) in = in || (q.col(i) - c.col(j)).norm() <= r[static_cast<std::size_t>(j)];
    hits += in ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(q.cols());
}

}  // namespace

TEST(Wasserstein, SmallExamples) {
  EXPECT_EQ(wasserstein1(row({0.0}), row({1.0})), 1.0);
  EXPECT_DOUBLE_EQ(wasserstein1(row({0.0, 1.0}), row({0.0})), 0.5);
  EXPECT_DOUBLE_EQ(wasserstein1(row({1.0, 2.0, 3.0}), row({3.0, 1.0, 2.0})), 0.0);
  EXPECT_DOUBLE_EQ(wasserstein1(row({0.0, 0.0, 4.0}), row({1.0, 1.0})), 5.0 / 3.0);
  EXPECT_THROW(wasserstein1(Eigen::MatrixXd(1, 0), row({1.0})), std::invalid_argument);
}

TEST(Wasserstein, MatchesCdfIntegralOnRandomSets) {
  Rng rng = derive_rng(1, 0);
  for (int trial = 0; trial < 30; ++trial) {
    const int na = 5 + static_cast<int>(uniform01(rng) * 200);
    const int nb = 5 + static_cast<int>(uniform01(rng) * 200);
    const Eigen::MatrixXd a = gaussian_cloud(rng, 1, na, 0.0, 1.0);
    const Eigen::MatrixXd b = gaussian_cloud(rng, 1, nb, 0.7, 2.0);
    EXPECT_NEAR(wasserstein1(a, b), w1_by_cdf(a, b), 1e-10);
  }
}

TEST(Wasserstein, PermutationInvariantAndShiftEquivariant) {
  Rng rng = derive_rng(2, 0);
  Eigen::MatrixXd a = gaussian_cloud(rng, 1, 300);
  const Eigen::MatrixXd b = gaussian_cloud(rng, 1, 200);
  const double base = wasserstein1(a, b);
  Eigen::MatrixXd perm = a.rowwise().reverse();
  EXPECT_EQ(wasserstein1(perm, b), base);
  EXPECT_NEAR(wasserstein1(a.array() + 3.25, a), 3.25, 1e-12);
}

TEST(Wasserstein, SlicedShiftOfPlanarCloud) {
  Rng rng = derive_rng(3, 0);
  const Eigen::MatrixXd a = gaussian_cloud(rng, 2, 400);
  Eigen::Vector2d v(1.5, -0.5);
  const Eigen::MatrixXd b = a.colwise() + v;
  double expect = 0.0;
  for (int p = 0; p < 64; ++p) {
    const double ang = M_PI * p / 64;
    expect += std::abs(v.x() * std::cos(ang) + v.y() * std::sin(ang));
  }
  EXPECT_NEAR(wasserstein1(b, a), expect / 64, 1e-10);
}

TEST(PrecisionRecall, IdenticalAndDisjointSets) {
  Rng rng = derive_rng(4, 0);
  const Eigen::MatrixXd a = gaussian_cloud(rng, 1, 500);
  const auto same = knn_precision_recall(a, a, 5);
  EXPECT_EQ(same.precision, 1.0);
  EXPECT_EQ(same.recall, 1.0);
  const auto far = knn_precision_recall(a.array() + 100.0, a, 5);
  EXPECT_EQ(far.precision, 0.0);
  EXPECT_EQ(far.recall, 0.0);
  EXPECT_THROW(knn_precision_recall(a, a, 500), std::invalid_argument);
}

TEST(PrecisionRecall, SwapExchangesPrecisionAndRecall) {
  Rng rng = derive_rng(5, 0);
  const Eigen::MatrixXd a = gaussian_cloud(rng, 1, 400);
  const Eigen::MatrixXd b = gaussian_cloud(rng, 1, 300, 1.0, 0.5);
  const auto ab = knn_precision_recall(a, b, 5);
  const auto ba = knn_precision_recall(b, a, 5);
  EXPECT_EQ(ab.precision, ba.recall);
  EXPECT_EQ(ab.recall, ba.precision);
}

TEST(PrecisionRecall, MatchesBruteForce) {
  Rng rng = derive_rng(6, 0);
  for (int dims : {1, 2}) {
    for (int trial = 0; trial < 5; ++trial) {
      const Eigen::MatrixXd g = gaussian_cloud(rng, dims, 150, 0.3, 1.2);
      const Eigen::MatrixXd r = gaussian_cloud(rng, dims, 120);
      for (int k : {1, 3, 5}) {
        const auto pr = knn_precision_recall(g, r, k);
        EXPECT_DOUBLE_EQ(pr.precision, brute_coverage(g, r, brute_radii(r, k))) << dims << " " << k;
        EXPECT_DOUBLE_EQ(pr.recall, brute_coverage(r, g, brute_radii(g, k))) << dims << " " << k;
      }
    }
  }
}

TEST(PrecisionRecall, DuplicatePointsAreFlagged) {
  const Eigen::MatrixXd a = row({1.0, 1.0, 1.0, 2.0});
  const auto pr = knn_precision_recall(a, a, 1);
  EXPECT_TRUE(pr.degenerate);
}

TEST(Overshoot, BandExampleAndMonotonicity) {
  const MixtureWorld world = MixtureWorld::two_mode();
  const Eigen::MatrixXd x = row({2.0, 2.5, 3.0, -2.0, -2.61, 0.0});
  EXPECT_DOUBLE_EQ(overshoot_fraction(x, world, 3.0), 3.0 / 6.0);
  Rng rng = derive_rng(7, 0);
  const Eigen::MatrixXd s = gaussian_cloud(rng, 1, 2000, 0.0, 2.5);
  double prev = 1.0;
  for (double band = 0.0; band <= 10.0; band += 0.25) {
    const double f = overshoot_fraction(s, world, band);
    EXPECT_LE(f, prev);
    prev = f;
  }
  EXPECT_EQ(overshoot_fraction(Eigen::MatrixXd(1, 0), world, 3.0), 0.0);
}

TEST(LatentStatistics, KnownMoments) {
  const auto [m, s] = latent_statistics(row({78.0, 82.0, -78.0, -82.0}), 80.0);
  EXPECT_EQ(m, 0.0);
  EXPECT_NEAR(s, std::sqrt((78.0 * 78.0 * 2 + 82.0 * 82.0 * 2) / 4.0) / 80.0, 1e-15);
  const auto [m2, s2] = latent_statistics(row({8.0, 8.0}), 80.0);
  EXPECT_DOUBLE_EQ(m2, 0.1);
  EXPECT_EQ(s2, 0.0);
}

TEST(Spearman, RanksWithTies) {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> b{10, 20, 30, 40, 1000};
  const std::vector<double> c{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman(a, b), 1.0);
  EXPECT_DOUBLE_EQ(spearman(a, c), -1.0);
  // ranks of {1,2,2,3} are {0,1.5,1.5,3}
  const std::vector<double> t{1, 2, 2, 3}, u{1, 2, 3, 4};
  const double ra[] = {0, 1.5, 1.5, 3}, rb[] = {0, 1, 2, 3};
  double sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < 4; ++i) {
    sab += (ra[i] - 1.5) * (rb[i] - 1.5);
    saa += (ra[i] - 1.5) * (ra[i] - 1.5);
    sbb += (rb[i] - 1.5) * (rb[i] - 1.5);
  }
  EXPECT_NEAR(spearman(t, u), sab / std::sqrt(saa * sbb), 1e-15);
  EXPECT_THROW(spearman(a, t), std::invalid_argument);
}

TEST(ReconstructionMae, ZeroOutputNetsClosedForm) {
  const MixtureWorld world = MixtureWorld::two_mode();
  NetSpec spec;
  spec.hidden = 8;
  Rng rng = derive_rng(8, 0);
  const PrecondModel d{ModelKind::kDenoiser, init_params(spec, rng), world.sigma_data(), 0.002, 80.0};
  const PrecondModel n{ModelKind::kNoiser, init_params(noiser_spec(spec), rng), world.sigma_data(), 0.002, 80.0};
  const Eigen::MatrixXd x = row({2.0, -1.0, 0.5});
  const std::vector<int> cls{1, 0, 1};
  const double sd2 = world.sigma_data() * world.sigma_data();
  const double skip = sd2 / ((80.0 - 0.002) * (80.0 - 0.002) + sd2);
  EXPECT_NEAR(reconstruction_mae(d, n, x, cls, 1.0), (1.0 - skip) * 3.5 / 3.0, 1e-14);
}

TEST(Wasserstein, TranslatedNormals) {
  Rng rng = derive_rng(9, 0);
  const Eigen::MatrixXd a = gaussian_cloud(rng, 1, 1'000'000);
  const Eigen::MatrixXd b = gaussian_cloud(rng, 1, 1'000'000, 0.5);
  EXPECT_NEAR(wasserstein1(a, b), 0.5, 0.005);
}

TEST(PrecisionRecall, OneModeOfTwo) {
  const MixtureWorld world = MixtureWorld::two_mode();
  Rng rng = derive_rng(10, 0);
  Eigen::MatrixXd real(1, 10000), gen(1, 10000);
  for (int i = 0; i < 10000; ++i) {
    real(0, i) = sample_data(rng, world).x[0];
    gen(0, i) = sample_data(rng, world, 1).x[0];
  }
  const auto pr = knn_precision_recall(gen, real, 5);
  EXPECT_NEAR(pr.precision, 1.0, 0.05);
  EXPECT_NEAR(pr.recall, 0.5, 0.05);
}

TEST(Overshoot, WorldSamplesRarelyLeaveTheBand) {
  const MixtureWorld world = MixtureWorld::two_mode();
  Rng rng = derive_rng(11, 0);
  Eigen::MatrixXd x(1, 100000);
  for (int i = 0; i < x.cols(); ++i) x(0, i) = sample_data(rng, world).x[0];
  const double f = overshoot_fraction(x, world, 3.0);
  EXPECT_LT(f, 0.01);
  EXPECT_NEAR(f, 0.0027, 0.001);
}
