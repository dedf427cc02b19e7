#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "igct/model.hpp"
#include "igct/oracle.hpp"
#include "igct/precondition.hpp"
#include "igct/train.hpp"

using namespace igct;

namespace {

constexpr double kTmin = 0.002;
constexpr double kTmax = 80.0;

// Monte Carlo variance of c_in(t) (x_0 + t z) with x_0 from the world.
double input_variance(double t, const MixtureWorld& world, int n, std::uint64_t seed) {
  Rng rng = derive_rng(seed, 0);
  const double c_in = denoiser_coeffs(t, world.sigma_data(), kTmin).c_in;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = c_in * (sample_data(rng, world).x[0] + t * standard_normal(rng));
    s += v;
    s2 += v * v;
  }
  const double m = s / n;
  return s2 / n - m * m;
}

// Noiser target (x_tmax - c_skip x_t) / c_out with x_tmax = x_0 + t_max z.
double noiser_target_variance(double t, const MixtureWorld& world, int n, std::uint64_t seed) {
  Rng rng = derive_rng(seed, 1);
  const auto c = noiser_coeffs(t, world.sigma_data(), kTmax);
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x0 = sample_data(rng, world).x[0];
    const double z = standard_normal(rng);
    const double v = ((x0 + kTmax * z) - c.c_skip * (x0 + t * z)) / c.c_out;
    s += v;
    s2 += v * v;
  }
  const double m = s / n;
  return s2 / n - m * m;
}

}  // namespace

TEST(DenoiserCoeffs, BoundaryAtTmin) {
  const auto c = denoiser_coeffs(kTmin, 0.5, kTmin);
  EXPECT_EQ(c.c_skip, 1.0);
  EXPECT_EQ(c.c_out, 0.0);
}

TEST(DenoiserCoeffs, HalfSkipAtSigmaData) {
  const auto c = denoiser_coeffs(0.5, 0.5, 0.0 + std::numeric_limits<double>::min());
  EXPECT_NEAR(c.c_skip, 0.5, 1e-12);
}

TEST(DenoiserCoeffs, FormulasAndNoiseEmbedding) {
  const double sd = 0.7, t = 3.0;
  const auto c = denoiser_coeffs(t, sd, kTmin);
  EXPECT_DOUBLE_EQ(c.c_skip, sd * sd / ((t - kTmin) * (t - kTmin) + sd * sd));
  EXPECT_DOUBLE_EQ(c.c_out, sd * (t - kTmin) / std::hypot(sd, t));
  EXPECT_DOUBLE_EQ(c.c_in, 1.0 / std::hypot(t, sd));
  EXPECT_DOUBLE_EQ(c.c_noise, std::log(t) / 4.0);
  EXPECT_GT(c.c_in, 0.0);
}

TEST(DenoiserCoeffs, RejectsBelowTmin) { EXPECT_THROW(denoiser_coeffs(0.001, 0.5, kTmin), std::domain_error); }

TEST(NoiserCoeffs, BoundaryAtTmax) {
  const auto c = noiser_coeffs(kTmax, 0.5, kTmax);
  EXPECT_EQ(c.c_out, 0.0);
  EXPECT_EQ(c.c_skip, 1.0);
}

TEST(NoiserCoeffs, OutputDominatesNearZero) {
  const auto c = noiser_coeffs(0.0, 0.5, kTmax);
  EXPECT_EQ(c.c_out, 80.0);
  EXPECT_EQ(c.c_skip, 1.0);
  EXPECT_DOUBLE_EQ(c.c_in, 2.0);
}

TEST(NoiserCoeffs, RejectsAboveTmax) { EXPECT_THROW(noiser_coeffs(80.1, 0.5, kTmax), std::domain_error); }

TEST(UnitVariance, NetworkInputAcrossLevels) {
  const auto world = MixtureWorld::two_mode();
  std::uint64_t seed = 100;
  for (double t : {0.01, 0.5, 2.0, 10.0, 80.0}) {
    const double v = input_variance(t, world, 1'000'000, seed++);
    EXPECT_GE(v, 0.98) << "t=" << t;
    EXPECT_LE(v, 1.02) << "t=" << t;
  }
}

TEST(UnitVariance, NoiserTargetAcrossLevels) {
  const auto world = MixtureWorld::two_mode();
  std::uint64_t seed = 200;
  for (double t : {0.01, 1.0, 10.0, 79.0}) {
    const double v = noiser_target_variance(t, world, 1'000'000, seed++);
    EXPECT_GE(v, 0.98) << "t=" << t;
    EXPECT_LE(v, 1.02) << "t=" << t;
  }
}

TEST(AssembledModel, BoundariesAreBitExact) {
  const auto world = MixtureWorld::two_mode();
  NetSpec spec;
  spec.zero_init_output = false;
  spec.hidden = 16;
  Rng rng = derive_rng(5, 0);
  PrecondModel den{ModelKind::kDenoiser, init_params(spec, rng), world.sigma_data(), kTmin, kTmax};
  PrecondModel noi{ModelKind::kNoiser, init_params(noiser_spec(spec), rng), world.sigma_data(), kTmin, kTmax};
  Eigen::MatrixXd x(1, 1000);
  for (int i = 0; i < 1000; ++i) x(0, i) = 50.0 * standard_normal(rng);
  for (int c : {0, 1}) {
    for (double w : {1.0, 7.5, 15.0}) {
      const Eigen::MatrixXd d = apply_model(den, x, kTmin, c, w);
      EXPECT_TRUE((d.array() == x.array()).all());
    }
    const Eigen::MatrixXd n = apply_model(noi, x, kTmax, c);
    EXPECT_TRUE((n.array() == x.array()).all());
  }
}
