#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace igct {

using Rng = std::mt19937_64;

/// Independent stream for (seed, stream id). Used to give every sample or
/// every loss term its own reproducible generator.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  return Rng(seq);
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(rng);
}

inline double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng);
}

inline Eigen::VectorXd normal_vector(Rng& rng, int dims) {
  Eigen::VectorXd z(dims);
  for (int i = 0; i < dims; ++i) z[i] = standard_normal(rng);
  return z;
}

}  // namespace igct
