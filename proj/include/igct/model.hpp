#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "igct/net.hpp"
#include "igct/precondition.hpp"

namespace igct {

enum class ModelKind { kDenoiser, kNoiser };

/// A network core F wrapped in its preconditioning:
///   out = c_skip(t) x + c_out(t) F(c_in(t) x; c_noise(t), c, w).
struct PrecondModel {
  ModelKind kind = ModelKind::kDenoiser;
  NetParams net;
  double sigma_data = 0.5;
  double t_min = 0.002;
  double t_max = 80.0;

  PrecondCoeffs coeffs(double t) const {
    return kind == ModelKind::kDenoiser ? denoiser_coeffs(t, sigma_data, t_min) : noiser_coeffs(t, sigma_data, t_max);
  }
};

struct ModelTape {
  Tape net;
  Eigen::VectorXd c_skip, c_out, c_in;
};

/// Counts network evaluations (one per batched call).
struct NfeCounter {
  std::size_t evals = 0;
};

inline Eigen::MatrixXd apply_model(const PrecondModel& m, const Eigen::MatrixXd& x, std::span<const double> t,
                                   std::span<const int> classes, const Eigen::VectorXd* w, ModelTape* tape,
                                   NfeCounter* counter = nullptr) {
  const Eigen::Index B = x.cols();
  if (static_cast<Eigen::Index>(t.size()) != B) throw std::invalid_argument("apply_model: t size mismatch");
  Eigen::VectorXd c_skip(B), c_out(B), c_in(B), c_noise(B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const auto c = m.coeffs(t[static_cast<std::size_t>(j)]);
    c_skip[j] = c.c_skip;
    c_out[j] = c.c_out;
    c_in[j] = c.c_in;
    c_noise[j] = c.c_noise;
  }
  const Eigen::VectorXd* wp = m.net.spec.guided() ? w : nullptr;
  const Eigen::MatrixXd scaled = x * c_in.asDiagonal();
  const Eigen::MatrixXd f = forward_batch(m.net, scaled, c_noise, classes, wp, tape ? &tape->net : nullptr);
  if (counter) counter->evals += 1;
  if (tape) {
    tape->c_skip = c_skip;
    tape->c_out = c_out;
    tape->c_in = c_in;
  }
  return x * c_skip.asDiagonal() + f * c_out.asDiagonal();
}

/// Same noise level and class for the whole batch; w optional.
inline Eigen::MatrixXd apply_model(const PrecondModel& m, const Eigen::MatrixXd& x, double t, std::optional<int> c,
                                   std::optional<double> w = std::nullopt, NfeCounter* counter = nullptr) {
  const auto B = static_cast<std::size_t>(x.cols());
  const std::vector<double> ts(B, t);
  const std::vector<int> cs(B, c ? *c : kNullClass);
  Eigen::VectorXd wv;
  if (w) wv = Eigen::VectorXd::Constant(x.cols(), *w);
  return apply_model(m, x, ts, cs, w ? &wv : nullptr, nullptr, counter);
}

/// Reverse pass through the preconditioning. Returns parameter gradients and
/// d loss / d x (both the skip path and the network path).
inline Gradients backward_model(const PrecondModel& m, const ModelTape& tape, const Eigen::MatrixXd& upstream) {
  const Eigen::MatrixXd d_f = upstream * tape.c_out.asDiagonal();
  Gradients g = backward_batch(m.net, tape.net, d_f);
  g.input = upstream * tape.c_skip.asDiagonal() + g.input * tape.c_in.asDiagonal();
  return g;
}

}  // namespace igct
