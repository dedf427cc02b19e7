#pragma once

// Conditioned multilayer perceptron with a hand-written reverse pass.
//
// Layout of one forward pass over a batch (columns are samples):
//
//   time:     fourier(c_noise) -> linear -> SiLU          (time_features)
//   class:    column of the class table, null class last   (class_features)
//   guidance: fourier(w) -> linear -> SiLU                 (guidance_features, optional)
//   h0 = [x_in; time; class; guidance]
//   h_l = SiLU(W_l h_{l-1} + b_l), l = 1..depth
//   out = W_{depth+1} h_depth + b_{depth+1}

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "igct/error.hpp"
#include "igct/rng.hpp"

namespace igct {

inline constexpr int kNullClass = -1;

struct NetSpec {
  int data_dim = 1;
  int n_classes = 2;
  int fourier_frequencies = 16;
  double time_freq_min = 0.25;
  double time_freq_max = 16.0;
  int time_features = 32;
  int class_features = 16;
  int guidance_features = 16;  // 0 disables the w input
  double w_freq_min = 0.05;
  double w_freq_max = 2.0;
  int hidden = 128;
  int depth = 2;
  bool zero_init_output = true;

  bool guided() const { return guidance_features > 0; }
  int input_width() const { return data_dim + time_features + class_features + guidance_features; }

  void validate() const {
    auto fail = [](const std::string& f, const std::string& why) { throw ConfigError("net." + f + ": " + why); };
    if (data_dim < 1) fail("data_dim", "must be >= 1");
    if (n_classes < 1) fail("n_classes", "must be >= 1");
    if (fourier_frequencies < 1) fail("fourier_frequencies", "must be >= 1");
    if (time_features < 1) fail("time_features", "must be >= 1");
    if (class_features < 1) fail("class_features", "must be >= 1");
    if (guidance_features < 0) fail("guidance_features", "must be >= 0");
    if (hidden < 1) fail("hidden", "must be >= 1");
    if (depth < 1) fail("depth", "must be >= 1");
    if (!(time_freq_min > 0.0 && time_freq_max >= time_freq_min)) fail("time_freq_max", "bad frequency range");
    if (!(w_freq_min > 0.0 && w_freq_max >= w_freq_min)) fail("w_freq_max", "bad frequency range");
  }
};

/// All trainable tensors. Biases are stored as single-column matrices so
/// every tensor has the same type.
struct NetParams {
  NetSpec spec;
  Eigen::MatrixXd time_w, time_b;
  Eigen::MatrixXd class_table;  // class_features x (n_classes + 1)
  Eigen::MatrixXd guid_w, guid_b;
  std::vector<Eigen::MatrixXd> weights, biases;

  /// Every tensor with a stable name, in a fixed order.
  std::vector<std::pair<std::string, Eigen::MatrixXd*>> tensors() {
    std::vector<std::pair<std::string, Eigen::MatrixXd*>> out{
        {"time_w", &time_w}, {"time_b", &time_b}, {"class_table", &class_table}};
    if (spec.guided()) {
      out.emplace_back("guid_w", &guid_w);
      out.emplace_back("guid_b", &guid_b);
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.emplace_back("layer" + std::to_string(l) + ".w", &weights[l]);
      out.emplace_back("layer" + std::to_string(l) + ".b", &biases[l]);
    }
    return out;
  }

  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> tensors() const {
    auto mut = const_cast<NetParams*>(this)->tensors();
    std::vector<std::pair<std::string, const Eigen::MatrixXd*>> out;
    out.reserve(mut.size());
    for (auto& [n, p] : mut) out.emplace_back(n, p);
    return out;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors()) n += static_cast<std::size_t>(t->size());
    return n;
  }

  /// Same shapes, all zeros.
  NetParams zeros_like() const {
    NetParams z = *this;
    for (auto& [name, t] : z.tensors()) t->setZero();
    return z;
  }

  NetParams& operator+=(const NetParams& o) {
    auto a = tensors();
    auto b = o.tensors();
    for (std::size_t i = 0; i < a.size(); ++i) *a[i].second += *b[i].second;
    return *this;
  }

  NetParams& scale(double s) {
    for (auto& [name, t] : tensors()) *t *= s;
    return *this;
  }

  bool all_finite() const {
    for (const auto& [name, t] : tensors()) {
      if (!t->allFinite()) return false;
    }
    return true;
  }

  bool operator==(const NetParams& o) const {
    auto a = tensors();
    auto b = o.tensors();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].second->rows() != b[i].second->rows() || a[i].second->cols() != b[i].second->cols()) return false;
      if (*a[i].second != *b[i].second) return false;
    }
    return true;
  }
};

inline NetParams init_params(const NetSpec& spec, Rng& rng) {
  spec.validate();
  auto gaussian = [&](int rows, int cols, double std) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = std * standard_normal(rng);
    return m;
  };
  const int ff = 2 * spec.fourier_frequencies;
  NetParams p;
  p.spec = spec;
  p.time_w = gaussian(spec.time_features, ff, 1.0 / std::sqrt(ff));
  p.time_b = Eigen::MatrixXd::Zero(spec.time_features, 1);
  p.class_table = gaussian(spec.class_features, spec.n_classes + 1, 1.0);
  if (spec.guided()) {
    p.guid_w = gaussian(spec.guidance_features, ff, 1.0 / std::sqrt(ff));
    p.guid_b = Eigen::MatrixXd::Zero(spec.guidance_features, 1);
  }
  int fan_in = spec.input_width();
  for (int l = 0; l < spec.depth; ++l) {
    p.weights.push_back(gaussian(spec.hidden, fan_in, 1.0 / std::sqrt(fan_in)));
    p.biases.push_back(Eigen::MatrixXd::Zero(spec.hidden, 1));
    fan_in = spec.hidden;
  }
  p.weights.push_back(spec.zero_init_output ? Eigen::MatrixXd::Zero(spec.data_dim, fan_in)
                                            : gaussian(spec.data_dim, fan_in, 1.0 / std::sqrt(fan_in)));
  p.biases.push_back(Eigen::MatrixXd::Zero(spec.data_dim, 1));
  return p;
}

/// Activation record of one batched forward pass.
struct Tape {
  std::vector<int> table_index;
  Eigen::MatrixXd time_fourier, time_pre;
  Eigen::MatrixXd guid_fourier, guid_pre;
  std::vector<Eigen::MatrixXd> pre;  // pre-activations of hidden layers
  std::vector<Eigen::MatrixXd> act;  // act[0] = concatenated input, act[l] = SiLU(pre[l-1])
  Eigen::Index batch = 0;
};

namespace detail {

inline Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& z) { return 1.0 / (1.0 + (-z).exp()); }

inline Eigen::MatrixXd silu(const Eigen::MatrixXd& z) {
  const Eigen::ArrayXXd a = z.array();
  return (a * sigmoid(a)).matrix();
}

inline Eigen::MatrixXd silu_grad(const Eigen::MatrixXd& z, const Eigen::MatrixXd& upstream) {
  const Eigen::ArrayXXd a = z.array();
  const Eigen::ArrayXXd s = sigmoid(a);
  return (upstream.array() * s * (1.0 + a * (1.0 - s))).matrix();
}

inline Eigen::MatrixXd fourier(const Eigen::VectorXd& s, int n, double f_min, double f_max) {
  Eigen::MatrixXd out(2 * n, s.size());
  for (int i = 0; i < n; ++i) {
    const double f = n == 1 ? f_min : f_min * std::pow(f_max / f_min, static_cast<double>(i) / (n - 1));
    for (Eigen::Index j = 0; j < s.size(); ++j) {
      out(i, j) = std::sin(f * s[j]);
      out(n + i, j) = std::cos(f * s[j]);
    }
  }
  return out;
}

}  // namespace detail

/// Batched forward pass. x_in is data_dim x B (already scaled by c_in),
/// c_noise and classes have B entries (kNullClass for the null token), w is
/// required iff the net is guided.
inline Eigen::MatrixXd forward_batch(const NetParams& p, const Eigen::MatrixXd& x_in, const Eigen::VectorXd& c_noise,
                                     std::span<const int> classes, const Eigen::VectorXd* w, Tape* tape) {
  const NetSpec& s = p.spec;
  const Eigen::Index B = x_in.cols();
  if (x_in.rows() != s.data_dim || c_noise.size() != B || static_cast<Eigen::Index>(classes.size()) != B) {
    throw std::invalid_argument("forward: input shape mismatch");
  }
  if (s.guided() && (w == nullptr || w->size() != B)) throw std::invalid_argument("forward: guided net needs w");

  Tape local;
  Tape& tp = tape ? *tape : local;
  tp.batch = B;
  tp.table_index.resize(static_cast<std::size_t>(B));
  for (Eigen::Index j = 0; j < B; ++j) {
    const int c = classes[static_cast<std::size_t>(j)];
    if (c == kNullClass) {
      tp.table_index[static_cast<std::size_t>(j)] = s.n_classes;
    } else if (c >= 0 && c < s.n_classes) {
      tp.table_index[static_cast<std::size_t>(j)] = c;
    } else {
      throw std::out_of_range("forward: class id " + std::to_string(c) + " out of range");
    }
  }

  Eigen::MatrixXd h0(s.input_width(), B);
  h0.topRows(s.data_dim) = x_in;
  tp.time_fourier = detail::fourier(c_noise, s.fourier_frequencies, s.time_freq_min, s.time_freq_max);
  tp.time_pre = (p.time_w * tp.time_fourier).colwise() + p.time_b.col(0);
  h0.middleRows(s.data_dim, s.time_features) = detail::silu(tp.time_pre);
  const int class_row = s.data_dim + s.time_features;
  for (Eigen::Index j = 0; j < B; ++j) {
    h0.block(class_row, j, s.class_features, 1) = p.class_table.col(tp.table_index[static_cast<std::size_t>(j)]);
  }
  if (s.guided()) {
    tp.guid_fourier = detail::fourier(*w, s.fourier_frequencies, s.w_freq_min, s.w_freq_max);
    tp.guid_pre = (p.guid_w * tp.guid_fourier).colwise() + p.guid_b.col(0);
    h0.bottomRows(s.guidance_features) = detail::silu(tp.guid_pre);
  }

  tp.pre.clear();
  tp.act.clear();
  tp.act.push_back(std::move(h0));
  const std::size_t L = p.weights.size();
  for (std::size_t l = 0; l + 1 < L; ++l) {
    tp.pre.push_back((p.weights[l] * tp.act.back()).colwise() + p.biases[l].col(0));
    tp.act.push_back(detail::silu(tp.pre.back()));
  }
  return (p.weights[L - 1] * tp.act.back()).colwise() + p.biases[L - 1].col(0);
}

struct Gradients {
  NetParams params;
  Eigen::MatrixXd input;  // d loss / d x_in
};

/// Exact reverse pass for the tape of a matching forward_batch call.
inline Gradients backward_batch(const NetParams& p, const Tape& tp, const Eigen::MatrixXd& upstream) {
  const NetSpec& s = p.spec;
  if (upstream.rows() != s.data_dim || upstream.cols() != tp.batch || tp.act.empty()) {
    throw std::invalid_argument("backward: upstream shape does not match tape");
  }
  Gradients g{p.zeros_like(), {}};
  const std::size_t L = p.weights.size();
  Eigen::MatrixXd delta = upstream;
  for (std::size_t l = L; l-- > 0;) {
    g.params.weights[l].noalias() = delta * tp.act[l].transpose();
    g.params.biases[l] = delta.rowwise().sum();
    Eigen::MatrixXd back = p.weights[l].transpose() * delta;
    if (l > 0) {
      delta = detail::silu_grad(tp.pre[l - 1], back);
    } else {
      delta = std::move(back);
    }
  }
  // delta is now d loss / d h0.
  g.input = delta.topRows(s.data_dim);
  const Eigen::MatrixXd d_time = detail::silu_grad(tp.time_pre, delta.middleRows(s.data_dim, s.time_features));
  g.params.time_w.noalias() = d_time * tp.time_fourier.transpose();
  g.params.time_b = d_time.rowwise().sum();
  const int class_row = s.data_dim + s.time_features;
  for (Eigen::Index j = 0; j < tp.batch; ++j) {
    g.params.class_table.col(tp.table_index[static_cast<std::size_t>(j)]) +=
        delta.block(class_row, j, s.class_features, 1);
  }
  if (s.guided()) {
    const Eigen::MatrixXd d_guid = detail::silu_grad(tp.guid_pre, delta.bottomRows(s.guidance_features));
    g.params.guid_w.noalias() = d_guid * tp.guid_fourier.transpose();
    g.params.guid_b = d_guid.rowwise().sum();
  }
  return g;
}

/// Single-sample forward returning the output and its tape.
inline std::pair<Eigen::VectorXd, Tape> forward(const NetParams& p, const Eigen::VectorXd& x_in, double c_noise,
                                                std::optional<int> c, std::optional<double> w = std::nullopt) {
  Tape tape;
  const Eigen::VectorXd cn = Eigen::VectorXd::Constant(1, c_noise);
  const int cls[1] = {c ? *c : kNullClass};
  Eigen::VectorXd wv;
  if (w) wv = Eigen::VectorXd::Constant(1, *w);
  Eigen::MatrixXd out = forward_batch(p, x_in, cn, cls, w ? &wv : nullptr, &tape);
  return {out.col(0), std::move(tape)};
}

inline NetParams backward(const NetParams& p, const Tape& tape, const Eigen::VectorXd& upstream) {
  return backward_batch(p, tape, Eigen::MatrixXd(upstream)).params;
}

/// Stop-gradient evaluation of the current weights: same arithmetic as
/// forward, but no tape is kept so nothing can flow back into the weights.
inline Eigen::MatrixXd eval_target(const NetParams& p, const Eigen::MatrixXd& x_in, const Eigen::VectorXd& c_noise,
                                   std::span<const int> classes, const Eigen::VectorXd* w) {
  return forward_batch(p, x_in, c_noise, classes, w, nullptr);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct OptState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  NetParams m, v;

  static OptState for_params(const NetParams& p, double lr) {
    OptState s;
    s.lr = lr;
    s.m = p.zeros_like();
    s.v = p.zeros_like();
    return s;
  }
};

/// One Adam update in place. Throws DivergenceError on non-finite gradients
/// before touching params or state.
inline void optimizer_step(NetParams& params, const NetParams& grads, OptState& opt) {
  if (!grads.all_finite()) throw DivergenceError("optimizer_step: non-finite gradient");
  auto P = params.tensors();
  auto G = grads.tensors();
  auto M = opt.m.tensors();
  auto V = opt.v.tensors();
  if (P.size() != G.size() || P.size() != M.size()) throw std::invalid_argument("optimizer_step: shape mismatch");
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < P.size(); ++i) {
    auto& p = *P[i].second;
    const auto& g = *G[i].second;
    auto& m = *M[i].second;
    auto& v = *V[i].second;
    if (p.rows() != g.rows() || p.cols() != g.cols()) throw std::invalid_argument("optimizer_step: shape mismatch");
    m = opt.beta1 * m + (1.0 - opt.beta1) * g;
    v = (opt.beta2 * v.array() + (1.0 - opt.beta2) * g.array().square()).matrix();
    p.array() -= opt.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + opt.eps);
  }
}

}  // namespace igct
