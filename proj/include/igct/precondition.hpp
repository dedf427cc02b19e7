#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace igct {

/// Scalings around a raw network F:
///   out = c_skip * x + c_out * F(c_in * x; c_noise).
struct PrecondCoeffs {
  double c_skip = 1.0;
  double c_out = 0.0;
  double c_in = 1.0;
  double c_noise = 0.0;
};

inline double noise_embedding_input(double t) { return 0.25 * std::log(t); }

/// Denoiser scalings. The EDM form is shifted by t_min so that
/// c_skip(t_min) = 1 and c_out(t_min) = 0 hold exactly.
inline PrecondCoeffs denoiser_coeffs(double t, double sigma_data, double t_min) {
  if (!(t >= t_min)) {
    throw std::domain_error("denoiser_coeffs: t=" + std::to_string(t) + " below t_min");
  }
  const double s2 = sigma_data * sigma_data;
  const double shifted = t - t_min;
  PrecondCoeffs c;
  c.c_skip = s2 / (shifted * shifted + s2);
  c.c_out = sigma_data * shifted / std::sqrt(s2 + t * t);
  c.c_in = 1.0 / std::sqrt(t * t + s2);
  c.c_noise = noise_embedding_input(t);
  return c;
}

/// Noiser scalings: c_skip = 1, c_out = t_max - t, so N(x, t_max) = x and the
/// effective regression target (x_{t_max} - x_t) / (t_max - t) = z has unit
/// variance.
inline PrecondCoeffs noiser_coeffs(double t, double sigma_data, double t_max) {
  if (!(t <= t_max)) {
    throw std::domain_error("noiser_coeffs: t=" + std::to_string(t) + " above t_max");
  }
  PrecondCoeffs c;
  c.c_skip = 1.0;
  c.c_out = t_max - t;
  c.c_in = 1.0 / std::sqrt(t * t + sigma_data * sigma_data);
  c.c_noise = noise_embedding_input(t);
  return c;
}

}  // namespace igct
