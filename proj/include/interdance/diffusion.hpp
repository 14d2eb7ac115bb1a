#pragma once

// DDPM noise schedule, closed-form forward marginal and the posterior step
// used by the x0-predicting sampler. Steps are 1-based: n in [1, N].

#include "interdance/common.hpp"

#include <random>

namespace interdance {

struct NoiseSchedule {
  std::vector<double> beta;       // beta[n-1] for step n
  std::vector<double> alpha_bar;  // prod_{k<=n} (1 - beta_k)
  // Posterior q(x_{n-1} | x_n, x0) = N(c_x0 * x0 + c_xn * x_n, variance).
  std::vector<double> posterior_x0;
  std::vector<double> posterior_xn;
  std::vector<double> posterior_variance;

  int steps() const { return static_cast<int>(beta.size()); }
  double alpha_bar_at(int n) const { return n == 0 ? 1.0 : alpha_bar[static_cast<std::size_t>(n - 1)]; }
};

inline NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("schedule: step count must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("schedule: require 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  const auto n = static_cast<std::size_t>(steps);
  s.beta.resize(n);
  s.alpha_bar.resize(n);
  s.posterior_x0.resize(n);
  s.posterior_xn.resize(n);
  s.posterior_variance.resize(n);
  double product = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(steps - 1);
    s.beta[k] = beta_start + frac * (beta_end - beta_start);
    product *= 1.0 - s.beta[k];
    s.alpha_bar[k] = product;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double ab = s.alpha_bar[k];
    const double ab_prev = k == 0 ? 1.0 : s.alpha_bar[k - 1];
    s.posterior_x0[k] = std::sqrt(ab_prev) * s.beta[k] / (1.0 - ab);
    s.posterior_xn[k] = std::sqrt(1.0 - s.beta[k]) * (1.0 - ab_prev) / (1.0 - ab);
    s.posterior_variance[k] = s.beta[k] * (1.0 - ab_prev) / (1.0 - ab);
  }
  return s;
}

namespace detail {

inline void check_step(const NoiseSchedule& s, int n, const char* where) {
  if (n < 1 || n > s.steps()) {
    throw ConfigError(std::string(where) + ": step " + std::to_string(n) + " outside [1, " +
                      std::to_string(s.steps()) + "]");
  }
}

}  // namespace detail

/// x_n = sqrt(abar_n) x0 + sqrt(1 - abar_n) noise.
inline Matrix q_sample(const NoiseSchedule& s, const Matrix& x0, int n, const Matrix& noise) {
  detail::check_step(s, n, "q_sample");
  const double ab = s.alpha_bar_at(n);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * noise;
}

/// One ancestral step from x_n to x_{n-1} given a clean estimate. At n = 1
/// the clean estimate is returned unchanged.
inline Matrix posterior_step(const NoiseSchedule& s, const Matrix& xn, const Matrix& x0_hat, int n,
                             const Matrix& noise) {
  detail::check_step(s, n, "posterior_step");
  if (n == 1) return x0_hat;
  const auto k = static_cast<std::size_t>(n - 1);
  return s.posterior_x0[k] * x0_hat + s.posterior_xn[k] * xn + std::sqrt(s.posterior_variance[k]) * noise;
}

inline Matrix standard_normal(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  // fill in row-major order so results do not depend on storage order
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = normal(rng);
  }
  return m;
}

}  // namespace interdance
