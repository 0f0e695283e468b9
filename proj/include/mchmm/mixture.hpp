#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mchmm/rng.hpp"

namespace mchmm {

/// Posterior label probabilities gamma_m * exp(loglik_m), normalized in log space.
inline std::vector<double> label_probabilities(std::span<const double> loglik, const Eigen::VectorXd& gamma) {
  const std::size_t M = loglik.size();
  std::vector<double> lw(M);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < M; ++m) {
    lw[m] = std::log(gamma[static_cast<Eigen::Index>(m)]) + loglik[m];
    mx = std::max(mx, lw[m]);
  }
  if (!std::isfinite(mx)) throw NumericalError("every mixture component assigns zero likelihood");
  double s = 0.0;
  for (double& v : lw) {
    v = std::exp(v - mx);
    s += v;
  }
  for (double& v : lw) v /= s;
  return lw;
}

inline int draw_label(std::span<const double> loglik, const Eigen::VectorXd& gamma, Rng& rng) {
  if (loglik.size() == 1) return 0;
  return sample_categorical(label_probabilities(loglik, gamma), rng);
}

/// log sum_m gamma_m exp(loglik_m).
inline double mixture_log_lik(std::span<const double> loglik, const Eigen::VectorXd& gamma) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < loglik.size(); ++m)
    if (gamma[static_cast<Eigen::Index>(m)] > 0.0)
      mx = std::max(mx, std::log(gamma[static_cast<Eigen::Index>(m)]) + loglik[m]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t m = 0; m < loglik.size(); ++m)
    if (gamma[static_cast<Eigen::Index>(m)] > 0.0)
      s += std::exp(std::log(gamma[static_cast<Eigen::Index>(m)]) + loglik[m] - mx);
  return mx + std::log(s);
}

}  // namespace mchmm
