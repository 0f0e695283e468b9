#pragma once

// Horseshoe prior on coupling effects through the inverse-gamma scale mixture
//   beta | lambda2 ~ N(0, lambda2 * tau2),  lambda2 | nu ~ IG(1/2, 1/nu),  nu ~ IG(1/2, 1)
// which marginally gives lambda ~ half-Cauchy(0, 1). tau2 is the squared global
// scale, fixed at 0.25^2 unless learned, in which case tau ~ half-Cauchy(0, 0.25)
// through tau2 | xi ~ IG(1/2, 1/xi), xi ~ IG(1/2, 1/0.25^2).

#include <cmath>
#include <cstddef>

#include <Eigen/Dense>

#include "mchmm/rng.hpp"

namespace mchmm {

inline constexpr double kDefaultGlobalScale = 0.25;

struct HorseshoeState {
  Eigen::VectorXd lambda2;
  Eigen::VectorXd nu;
  double tau2 = kDefaultGlobalScale * kDefaultGlobalScale;
  double xi = 1.0;
  double scale0 = kDefaultGlobalScale;
  bool learn_global = false;

  HorseshoeState() = default;
  HorseshoeState(std::size_t n, double global_scale = kDefaultGlobalScale, bool learn = false)
      : lambda2(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n))),
        nu(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n))),
        tau2(global_scale * global_scale),
        scale0(global_scale),
        learn_global(learn) {}

  std::size_t size() const { return static_cast<std::size_t>(lambda2.size()); }
  double prior_variance(std::size_t i) const { return lambda2[static_cast<Eigen::Index>(i)] * tau2; }
};

/// Conjugate Gibbs updates of the local scales (and the global one if learned).
inline void update_local_scales(HorseshoeState& hs, const Eigen::Ref<const Eigen::VectorXd>& effects,
                                Rng& rng) {
  const Eigen::Index n = effects.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double b2 = effects[i] * effects[i];
    hs.lambda2[i] = inv_gamma_draw(1.0, 1.0 / hs.nu[i] + b2 / (2.0 * hs.tau2), rng);
    hs.nu[i] = inv_gamma_draw(1.0, 1.0 + 1.0 / hs.lambda2[i], rng);
  }
  if (hs.learn_global && n > 0) {
    double ss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) ss += effects[i] * effects[i] / hs.lambda2[i];
    hs.tau2 = inv_gamma_draw((static_cast<double>(n) + 1.0) / 2.0, 1.0 / hs.xi + ss / 2.0, rng);
    hs.xi = inv_gamma_draw(1.0, 1.0 / (hs.scale0 * hs.scale0) + 1.0 / hs.tau2, rng);
  }
}

/// One draw of beta from the augmented prior with a fixed global scale.
inline double horseshoe_prior_draw(double global_scale, Rng& rng) {
  const double nu = inv_gamma_draw(0.5, 1.0, rng);
  const double lambda2 = inv_gamma_draw(0.5, 1.0 / nu, rng);
  return std::sqrt(lambda2) * global_scale * std_normal(rng);
}

}  // namespace mchmm
