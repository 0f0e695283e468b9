#pragma once

// Prior specification and the conjugate Dirichlet updates for initial-state
// probabilities, emission matrices and mixing weights.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mchmm/model.hpp"
#include "mchmm/priors/horseshoe.hpp"
#include "mchmm/rng.hpp"

namespace mchmm {

/// Emission prior counts: when K == L, 30 on the specificity cell (state 1 ->
/// symbol 1), 15 on the other diagonal cells (sensitivity), 1 elsewhere.
/// With K != L there is no natural state-symbol pairing and all counts are 1.
inline Eigen::MatrixXd default_emission_prior(int n_latent, int n_obs) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Ones(n_latent, n_obs);
  if (n_latent == n_obs) {
    for (int k = 0; k < n_latent; ++k) m(k, k) = 15.0;
    m(0, 0) = 30.0;
  }
  return m;
}

struct PriorSpec {
  double intercept_sd = 1.0;
  double global_scale = kDefaultGlobalScale;
  bool learn_global_scale = false;
  Eigen::MatrixXd emission_counts;  // K x L, empty means default_emission_prior
  double eta_concentration = 1.0;
  double gamma_concentration = 1.0;

  Eigen::MatrixXd emission_prior(int n_latent, int n_obs) const {
    if (emission_counts.size() == 0) return default_emission_prior(n_latent, n_obs);
    if (emission_counts.rows() != n_latent || emission_counts.cols() != n_obs)
      throw ConfigError("emission prior counts must be K x L");
    return emission_counts;
  }
  void validate() const {
    if (!(intercept_sd > 0.0) || !(global_scale > 0.0) || !(eta_concentration > 0.0) ||
        !(gamma_concentration > 0.0))
      throw ConfigError("prior scales and concentrations must be positive");
    if (emission_counts.size() > 0 && !(emission_counts.array() > 0.0).all())
      throw ConfigError("emission prior counts must be positive");
  }
};

/// Counts of pi_1^c over the given individuals.
inline Eigen::VectorXd initial_counts(const LatentPaths& paths, std::span<const int> individuals, int chain) {
  Eigen::VectorXd n = Eigen::VectorXd::Zero(paths.dims().n_latent);
  for (int i : individuals) n[paths.at(i, chain, 0)] += 1.0;
  return n;
}

/// Counts of (pi_t^c = k, x_t^c = l) over observed cells.
inline Eigen::MatrixXd emission_counts(const LatentPaths& paths, const ObservationPanel& obs,
                                       std::span<const int> individuals, int chain) {
  const Dims& d = obs.dims();
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(d.n_latent, d.n_obs);
  for (int i : individuals)
    for (int t = 0; t < d.n_steps; ++t) {
      const int x = obs.at(i, chain, t);
      if (x != kMissing) n(paths.at(i, chain, t), x) += 1.0;
    }
  return n;
}

inline InitialParams gibbs_update_eta(const LatentPaths& paths, std::span<const int> individuals,
                                      const PriorSpec& prior, Rng& rng) {
  const Dims& d = paths.dims();
  InitialParams eta;
  for (int c = 0; c < d.n_chains; ++c) {
    const Eigen::VectorXd a =
        Eigen::VectorXd::Constant(d.n_latent, prior.eta_concentration) + initial_counts(paths, individuals, c);
    eta.probs.push_back(dirichlet_draw(a, rng));
  }
  return eta;
}

inline Eigen::VectorXd update_eta_chain(const LatentPaths& paths, std::span<const int> individuals, int chain,
                                        const PriorSpec& prior, Rng& rng) {
  const Eigen::VectorXd a = Eigen::VectorXd::Constant(paths.dims().n_latent, prior.eta_concentration) +
                            initial_counts(paths, individuals, chain);
  return dirichlet_draw(a, rng);
}

inline Eigen::MatrixXd update_eps_chain(const LatentPaths& paths, const ObservationPanel& obs,
                                        std::span<const int> individuals, int chain, const PriorSpec& prior,
                                        Rng& rng) {
  const Dims& d = obs.dims();
  const Eigen::MatrixXd a = prior.emission_prior(d.n_latent, d.n_obs) + emission_counts(paths, obs, individuals, chain);
  Eigen::MatrixXd m(d.n_latent, d.n_obs);
  for (int k = 0; k < d.n_latent; ++k) m.row(k) = dirichlet_draw(a.row(k).transpose(), rng).transpose();
  return m;
}

inline EmissionParams gibbs_update_eps(const LatentPaths& paths, const ObservationPanel& obs,
                                       std::span<const int> individuals, const PriorSpec& prior, Rng& rng) {
  EmissionParams eps;
  for (int c = 0; c < obs.dims().n_chains; ++c)
    eps.matrices.push_back(update_eps_chain(paths, obs, individuals, c, prior, rng));
  return eps;
}

inline Eigen::VectorXd update_gamma(std::span<const int> z, int n_components, const PriorSpec& prior, Rng& rng) {
  Eigen::VectorXd a = Eigen::VectorXd::Constant(n_components, prior.gamma_concentration);
  for (int m : z) a[m] += 1.0;
  return dirichlet_draw(a, rng);
}

}  // namespace mchmm
