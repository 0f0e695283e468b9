#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mchmm/model.hpp"
#include "mchmm/transition.hpp"

namespace mchmm {

/// Parameters of one CHMM component.
struct ModelParams {
  TransitionCoeffs beta;
  InitialParams eta;
  EmissionParams eps;

  int n_chains() const { return beta.n_chains(); }
  int n_latent() const { return beta.n_states(); }
  int n_obs() const {
    return eps.matrices.empty() ? 0 : static_cast<int>(eps.matrices.front().cols());
  }

  void validate(double tol = kStochasticTol) const {
    if (eta.n_chains() != n_chains() || eps.n_chains() != n_chains())
      throw DimensionError("parameter blocks disagree on the number of chains");
    eta.validate(n_latent(), tol);
    eps.validate(n_latent(), n_obs(), tol);
    for (int c = 0; c < n_chains(); ++c) {
      const auto& t = beta.target(c);
      auto check = [&](const Eigen::MatrixXd& m) {
        if ((m.rowwise().sum().cwiseAbs().array() > 1e-10).any())
          throw NumericalError("transition coefficient rows must sum to zero");
      };
      check(t.intercept());
      for (int s = 0; s < n_chains(); ++s) {
        if (s == c) continue;
        for (int k = 0; k < n_latent(); ++k) check(t.effect(s, k));
        if (t.effect(s, t.baseline(s)).cwiseAbs().maxCoeff() != 0.0)
          throw NumericalError("baseline effect must be zero");
      }
    }
  }

  void check_matches(const Dims& d) const {
    if (d.n_chains != n_chains() || d.n_latent != n_latent() || d.n_obs != n_obs())
      throw DimensionError("model parameters do not match panel dimensions");
  }
};

/// Zero coefficients, uniform initial states, uniform emissions.
inline ModelParams uniform_params(int n_chains, int n_latent, int n_obs,
                                  std::vector<int> baseline = {}) {
  ModelParams p;
  p.beta = TransitionCoeffs(n_chains, n_latent, std::move(baseline));
  for (int c = 0; c < n_chains; ++c) {
    p.eta.probs.push_back(Eigen::VectorXd::Constant(n_latent, 1.0 / n_latent));
    p.eps.matrices.push_back(Eigen::MatrixXd::Constant(n_latent, n_obs, 1.0 / n_obs));
  }
  return p;
}

/// Per-chain emission weights at step t: out[c*K + k] = p(x_t^c | k).
inline void emission_column(const EmissionParams& eps, GridView obs, int t, int n_latent,
                            std::span<double> out) {
  for (int c = 0; c < obs.chains; ++c) {
    const int x = obs(c, t);
    const auto& m = eps.matrices[static_cast<std::size_t>(c)];
    for (int k = 0; k < n_latent; ++k)
      out[static_cast<std::size_t>(c) * n_latent + k] = (x == kMissing) ? 1.0 : m(k, x);
  }
}

}  // namespace mchmm
