#pragma once

// Individual FFBS: resample one chain's path conditionally on the current
// paths of all other chains, including the "modifying mass" that carries the
// chain's influence on the others' next-step transitions.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "mchmm/ffbs.hpp"
#include "mchmm/params.hpp"
#include "mchmm/rng.hpp"

namespace mchmm {

/// Per-chain forward lattice (T x K). log_norms holds the first-stage
/// normalizers log Z_t^c taken before the modifying mass is applied.
struct ChainLattice {
  Eigen::MatrixXd alpha;
  std::vector<double> log_norms;

  double log_lik() const { return std::accumulate(log_norms.begin(), log_norms.end(), 0.0); }
};

namespace detail {

/// out[k] = prod_{s != c} tau^s(column t with chain c set to k)[pi_t^s, pi_{t+1}^s].
inline void modifying_mass(const TransitionCoeffs& beta, const StateGrid& paths, int chain, int t,
                           std::vector<double>& out) {
  const int C = beta.n_chains();
  const int K = beta.n_states();
  out.assign(static_cast<std::size_t>(K), 1.0);
  std::vector<int> col(static_cast<std::size_t>(C));
  paths.column(t, col);
  std::vector<double> base(static_cast<std::size_t>(K)), row(static_cast<std::size_t>(K));
  for (int s = 0; s < C; ++s) {
    if (s == chain) continue;
    const auto& tc = beta.target(s);
    const int a = col[s];
    const int b = paths(s, t + 1);
    // Logit row of chain s without chain `chain`'s contribution.
    col[chain] = tc.baseline(chain);
    tc.logits_row(col, a, base);
    for (int k = 0; k < K; ++k) {
      row = base;
      if (!tc.is_baseline(chain, k)) {
        const auto& e = tc.effect(chain, k);
        for (int j = 0; j < K; ++j) row[j] += e(a, j);
      }
      out[k] *= std::exp(log_softmax_at(row, b));
    }
    col[chain] = paths(chain, t);
  }
}

/// Transition of `chain` from step t-1 to t given the other chains at t-1.
inline Eigen::MatrixXd conditional_transition(const TransitionCoeffs& beta, const StateGrid& paths,
                                              int chain, int t_prev) {
  std::vector<int> col(static_cast<std::size_t>(beta.n_chains()));
  paths.column(t_prev, col);
  return build_transition(beta, col, chain);
}

}  // namespace detail

inline ChainLattice iffbs_forward(const ModelParams& p, GridView obs, int chain, const StateGrid& paths) {
  const int T = obs.steps;
  const int K = p.n_latent();
  ChainLattice lat;
  lat.alpha.resize(T, K);
  lat.log_norms.resize(static_cast<std::size_t>(T));
  Eigen::VectorXd pred = p.eta.probs[static_cast<std::size_t>(chain)];
  Eigen::VectorXd a(K);
  std::vector<double> mass;
  for (int t = 0; t < T; ++t) {
    if (t > 0) {
      const Eigen::MatrixXd tau = detail::conditional_transition(p.beta, paths, chain, t - 1);
      pred.noalias() = tau.transpose() * lat.alpha.row(t - 1).transpose();
    }
    for (int k = 0; k < K; ++k) a[k] = pred[k] * emission_weight(p.eps, chain, k, obs(chain, t));
    double z = a.sum();
    if (!(z > 0.0))
      throw NumericalError("iFFBS forward recursion lost all mass at step " + std::to_string(t + 1));
    lat.log_norms[static_cast<std::size_t>(t)] = std::log(z);
    a /= z;
    if (t + 1 < T && p.n_chains() > 1) {
      detail::modifying_mass(p.beta, paths, chain, t, mass);
      for (int k = 0; k < K; ++k) a[k] *= mass[k];
      z = a.sum();
      if (!(z > 0.0))
        throw NumericalError("iFFBS modifying mass is zero at step " + std::to_string(t + 1));
      a /= z;
    }
    lat.alpha.row(t) = a.transpose();
  }
  return lat;
}

/// Backward pass for one chain; overwrites row `chain` of `paths`.
inline void iffbs_backward_sample(const ChainLattice& lat, const ModelParams& p, int chain,
                                  StateGrid& paths, Rng& rng) {
  const int T = static_cast<int>(lat.alpha.rows());
  const int K = p.n_latent();
  std::vector<double> w(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) w[k] = lat.alpha(T - 1, k);
  paths(chain, T - 1) = sample_categorical(w, rng);
  for (int t = T - 2; t >= 0; --t) {
    // Chain's own transition t -> t+1 depends on the other chains at t only.
    const Eigen::MatrixXd tau = detail::conditional_transition(p.beta, paths, chain, t);
    const int next = paths(chain, t + 1);
    for (int k = 0; k < K; ++k) w[k] = tau(k, next) * lat.alpha(t, k);
    paths(chain, t) = sample_categorical(w, rng);
  }
}

struct SweepResult {
  StateGrid paths;
  double approx_log_lik = 0.0;
};

/// One Gibbs sweep over all chains. The returned likelihood is the sum of the
/// first-stage log normalizers of each chain's conditional forward pass, a
/// heuristic approximation and not an estimator of the marginal likelihood.
inline SweepResult iffbs_sweep(const ModelParams& p, GridView obs, StateGrid current, Rng& rng,
                               bool random_scan = false) {
  const int C = p.n_chains();
  std::vector<int> order(static_cast<std::size_t>(C));
  std::iota(order.begin(), order.end(), 0);
  if (random_scan) std::shuffle(order.begin(), order.end(), rng);
  SweepResult res;
  for (int c : order) {
    const ChainLattice lat = iffbs_forward(p, obs, c, current);
    res.approx_log_lik += lat.log_lik();
    iffbs_backward_sample(lat, p, c, current, rng);
  }
  res.paths = std::move(current);
  return res;
}

}  // namespace mchmm
