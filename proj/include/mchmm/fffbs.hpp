#pragma once

// Factorized FFBS. The joint filtered distribution is approximated by a product
// of per-chain marginals, which lets each chain run its own forward recursion
// through a dynamic transition matrix built from the factor form of tau:
//
//   tau_t^c  ~  F0 .* prod_{s != c} ( sum_k alpha_{t-1}^s(k) F^{c<-s}_k )   (row-normalized)
//
// Cost per step is O(C^2 K^3) instead of O(K^{2C}).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mchmm/ffbs.hpp"
#include "mchmm/params.hpp"
#include "mchmm/rng.hpp"

namespace mchmm {

struct FactorizedLattice {
  std::vector<Eigen::MatrixXd> alpha;  // per chain, T x K
  Eigen::MatrixXd log_norms;           // C x T, log Z_t^c

  int n_chains() const { return static_cast<int>(alpha.size()); }
  int n_steps() const { return alpha.empty() ? 0 : static_cast<int>(alpha.front().rows()); }
  double log_lik() const { return log_norms.sum(); }
};

namespace detail {

/// sum_k w(k) F_k, the expected factor of a source chain under its marginal.
inline Eigen::MatrixXd expected_factor(const FactorSet& f, int target, int source,
                                       const Eigen::Ref<const Eigen::RowVectorXd>& w) {
  const int K = f.n_states;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(K, K);
  for (int k = 0; k < K; ++k)
    if (w[k] != 0.0) a.noalias() += w[k] * f.factor(target, source, k);
  return a;
}

}  // namespace detail

/// Dynamic transition of `target` at step t (t >= 1) given the lattice rows at t-1.
inline Eigen::MatrixXd dynamic_transition(const FactorSet& f, const FactorizedLattice& lat, int target,
                                          int t) {
  Eigen::MatrixXd g = f.intercept[static_cast<std::size_t>(target)];
  for (int s = 0; s < f.n_chains; ++s) {
    if (s == target) continue;
    g.array() *= detail::expected_factor(f, target, s, lat.alpha[s].row(t - 1)).array();
    for (Eigen::Index r = 0; r < g.rows(); ++r) g.row(r) /= g.row(r).maxCoeff();
  }
  for (Eigen::Index r = 0; r < g.rows(); ++r) g.row(r) /= g.row(r).sum();
  return g;
}

inline FactorizedLattice fffbs_forward(const ModelParams& p, const FactorSet& f, GridView obs) {
  const int C = p.n_chains();
  const int K = p.n_latent();
  const int T = obs.steps;
  FactorizedLattice lat;
  lat.alpha.assign(static_cast<std::size_t>(C), Eigen::MatrixXd(T, K));
  lat.log_norms.resize(C, T);
  Eigen::VectorXd pred(K), a(K);
  for (int t = 0; t < T; ++t) {
    for (int c = 0; c < C; ++c) {
      if (t == 0) {
        pred = p.eta.probs[static_cast<std::size_t>(c)];
      } else {
        const Eigen::MatrixXd tau = dynamic_transition(f, lat, c, t);
        pred.noalias() = tau.transpose() * lat.alpha[c].row(t - 1).transpose();
      }
      for (int k = 0; k < K; ++k) a[k] = pred[k] * emission_weight(p.eps, c, k, obs(c, t));
      const double z = a.sum();
      if (!(z > 0.0))
        throw NumericalError("fFFBS forward recursion lost all mass at step " + std::to_string(t + 1));
      lat.log_norms(c, t) = std::log(z);
      lat.alpha[c].row(t) = (a / z).transpose();
    }
  }
  return lat;
}

inline FactorizedLattice fffbs_forward(const ModelParams& p, GridView obs) {
  return fffbs_forward(p, to_factors(p.beta), obs);
}

namespace detail {

/// Time-reversed kernel at step t < T-1 given the sampled states at t+1.
///
/// The chains of pi_t are drawn one at a time in ascending order. Chain c is
/// drawn from alpha^c_t(k) times every chain's transition into its sampled
/// state at t+1, where chains already drawn enter with their sampled state and
/// chains not yet drawn enter through their marginal alpha_t (averaged
/// factors), mirroring the forward approximation. The product of these C
/// normalized conditionals is a proper distribution over the K^C joint states.
///
/// With rng == nullptr the states in `out` are scored instead of drawn.
/// Returns log q(out | next).
inline double fffbs_backward_step(const FactorizedLattice& lat, const ModelParams& p, const FactorSet& f,
                                  int t, std::span<const int> next, std::span<int> out, Rng* rng) {
  const int C = p.n_chains();
  const int K = p.n_latent();
  const auto cc = [C](int target, int source) { return static_cast<std::size_t>(target) * C + source; };

  std::vector<Eigen::MatrixXd> log_avg(static_cast<std::size_t>(C) * C);
  std::vector<Eigen::MatrixXd> mu(static_cast<std::size_t>(C));
  for (int tc = 0; tc < C; ++tc) {
    mu[tc] = p.beta.intercept(tc);
    for (int s = 0; s < C; ++s) {
      if (s == tc) continue;
      log_avg[cc(tc, s)] = expected_factor(f, tc, s, lat.alpha[s].row(t)).array().log().matrix();
      mu[tc] += log_avg[cc(tc, s)];
    }
  }

  std::vector<double> logw(static_cast<std::size_t>(K)), row(static_cast<std::size_t>(K));
  double log_q = 0.0;
  for (int c = 0; c < C; ++c) {
    for (int k = 0; k < K; ++k) {
      const double ak = lat.alpha[c](t, k);
      if (ak <= 0.0) {
        logw[k] = -std::numeric_limits<double>::infinity();
        continue;
      }
      double lw = std::log(ak);
      for (int tc = 0; tc < C; ++tc) {
        const int dest = next[static_cast<std::size_t>(tc)];
        if (tc == c) {
          for (int j = 0; j < K; ++j) row[j] = mu[c](k, j);
          lw += log_softmax_at(row, dest);
          continue;
        }
        const Eigen::MatrixXd& eff = p.beta.effect(tc, c, k);
        const Eigen::MatrixXd& la = log_avg[cc(tc, c)];
        auto term_for_row = [&](int a) {
          for (int j = 0; j < K; ++j) row[j] = mu[tc](a, j) + eff(a, j) - la(a, j);
          return log_softmax_at(row, dest);
        };
        if (tc < c) {
          lw += term_for_row(out[static_cast<std::size_t>(tc)]);
        } else {
          double acc = 0.0;
          for (int a = 0; a < K; ++a) {
            const double w = lat.alpha[tc](t, a);
            if (w > 0.0) acc += w * std::exp(term_for_row(a));
          }
          lw += std::log(acc);
        }
      }
      logw[k] = lw;
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logw) mx = std::max(mx, v);
    if (!std::isfinite(mx)) throw NumericalError("fFFBS backward kernel has no mass");
    double total = 0.0;
    for (double v : logw) total += std::exp(v - mx);
    int chosen;
    if (rng != nullptr) {
      chosen = sample_log_categorical(logw, *rng);
      out[static_cast<std::size_t>(c)] = chosen;
    } else {
      chosen = out[static_cast<std::size_t>(c)];
    }
    log_q += logw[chosen] - mx - std::log(total);
    for (int tc = 0; tc < C; ++tc) {
      if (tc == c) continue;
      mu[tc] += p.beta.effect(tc, c, chosen) - log_avg[cc(tc, c)];
    }
  }
  return log_q;
}

}  // namespace detail

inline SamplerResult fffbs_backward_sample(const FactorizedLattice& lat, const ModelParams& p,
                                           const FactorSet& f, Rng& rng) {
  const int C = lat.n_chains();
  const int T = lat.n_steps();
  const int K = p.n_latent();
  SamplerResult res;
  res.path = StateGrid(C, T);
  res.log_lik = lat.log_lik();
  std::vector<double> w(static_cast<std::size_t>(K));
  std::vector<int> next(static_cast<std::size_t>(C)), cur(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    for (int k = 0; k < K; ++k) w[k] = lat.alpha[c](T - 1, k);
    next[c] = sample_categorical(w, rng);
    res.path(c, T - 1) = next[c];
  }
  for (int t = T - 2; t >= 0; --t) {
    detail::fffbs_backward_step(lat, p, f, t, next, cur, &rng);
    for (int c = 0; c < C; ++c) res.path(c, t) = cur[c];
    next = cur;
  }
  return res;
}

/// Probability the backward kernel assigns to `current` at step t given `next` at t+1.
inline double fffbs_backward_kernel(const FactorizedLattice& lat, const ModelParams& p, const FactorSet& f,
                                    int t, std::span<const int> next, std::span<const int> current) {
  std::vector<int> cur(current.begin(), current.end());
  return std::exp(detail::fffbs_backward_step(lat, p, f, t, next, cur, nullptr));
}

/// Probability of a whole path under fffbs_backward_sample.
inline double fffbs_path_probability(const FactorizedLattice& lat, const ModelParams& p, const FactorSet& f,
                                     const StateGrid& path) {
  const int C = lat.n_chains();
  const int T = lat.n_steps();
  double prob = 1.0;
  for (int c = 0; c < C; ++c) prob *= lat.alpha[c](T - 1, path(c, T - 1));
  std::vector<int> next(static_cast<std::size_t>(C)), cur(static_cast<std::size_t>(C));
  for (int t = T - 2; t >= 0 && prob > 0.0; --t) {
    path.column(t + 1, next);
    path.column(t, cur);
    prob *= fffbs_backward_kernel(lat, p, f, t, next, cur);
  }
  return prob;
}

}  // namespace mchmm
