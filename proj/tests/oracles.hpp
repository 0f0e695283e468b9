#pragma once

// Brute-force references used by the tests. Everything here is computed
// straight from the model definition by enumerating complete latent paths.

#include <cmath>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "mchmm/mchmm.hpp"

namespace oracle {

using namespace mchmm;

inline Eigen::VectorXd random_simplex(int n, Rng& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = -std::log(1.0 - uniform01(rng));
  return v / v.sum();
}

inline Eigen::MatrixXd random_zero_row_sum(int K, double scale, Rng& rng) {
  Eigen::MatrixXd m(K, K);
  for (int r = 0; r < K; ++r)
    for (int c = 0; c < K; ++c) m(r, c) = scale * std_normal(rng);
  for (int r = 0; r < K; ++r) m.row(r).array() -= m.row(r).mean();
  return m;
}

/// Random CHMM; `coupling` scales the effect matrices (0 gives an uncoupled model).
inline ModelParams random_params(int C, int K, int L, Rng& rng, double coupling = 1.0, double intercept = 1.0) {
  ModelParams p = uniform_params(C, K, L);
  for (int c = 0; c < C; ++c) {
    p.eta.probs[c] = random_simplex(K, rng);
    for (int k = 0; k < K; ++k) p.eps.matrices[c].row(k) = random_simplex(L, rng).transpose();
    p.beta.target(c).set_intercept(random_zero_row_sum(K, intercept, rng));
    for (int s = 0; s < C; ++s) {
      if (s == c) continue;
      for (int k = 1; k < K; ++k) p.beta.target(c).set_effect(s, k, random_zero_row_sum(K, coupling, rng));
    }
  }
  return p;
}

inline StateGrid random_obs(int C, int T, int L, Rng& rng, double missing = 0.0) {
  StateGrid g(C, T);
  for (int c = 0; c < C; ++c)
    for (int t = 0; t < T; ++t)
      g(c, t) = uniform01(rng) < missing ? kMissing : static_cast<int>(uniform01(rng) * L);
  return g;
}

/// Transition probability written out from the definition: softmax over the
/// row of intercept + sum of the source effects.
inline double transition_prob(const ModelParams& p, const std::vector<int>& prev, int c, int next) {
  const int K = p.n_latent();
  Eigen::RowVectorXd mu = p.beta.intercept(c).row(prev[c]);
  for (int s = 0; s < p.n_chains(); ++s)
    if (s != c) mu += p.beta.effect(c, s, prev[s]).row(prev[c]);
  double z = 0.0;
  for (int k = 0; k < K; ++k) z += std::exp(mu[k]);
  return std::exp(mu[next]) / z;
}

/// p(path, obs).
inline double joint_prob(const ModelParams& p, const StateGrid& path, const StateGrid& obs) {
  const int C = path.chains, T = path.steps;
  double pr = 1.0;
  std::vector<int> prev(C);
  for (int t = 0; t < T; ++t) {
    for (int c = 0; c < C; ++c) {
      const int s = path(c, t);
      pr *= t == 0 ? p.eta.probs[c][s] : transition_prob(p, prev, c, s);
      if (obs(c, t) != kMissing) pr *= p.eps.matrices[c](s, obs(c, t));
    }
    for (int c = 0; c < C; ++c) prev[c] = path(c, t);
  }
  return pr;
}

inline StateGrid decode_path(std::size_t idx, int C, int T, int K) {
  StateGrid g(C, T);
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < C; ++c) {
      g(c, t) = static_cast<int>(idx % K);
      idx /= K;
    }
  return g;
}

inline std::size_t encode_path(const StateGrid& g, int K) {
  std::size_t idx = 0, mul = 1;
  for (int t = 0; t < g.steps; ++t)
    for (int c = 0; c < g.chains; ++c) {
      idx += static_cast<std::size_t>(g(c, t)) * mul;
      mul *= K;
    }
  return idx;
}

struct Enumeration {
  std::vector<double> joint;  // p(path, obs) indexed by encode_path
  double likelihood = 0.0;

  std::vector<double> posterior() const {
    std::vector<double> out(joint);
    for (double& v : out) v /= likelihood;
    return out;
  }
};

inline Enumeration enumerate(const ModelParams& p, const StateGrid& obs) {
  const int C = obs.chains, T = obs.steps, K = p.n_latent();
  std::size_t n = 1;
  for (int i = 0; i < C * T; ++i) n *= K;
  Enumeration e;
  e.joint.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    e.joint[i] = joint_prob(p, decode_path(i, C, T, K), obs);
    e.likelihood += e.joint[i];
  }
  return e;
}

/// Posterior marginals P(pi_t^c = k | x), indexed [t][c][k].
inline std::vector<std::vector<std::vector<double>>> smoothing_marginals(const ModelParams& p, const StateGrid& obs) {
  const int C = obs.chains, T = obs.steps, K = p.n_latent();
  const Enumeration e = enumerate(p, obs);
  std::vector<std::vector<std::vector<double>>> m(T, std::vector<std::vector<double>>(C, std::vector<double>(K, 0.0)));
  for (std::size_t i = 0; i < e.joint.size(); ++i) {
    const StateGrid g = decode_path(i, C, T, K);
    for (int t = 0; t < T; ++t)
      for (int c = 0; c < C; ++c) m[t][c][g(c, t)] += e.joint[i] / e.likelihood;
  }
  return m;
}

inline double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// P(a < beta < b) under the horseshoe with global scale s: the half-Cauchy
/// local scale lambda = tan(theta), theta ~ U(0, pi/2), integrated by Simpson's rule.
inline double horseshoe_bin_probability(double a, double b, double s, int n = 20000) {
  const double h = (M_PI / 2.0) / n;
  auto f = [&](double theta) {
    if (theta <= 0.0) return a < 0.0 && b > 0.0 ? 1.0 : (a == 0.0 || b == 0.0 ? 0.5 : 0.0);
    const double sigma = s * std::tan(theta);
    if (!std::isfinite(sigma)) return 0.0;
    return normal_cdf(b / sigma) - normal_cdf(a / sigma);
  };
  double acc = f(0.0) + f(M_PI / 2.0);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return (2.0 / M_PI) * acc * h / 3.0;
}

}  // namespace oracle
