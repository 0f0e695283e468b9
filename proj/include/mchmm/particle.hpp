#pragma once

// Particle filter over the joint latent state with the optimal proposal
// (transition x emission, which factorizes over chains given the ancestor's
// full previous state) and adaptive systematic resampling.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mchmm/ffbs.hpp"
#include "mchmm/params.hpp"
#include "mchmm/rng.hpp"

namespace mchmm {

struct ParticleSet {
  int n_particles = 0;
  int n_chains = 0;
  int n_steps = 0;
  std::vector<int> states;     // (t*P + p)*C + c
  std::vector<int> ancestors;  // t*P + p, index of the parent at t-1
  std::vector<double> weights;  // normalized, after the last step
  std::vector<double> step_weight_means;
  SamplerDiagnostics diagnostics;
  double log_lik = 0.0;

  int state(int t, int p, int c) const {
    return states[(static_cast<std::size_t>(t) * n_particles + p) * n_chains + c];
  }
};

/// Particle effective sample size (sum w)^2 / sum w^2.
inline double particle_ess(std::span<const double> w) {
  double s = 0.0, s2 = 0.0;
  for (double x : w) {
    s += x;
    s2 += x * x;
  }
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

/// Systematic resampling of normalized weights driven by one uniform u in [0,1).
inline void systematic_resample(std::span<const double> w, double u, std::span<int> out) {
  const std::size_t P = out.size();
  double cum = w[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < P; ++i) {
    const double pos = (static_cast<double>(i) + u) / static_cast<double>(P);
    while (pos >= cum && j + 1 < w.size()) cum += w[++j];
    out[i] = static_cast<int>(j);
  }
}

inline ParticleSet pf_run(const ModelParams& p, GridView obs, int n_particles, double ess_frac, Rng& rng) {
  if (n_particles < 1) throw ConfigError("particle count must be at least 1");
  if (!(ess_frac > 0.0 && ess_frac <= 1.0)) throw ConfigError("ess_frac must lie in (0, 1]");
  const int C = p.n_chains();
  const int K = p.n_latent();
  const int T = obs.steps;
  const int P = n_particles;
  ParticleSet ps;
  ps.n_particles = P;
  ps.n_chains = C;
  ps.n_steps = T;
  ps.states.assign(static_cast<std::size_t>(T) * P * C, 0);
  ps.ancestors.assign(static_cast<std::size_t>(T) * P, 0);
  ps.step_weight_means.assign(static_cast<std::size_t>(T), 0.0);
  ps.diagnostics.ess_trace.assign(static_cast<std::size_t>(T), static_cast<double>(P));
  ps.diagnostics.resampled.assign(static_cast<std::size_t>(T), 0);

  std::vector<double> em(static_cast<std::size_t>(C) * K), q(static_cast<std::size_t>(K));
  std::vector<double> weights(static_cast<std::size_t>(P), 1.0 / P), inc(static_cast<std::size_t>(P));
  std::vector<int> parent(static_cast<std::size_t>(P)), prev(static_cast<std::size_t>(C));
  auto at = [&](int t, int pp) {
    return ps.states.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(t) * P + pp) * C);
  };

  for (int t = 0; t < T; ++t) {
    emission_column(p.eps, obs, t, K, em);
    if (t > 0) {
      const double ess = particle_ess(weights);
      ps.diagnostics.ess_trace[t] = ess;
      if (ess < ess_frac * P * (1.0 - 1e-12)) {
        systematic_resample(weights, uniform01(rng), parent);
        std::fill(weights.begin(), weights.end(), 1.0 / P);
        ps.diagnostics.resampled[t] = 1;
      } else {
        for (int i = 0; i < P; ++i) parent[i] = i;
      }
    } else {
      for (int i = 0; i < P; ++i) parent[i] = i;
    }
    for (int i = 0; i < P; ++i) {
      ps.ancestors[static_cast<std::size_t>(t) * P + i] = parent[i];
      if (t > 0) std::copy(at(t - 1, parent[i]), at(t - 1, parent[i]) + C, prev.begin());
      double w = 1.0;
      auto out = at(t, i);
      for (int c = 0; c < C; ++c) {
        if (t == 0) {
          for (int k = 0; k < K; ++k) q[k] = p.eta.probs[c][k];
        } else {
          p.beta.target(c).logits_row(prev, prev[c], q);
          softmax_inplace(q);
        }
        double s = 0.0;
        for (int k = 0; k < K; ++k) {
          q[k] *= em[static_cast<std::size_t>(c) * K + k];
          s += q[k];
        }
        w *= s;
        out[c] = s > 0.0 ? sample_categorical(q, rng) : 0;
        if (w == 0.0) {
          for (int c2 = c + 1; c2 < C; ++c2) out[c2] = 0;
          break;
        }
      }
      inc[i] = w;
    }
    double total = 0.0;
    for (int i = 0; i < P; ++i) total += weights[i] * inc[i];
    if (!(total > 0.0))
      throw NumericalError("particle filter degenerated: all weights are zero at step " + std::to_string(t + 1));
    ps.step_weight_means[t] = total;
    ps.log_lik += std::log(total);
    for (int i = 0; i < P; ++i) weights[i] = weights[i] * inc[i] / total;
  }
  ps.weights = std::move(weights);
  return ps;
}

/// Ancestral path of one particle drawn by final weight.
inline SamplerResult pf_sample_path(const ParticleSet& ps, Rng& rng) {
  SamplerResult res;
  res.path = StateGrid(ps.n_chains, ps.n_steps);
  res.log_lik = ps.log_lik;
  res.diagnostics = ps.diagnostics;
  int idx = ps.n_particles == 1 ? 0 : sample_categorical(ps.weights, rng);
  for (int t = ps.n_steps - 1; t >= 0; --t) {
    for (int c = 0; c < ps.n_chains; ++c) res.path(c, t) = ps.state(t, idx, c);
    idx = ps.ancestors[static_cast<std::size_t>(t) * ps.n_particles + idx];
  }
  return res;
}

}  // namespace mchmm
