#pragma once

// Forward simulation of (mixtures of) CHMMs and the shipped presets.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mchmm/params.hpp"
#include "mchmm/rng.hpp"

namespace mchmm {

struct SimSpec {
  Dims dims{};  // n_individuals is the total count
  std::vector<ModelParams> clusters;
  Eigen::VectorXd proportions;     // used when cluster_sizes is empty
  std::vector<int> cluster_sizes;  // contiguous blocks of individuals per cluster
  std::vector<int> observed_steps;  // 0-based steps kept; empty keeps all
  double mcar_rate = 0.0;

  void validate() const {
    dims.validate();
    if (clusters.empty()) throw ConfigError("simulation needs at least one cluster");
    for (const auto& p : clusters) {
      p.check_matches(dims);
      p.validate();
    }
    if (!cluster_sizes.empty()) {
      if (cluster_sizes.size() != clusters.size()) throw ConfigError("cluster_sizes needs one entry per cluster");
      long total = 0;
      for (int n : cluster_sizes) {
        if (n < 0) throw ConfigError("cluster sizes must be nonnegative");
        total += n;
      }
      if (total != dims.n_individuals) throw ConfigError("cluster sizes must add up to n_individuals");
    } else {
      if (proportions.size() != static_cast<Eigen::Index>(clusters.size()))
        throw ConfigError("proportions need one entry per cluster");
      if ((proportions.array() < 0.0).any() || std::abs(proportions.sum() - 1.0) > 1e-9)
        throw ConfigError("cluster proportions must be nonnegative and sum to 1");
    }
    for (int t : observed_steps)
      if (t < 0 || t >= dims.n_steps) throw ConfigError("observed step out of range");
    if (!(mcar_rate >= 0.0 && mcar_rate <= 1.0)) throw ConfigError("mcar_rate must lie in [0, 1]");
  }
};

struct SimResult {
  ObservationPanel panel;
  LatentPaths latent;
  std::vector<int> labels;
};

/// Latent path and observations of one individual from one CHMM.
inline void simulate_individual(const ModelParams& p, int n_steps, Rng& rng, StateGrid& latent, StateGrid& obs) {
  const int C = p.n_chains();
  const int K = p.n_latent();
  const int L = p.n_obs();
  latent = StateGrid(C, n_steps);
  obs = StateGrid(C, n_steps);
  std::vector<double> w(static_cast<std::size_t>(std::max(K, L)));
  std::vector<int> prev(static_cast<std::size_t>(C));
  for (int t = 0; t < n_steps; ++t) {
    for (int c = 0; c < C; ++c) {
      w.resize(static_cast<std::size_t>(K));
      if (t == 0) {
        for (int k = 0; k < K; ++k) w[k] = p.eta.probs[c][k];
      } else {
        p.beta.target(c).logits_row(prev, prev[c], w);
        softmax_inplace(w);
      }
      latent(c, t) = sample_categorical(w, rng);
    }
    for (int c = 0; c < C; ++c) {
      w.resize(static_cast<std::size_t>(L));
      for (int l = 0; l < L; ++l) w[l] = p.eps.matrices[c](latent(c, t), l);
      obs(c, t) = sample_categorical(w, rng);
    }
    latent.column(t, prev);
  }
}

inline SimResult simulate(const SimSpec& spec, std::uint64_t seed) {
  spec.validate();
  const Dims& d = spec.dims;
  SimResult r;
  r.labels.resize(static_cast<std::size_t>(d.n_individuals));
  if (!spec.cluster_sizes.empty()) {
    int n = 0;
    for (std::size_t m = 0; m < spec.cluster_sizes.size(); ++m)
      for (int i = 0; i < spec.cluster_sizes[m]; ++i) r.labels[n++] = static_cast<int>(m);
  }
  std::vector<char> keep(static_cast<std::size_t>(d.n_steps), spec.observed_steps.empty() ? 1 : 0);
  for (int t : spec.observed_steps) keep[t] = 1;

  r.panel = ObservationPanel(d);
  r.latent = LatentPaths(d);
  StateGrid lat, obs;
  std::vector<double> prop(spec.proportions.data(), spec.proportions.data() + spec.proportions.size());
  for (int n = 0; n < d.n_individuals; ++n) {
    Rng rng = make_stream(seed, {stream::kSimulate, static_cast<std::uint64_t>(n)});
    if (spec.cluster_sizes.empty()) r.labels[n] = spec.clusters.size() == 1 ? 0 : sample_categorical(prop, rng);
    simulate_individual(spec.clusters[static_cast<std::size_t>(r.labels[n])], d.n_steps, rng, lat, obs);
    r.latent.set_path(n, lat);
    for (int c = 0; c < d.n_chains; ++c)
      for (int t = 0; t < d.n_steps; ++t) {
        bool observed = keep[t] != 0;
        if (spec.mcar_rate > 0.0 && uniform01(rng) < spec.mcar_rate) observed = false;
        r.panel.set(n, c, t, observed ? obs(c, t) : kMissing);
      }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Presets. K = L = 2 with state 0 = negative and state 1 = positive.

namespace preset {

/// Zero-row-sum 2x2 intercept with the given stay probabilities.
inline Eigen::MatrixXd stay_intercept(double stay0, double stay1) {
  const double a = 0.5 * std::log(stay0 / (1.0 - stay0));
  const double b = 0.5 * std::log(stay1 / (1.0 - stay1));
  Eigen::MatrixXd m(2, 2);
  m << a, -a, -b, b;
  return m;
}

/// 2x2 effect of a positive source chain; row r gets free value v_r in column 0.
inline Eigen::MatrixXd effect2(double v0, double v1) {
  Eigen::MatrixXd m(2, 2);
  m << v0, -v0, v1, -v1;
  return m;
}

inline Eigen::MatrixXd noisy_test_emission() {
  Eigen::MatrixXd e(2, 2);
  e << 0.98, 0.02, 0.15, 0.85;
  return e;
}

inline ModelParams two_state_chmm(int C, const Eigen::Vector2d& eta, const Eigen::MatrixXd& intercept,
                                  const Eigen::MatrixXd& emission) {
  ModelParams p = uniform_params(C, 2, 2);
  for (int c = 0; c < C; ++c) {
    p.eta.probs[c] = eta;
    p.eps.matrices[c] = emission;
    p.beta.target(c).set_intercept(intercept);
  }
  return p;
}

/// Two well-separated clusters: "acquirers" drift to the positive state,
/// "clearers" drift to the negative state. Positive sources raise acquisition.
inline SimSpec ss1(int n_steps, int per_cluster = 1000) {
  SimSpec s;
  s.dims = Dims{3, 2, 2, n_steps, 2 * per_cluster};
  ModelParams a = two_state_chmm(3, Eigen::Vector2d(0.8, 0.2), stay_intercept(0.8, 0.95), noisy_test_emission());
  ModelParams b = two_state_chmm(3, Eigen::Vector2d(0.3, 0.7), stay_intercept(0.97, 0.6), noisy_test_emission());
  for (ModelParams* p : {&a, &b})
    for (int c = 0; c < 3; ++c)
      for (int src = 0; src < 3; ++src)
        if (src != c) p->beta.target(c).set_effect(src, 1, effect2(-0.5, -0.3));
  s.clusters = {a, b};
  s.cluster_sizes = {per_cluster, per_cluster};
  return s;
}

/// Known-coefficient CHMM for parameter recovery; cluster 0 has a mix of null
/// and +-1 effects.
inline ModelParams ss2_cluster0() {
  ModelParams p = two_state_chmm(3, Eigen::Vector2d(0.6, 0.4), stay_intercept(0.9, 0.8), noisy_test_emission());
  p.beta.target(0).set_effect(1, 1, effect2(-1.0, 0.0));
  p.beta.target(1).set_effect(0, 1, effect2(-1.0, 1.0));
  p.beta.target(2).set_effect(1, 1, effect2(1.0, -1.0));
  return p;
}

inline ModelParams ss2_cluster1() {
  ModelParams p = two_state_chmm(3, Eigen::Vector2d(0.3, 0.7), stay_intercept(0.7, 0.95), noisy_test_emission());
  p.beta.target(0).set_effect(2, 1, effect2(-1.0, -1.0));
  return p;
}

inline SimSpec ss2(int per_cluster = 1000, int n_clusters = 2) {
  SimSpec s;
  s.dims = Dims{3, 2, 2, 7, n_clusters * per_cluster};
  s.clusters = {ss2_cluster0()};
  if (n_clusters > 1) s.clusters.push_back(ss2_cluster1());
  s.cluster_sizes.assign(static_cast<std::size_t>(n_clusters), per_cluster);
  return s;
}

/// SS-2 generator observed only at steps 1, 2, 4 and 7 of a 7-step grid.
inline SimSpec clear_like(int per_cluster = 1000) {
  SimSpec s = ss2(per_cluster);
  s.observed_steps = {0, 1, 3, 6};
  return s;
}

inline SimSpec by_name(const std::string& name) {
  if (name == "ss1") return ss1(20);
  if (name == "ss2") return ss2();
  if (name == "clear-like") return clear_like();
  throw ConfigError("unknown preset '" + name + "' (expected ss1, ss2 or clear-like)");
}

}  // namespace preset

}  // namespace mchmm
