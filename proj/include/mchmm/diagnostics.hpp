#pragma once

// MCMC effective sample size, clustering accuracy, cross-validated held-out
// NLL and posterior predictive summaries.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mchmm/gibbs.hpp"
#include "mchmm/mixture.hpp"
#include "mchmm/simulate.hpp"

namespace mchmm {

struct EssResult {
  double ess = 0.0;
  bool degenerate = false;
};

/// Geyer initial-positive-sequence estimator. tau = -1 + 2 sum_k Gamma_k with
/// Gamma_k = rho_{2k} + rho_{2k+1}, summed while positive (Gamma_0 always
/// enters). tau is floored at 1/log10(n) so antithetic chains report a finite
/// ESS above n.
inline EssResult ess(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 10) throw ConfigError("ESS needs at least 10 draws");
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - mean) * (x[i + lag] - mean);
    return s / static_cast<double>(n);
  };
  const double g0 = autocov(0);
  if (!(g0 > 1e-300 * (1.0 + mean * mean))) return {static_cast<double>(n), true};
  double tau = -1.0;
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    const double gamma = (autocov(2 * k) + autocov(2 * k + 1)) / g0;
    if (k > 0 && gamma <= 0.0) break;
    tau += 2.0 * gamma;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(n)));
  return {static_cast<double>(n) / tau, false};
}

/// Hungarian algorithm on an n x n cost matrix; returns assignment row -> column.
inline std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) assign[p[j] - 1] = j - 1;
  return assign;
}

/// Best match rate over relabelings of `estimated` (labels in 0..M-1).
inline double clustering_accuracy(std::span<const int> estimated, std::span<const int> truth, int n_components) {
  if (estimated.size() != truth.size()) throw DimensionError("label vectors differ in length");
  if (estimated.empty()) return 1.0;
  int M = n_components;
  for (int v : estimated) M = std::max(M, v + 1);
  for (int v : truth) M = std::max(M, v + 1);
  Eigen::MatrixXd confusion = Eigen::MatrixXd::Zero(M, M);
  for (std::size_t i = 0; i < estimated.size(); ++i) confusion(estimated[i], truth[i]) += 1.0;
  const auto assign = min_cost_assignment(-confusion);
  double hits = 0.0;
  for (int r = 0; r < M; ++r) hits += confusion(r, assign[r]);
  return hits / static_cast<double>(estimated.size());
}

/// Per-individual posterior mode of z over post-warm-up draws.
inline std::vector<int> posterior_mode_labels(const SampleStore& store) {
  const auto draws = store.posterior();
  const int N = store.dims.n_individuals;
  std::vector<int> out(static_cast<std::size_t>(N), 0);
  if (draws.empty()) throw ConfigError("sample store has no post-warm-up draws");
  std::vector<int> count(static_cast<std::size_t>(store.n_components));
  for (int n = 0; n < N; ++n) {
    std::fill(count.begin(), count.end(), 0);
    for (const Draw* d : draws) ++count[d->z[n]];
    out[n] = static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
  }
  return out;
}

struct PosteriorMean {
  std::vector<ModelParams> components;
  Eigen::VectorXd gamma;
};

inline PosteriorMean posterior_mean(const SampleStore& store) {
  const auto draws = store.posterior();
  if (draws.empty()) throw ConfigError("sample store has no post-warm-up draws");
  PosteriorMean pm;
  pm.components = draws.front()->components;
  pm.gamma = Eigen::VectorXd::Zero(store.n_components);
  const double w = 1.0 / static_cast<double>(draws.size());
  for (int m = 0; m < store.n_components; ++m) {
    ModelParams& p = pm.components[m];
    const int C = p.n_chains();
    for (int c = 0; c < C; ++c) {
      Eigen::VectorXd beta = Eigen::VectorXd::Zero(p.beta.target(c).free().size());
      Eigen::VectorXd eta = Eigen::VectorXd::Zero(p.eta.probs[c].size());
      Eigen::MatrixXd eps = Eigen::MatrixXd::Zero(p.eps.matrices[c].rows(), p.eps.matrices[c].cols());
      for (const Draw* d : draws) {
        const ModelParams& q = d->components[m];
        beta += w * q.beta.target(c).free();
        eta += w * q.eta.probs[c];
        eps += w * q.eps.matrices[c];
      }
      p.beta.target(c).set_free(beta);
      p.eta.probs[c] = eta / eta.sum();
      for (Eigen::Index k = 0; k < eps.rows(); ++k) eps.row(k) /= eps.row(k).sum();
      p.eps.matrices[c] = eps;
    }
  }
  for (const Draw* d : draws) pm.gamma += w * d->gamma;
  pm.gamma /= pm.gamma.sum();
  return pm;
}

/// Held-out log likelihood of one individual under a fitted mixture. PF
/// estimates are averaged on the likelihood scale over `replicates` runs.
inline double held_out_log_lik(const PosteriorMean& pm, GridView obs, const SamplerOptions& opt, int replicates,
                               Rng& rng) {
  if (!has_likelihood(opt.kind)) throw CapabilityError("held-out likelihood needs ffbs, fffbs or pf");
  const int M = static_cast<int>(pm.components.size());
  std::vector<double> ll(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) {
    ComponentSampler s(pm.components[m], opt);
    const int reps = opt.kind == SamplerKind::pf ? std::max(1, replicates) : 1;
    std::vector<double> r(static_cast<std::size_t>(reps));
    for (int i = 0; i < reps; ++i) r[i] = s.forward(obs, rng).log_lik;
    const double mx = *std::max_element(r.begin(), r.end());
    double acc = 0.0;
    for (double v : r) acc += std::exp(v - mx);
    ll[m] = mx + std::log(acc / reps);
  }
  return mixture_log_lik(ll, pm.gamma);
}

struct CvResult {
  std::vector<double> fold_nll;
  std::vector<std::vector<int>> folds;

  double mean() const {
    return std::accumulate(fold_nll.begin(), fold_nll.end(), 0.0) / static_cast<double>(fold_nll.size());
  }
  double sd() const {
    if (fold_nll.size() < 2) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (double v : fold_nll) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(fold_nll.size() - 1));
  }
};

/// Seeded random partition of 0..N-1 into k folds of near-equal size.
inline std::vector<std::vector<int>> make_folds(int n_individuals, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (n_individuals < k) throw ConfigError("fewer individuals than folds");
  std::vector<int> perm(static_cast<std::size_t>(n_individuals));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_stream(seed, {stream::kFolds});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<int>> folds(static_cast<std::size_t>(k));
  for (int i = 0; i < n_individuals; ++i) folds[static_cast<std::size_t>(i % k)].push_back(perm[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

inline CvResult cv_nll(const ObservationPanel& panel, const GibbsConfig& cfg, int k, int ll_replicates = 10) {
  CvResult res;
  res.folds = make_folds(panel.dims().n_individuals, k, cfg.seed);
  for (int f = 0; f < k; ++f) {
    const auto& test = res.folds[static_cast<std::size_t>(f)];
    if (test.empty()) throw ConfigError("cross-validation fold is empty");
    std::vector<int> train;
    for (int g = 0; g < k; ++g)
      if (g != f) train.insert(train.end(), res.folds[g].begin(), res.folds[g].end());
    std::sort(train.begin(), train.end());
    GibbsConfig fc = cfg;
    fc.store_draws = true;
    const SampleStore store = run_gibbs(panel.subset(train), fc);
    const PosteriorMean pm = posterior_mean(store);
    double nll = 0.0;
    for (int n : test) {
      Rng rng = make_stream(cfg.seed, {stream::kEval, static_cast<std::uint64_t>(f), static_cast<std::uint64_t>(n)});
      nll -= held_out_log_lik(pm, panel.individual(n), cfg.sampler, ll_replicates, rng);
    }
    res.fold_nll.push_back(nll);
  }
  return res;
}

struct PredictiveCell {
  int chain = 0;
  int step = 0;
  double observed = 0.0;  // NaN when the cell has no observations
  double lower = 0.0;
  double median = 0.0;
  double upper = 0.0;
};

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Fraction of observed cells showing the positive symbol (the last one) per
/// (chain, step); NaN where nothing is observed.
inline Eigen::MatrixXd positive_fraction(const ObservationPanel& panel) {
  const Dims& d = panel.dims();
  Eigen::MatrixXd pos = Eigen::MatrixXd::Zero(d.n_chains, d.n_steps), cnt = pos;
  for (int n = 0; n < d.n_individuals; ++n)
    for (int c = 0; c < d.n_chains; ++c)
      for (int t = 0; t < d.n_steps; ++t) {
        const int x = panel.at(n, c, t);
        if (x == kMissing) continue;
        cnt(c, t) += 1.0;
        if (x == d.n_obs - 1) pos(c, t) += 1.0;
      }
  Eigen::MatrixXd out(d.n_chains, d.n_steps);
  for (int c = 0; c < d.n_chains; ++c)
    for (int t = 0; t < d.n_steps; ++t)
      out(c, t) = cnt(c, t) > 0 ? pos(c, t) / cnt(c, t) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

/// Replicate panels from evenly spaced posterior draws, keeping each draw's
/// labels and the observed panel's missingness pattern.
inline std::vector<PredictiveCell> posterior_predictive(const ObservationPanel& panel, const SampleStore& store,
                                                        int n_reps, std::uint64_t seed) {
  const auto draws = store.posterior();
  if (draws.empty()) throw ConfigError("sample store has no post-warm-up draws");
  if (n_reps < 1) throw ConfigError("posterior predictive needs at least one replicate");
  const Dims& d = panel.dims();
  std::vector<std::vector<double>> reps(static_cast<std::size_t>(d.n_chains) * d.n_steps);
  StateGrid lat, obs;
  for (int r = 0; r < n_reps; ++r) {
    const std::size_t di = n_reps == 1 ? draws.size() - 1
                                       : static_cast<std::size_t>(r) * (draws.size() - 1) / (n_reps - 1);
    const Draw& draw = *draws[di];
    ObservationPanel rep(d);
    for (int n = 0; n < d.n_individuals; ++n) {
      Rng rng = make_stream(seed, {stream::kPredictive, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(n)});
      simulate_individual(draw.components[static_cast<std::size_t>(draw.z[n])], d.n_steps, rng, lat, obs);
      for (int c = 0; c < d.n_chains; ++c)
        for (int t = 0; t < d.n_steps; ++t)
          if (panel.at(n, c, t) != kMissing) rep.set(n, c, t, obs(c, t));
    }
    const Eigen::MatrixXd f = positive_fraction(rep);
    for (int c = 0; c < d.n_chains; ++c)
      for (int t = 0; t < d.n_steps; ++t)
        if (!std::isnan(f(c, t))) reps[static_cast<std::size_t>(c) * d.n_steps + t].push_back(f(c, t));
  }
  const Eigen::MatrixXd observed = positive_fraction(panel);
  std::vector<PredictiveCell> out;
  for (int c = 0; c < d.n_chains; ++c)
    for (int t = 0; t < d.n_steps; ++t) {
      auto& v = reps[static_cast<std::size_t>(c) * d.n_steps + t];
      std::sort(v.begin(), v.end());
      out.push_back({c, t, observed(c, t), quantile_sorted(v, 0.025), quantile_sorted(v, 0.5),
                     quantile_sorted(v, 0.975)});
    }
  return out;
}

}  // namespace mchmm
