#pragma once

// MH-within-Gibbs for a single CHMM (M = 1) or a mixture of CHMMs (M > 1).
//
// One iteration:
//   1. per component m and chain c: eta^c, beta^c (adaptive MH, then the
//      horseshoe scales), eps^c, each given the latent paths of the
//      individuals currently labelled m;
//   2. per individual: forward pass under every component, label draw from
//      gamma_m * L(x_n | theta_m), backward draw of the latent path under the
//      chosen component (M = 1 skips the label step);
//   3. gamma given the labels.
// gamma does not enter steps 1-2, so this ordering samples the same
// conditionals as updating gamma before the latent paths.

#include <functional>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "mchmm/conjugate.hpp"
#include "mchmm/mh.hpp"
#include "mchmm/mixture.hpp"
#include "mchmm/parallel.hpp"
#include "mchmm/params.hpp"
#include "mchmm/sampler.hpp"

namespace mchmm {

struct GibbsConfig {
  int components = 1;
  SamplerOptions sampler;
  int iterations = 20000;
  int warmup = 10000;
  int thin = 1;
  std::uint64_t seed = 1;
  int inner_mh = 1;
  PriorSpec prior;
  MhOptions mh;
  std::vector<int> baseline;  // per chain, empty means state 0 everywhere
  double init_beta_sd = 0.1;
  bool kernel_only = false;   // skip parameter updates (profiling)
  bool store_draws = true;
  int threads = 1;

  void validate() const {
    if (components < 1) throw ConfigError("number of mixture components must be at least 1");
    if (iterations < 0 || warmup < 0) throw ConfigError("iterations and warm-up must be nonnegative");
    if (thin < 1) throw ConfigError("thin must be at least 1");
    if (inner_mh < 1) throw ConfigError("inner MH repeats must be at least 1");
    if (sampler.particles < 1) throw ConfigError("particle count must be at least 1");
    if (!(sampler.ess_frac > 0.0 && sampler.ess_frac <= 1.0)) throw ConfigError("ess_frac must lie in (0, 1]");
    if (components > 1 && !has_likelihood(sampler.kind))
      throw CapabilityError("iffbs cannot drive mixture label updates (M > 1); use ffbs, fffbs or pf");
    prior.validate();
  }
};

struct MixtureState {
  std::vector<ModelParams> components;
  Eigen::VectorXd gamma;
  std::vector<int> z;
  LatentPaths paths;
  Eigen::MatrixXd log_lik;               // N x M component log-likelihoods of the last label step
  std::vector<double> individual_log_lik;  // under the individual's component
  std::vector<HorseshoeState> horseshoe;   // m*C + c
  std::vector<MhAdaptState> adapt;         // m*C + c

  int n_components() const { return static_cast<int>(components.size()); }
};

struct Draw {
  int iteration = 0;
  std::vector<ModelParams> components;
  Eigen::VectorXd gamma;
  std::vector<int> z;
  std::vector<double> log_lik;
};

struct SampleStore {
  Dims dims{};
  int n_components = 1;
  int warmup = 0;
  std::vector<Draw> draws;  // iteration 0 is the initialization record
  Eigen::MatrixXd acceptance;  // M x C post-warm-up MH acceptance rates
  Eigen::MatrixXd final_psi;   // M x C

  /// Draws after warm-up (excluding the initialization record).
  std::vector<const Draw*> posterior() const {
    std::vector<const Draw*> out;
    for (const auto& d : draws)
      if (d.iteration > 0 && d.iteration > warmup) out.push_back(&d);
    return out;
  }
};

using GibbsObserver = std::function<void(int iteration, const MixtureState&)>;

namespace detail {

inline std::vector<std::vector<int>> members(const std::vector<int>& z, int n_components) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(n_components));
  for (int n = 0; n < static_cast<int>(z.size()); ++n) out[static_cast<std::size_t>(z[n])].push_back(n);
  return out;
}

inline ModelParams initial_component(const Dims& d, const GibbsConfig& cfg, Rng& rng) {
  ModelParams p = uniform_params(d.n_chains, d.n_latent, d.n_obs, cfg.baseline);
  const Eigen::MatrixXd ep = cfg.prior.emission_prior(d.n_latent, d.n_obs);
  for (int c = 0; c < d.n_chains; ++c) {
    p.eta.probs[c] = dirichlet_draw(Eigen::VectorXd::Constant(d.n_latent, cfg.prior.eta_concentration), rng);
    for (int k = 0; k < d.n_latent; ++k)
      p.eps.matrices[c].row(k) = dirichlet_draw(ep.row(k).transpose(), rng).transpose();
    auto& tc = p.beta.target(c);
    Eigen::VectorXd v(static_cast<Eigen::Index>(tc.free_dim()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = cfg.init_beta_sd * std_normal(rng);
    tc.set_free(v);
  }
  return p;
}

inline Draw snapshot(int iteration, const MixtureState& s) {
  return Draw{iteration, s.components, s.gamma, s.z, s.individual_log_lik};
}

}  // namespace detail

inline MixtureState initialize_mixture(const ObservationPanel& obs, const GibbsConfig& cfg) {
  const Dims& d = obs.dims();
  const int M = cfg.components;
  const int C = d.n_chains;
  MixtureState s;
  Rng rng = make_stream(cfg.seed, {stream::kInit});
  for (int m = 0; m < M; ++m) s.components.push_back(detail::initial_component(d, cfg, rng));
  s.gamma = Eigen::VectorXd::Constant(M, 1.0 / M);
  s.z.resize(static_cast<std::size_t>(d.n_individuals));
  for (int& z : s.z) z = M == 1 ? 0 : static_cast<int>(uniform01(rng) * M);
  for (int m = 0; m < M; ++m)
    for (int c = 0; c < C; ++c) {
      const auto& tc = s.components[m].beta.target(c);
      s.horseshoe.emplace_back(tc.free_dim() - tc.intercept_dim(), cfg.prior.global_scale,
                               cfg.prior.learn_global_scale);
      s.adapt.emplace_back(tc.free_dim(), cfg.mh);
    }

  SamplerOptions init_opt = cfg.sampler;
  if (init_opt.kind == SamplerKind::iffbs) init_opt.kind = SamplerKind::fffbs;
  std::vector<ComponentSampler> samplers;
  for (const auto& p : s.components) samplers.emplace_back(p, init_opt);
  s.paths = LatentPaths(d);
  s.log_lik = Eigen::MatrixXd::Zero(d.n_individuals, M);
  s.individual_log_lik.assign(static_cast<std::size_t>(d.n_individuals), 0.0);
  std::vector<StateGrid> drawn(static_cast<std::size_t>(d.n_individuals));
  parallel_for(d.n_individuals, cfg.threads, [&](int n) {
    Rng r = make_stream(cfg.seed, {stream::kInit, 1, static_cast<std::uint64_t>(n)});
    auto res = samplers[static_cast<std::size_t>(s.z[n])].draw(obs.individual(n), nullptr, r);
    drawn[n] = std::move(res.path);
    s.individual_log_lik[n] = res.log_lik;
  });
  for (int n = 0; n < d.n_individuals; ++n) s.paths.set_path(n, drawn[n]);
  return s;
}

/// Step 1: parameter updates for every (component, chain).
inline void update_parameters(MixtureState& s, const ObservationPanel& obs, const GibbsConfig& cfg, int iteration) {
  const int M = s.n_components();
  const int C = obs.dims().n_chains;
  const auto groups = detail::members(s.z, M);
  const int half = cfg.warmup / 2;
  for (int m = 0; m < M; ++m) {
    const auto& idx = groups[static_cast<std::size_t>(m)];
    const TransitionStats stats = transition_stats(s.paths, idx);
    ModelParams& p = s.components[static_cast<std::size_t>(m)];
    for (int c = 0; c < C; ++c) {
      Rng rng = make_stream(cfg.seed, {stream::kParams, static_cast<std::uint64_t>(iteration),
                                       static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(c)});
      const std::size_t mc = static_cast<std::size_t>(m) * C + c;
      p.eta.probs[c] = update_eta_chain(s.paths, idx, c, cfg.prior, rng);

      auto& tc = p.beta.target(c);
      MhAdaptState& ad = s.adapt[mc];
      if (iteration > cfg.warmup && ad.adapting()) ad.freeze();
      mh_update_beta(tc, stats, ad, s.horseshoe[mc], cfg.prior.intercept_sd, rng, cfg.inner_mh);
      if (iteration == half / 2 && ad.adapting()) ad.restart_collection();
      if (iteration == half && ad.adapting()) ad.switch_to_covariance();
      const Eigen::Index idim = static_cast<Eigen::Index>(tc.intercept_dim());
      update_local_scales(s.horseshoe[mc], tc.free().tail(tc.free().size() - idim), rng);

      p.eps.matrices[c] = update_eps_chain(s.paths, obs, idx, c, cfg.prior, rng);
    }
  }
}

/// Step 2: labels (M > 1) and latent paths for every individual.
inline void update_latent(MixtureState& s, const ObservationPanel& obs, const GibbsConfig& cfg, int iteration) {
  const int M = s.n_components();
  const int N = obs.dims().n_individuals;
  std::vector<ComponentSampler> samplers;
  samplers.reserve(static_cast<std::size_t>(M));
  for (const auto& p : s.components) samplers.emplace_back(p, cfg.sampler);
  std::vector<StateGrid> drawn(static_cast<std::size_t>(N));
  parallel_for(N, cfg.threads, [&](int n) {
    Rng rng = make_stream(cfg.seed, {stream::kLatent, static_cast<std::uint64_t>(iteration),
                                     static_cast<std::uint64_t>(n)});
    const GridView x = obs.individual(n);
    if (M == 1) {
      const StateGrid cur = s.paths.path(n);
      auto res = samplers[0].draw(x, &cur, rng);
      s.log_lik(n, 0) = res.log_lik;
      s.individual_log_lik[n] = res.log_lik;
      drawn[n] = std::move(res.path);
      return;
    }
    std::vector<ForwardState> fw;
    fw.reserve(static_cast<std::size_t>(M));
    std::vector<double> ll(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) {
      fw.push_back(samplers[m].forward(x, rng));
      ll[m] = fw.back().log_lik;
      s.log_lik(n, m) = ll[m];
    }
    const int zn = draw_label(ll, s.gamma, rng);
    s.z[n] = zn;
    s.individual_log_lik[n] = ll[zn];
    drawn[n] = samplers[zn].backward(fw[zn], rng).path;
  });
  for (int n = 0; n < N; ++n) s.paths.set_path(n, drawn[n]);
}

inline SampleStore run_gibbs(const ObservationPanel& obs, const GibbsConfig& cfg, const GibbsObserver& observer = {}) {
  cfg.validate();
  const Dims& d = obs.dims();
  if (!cfg.baseline.empty() && static_cast<int>(cfg.baseline.size()) != d.n_chains)
    throw ConfigError("baseline needs one state per chain");
  if (cfg.sampler.kind == SamplerKind::ffbs) joint_state_count(d.n_latent, d.n_chains, cfg.sampler.joint_cap);

  MixtureState s = initialize_mixture(obs, cfg);
  SampleStore store;
  store.dims = d;
  store.n_components = cfg.components;
  store.warmup = cfg.warmup;
  if (cfg.store_draws) store.draws.push_back(detail::snapshot(0, s));
  if (observer) observer(0, s);

  for (int j = 1; j <= cfg.iterations; ++j) {
    if (!cfg.kernel_only) update_parameters(s, obs, cfg, j);
    update_latent(s, obs, cfg, j);
    if (cfg.components > 1) {
      Rng rng = make_stream(cfg.seed, {stream::kLabels, static_cast<std::uint64_t>(j)});
      s.gamma = update_gamma(s.z, cfg.components, cfg.prior, rng);
    }
    for (const auto& p : s.components) p.validate(1e-9);
    if (cfg.store_draws && j > cfg.warmup && (j - cfg.warmup) % cfg.thin == 0)
      store.draws.push_back(detail::snapshot(j, s));
    if (observer) observer(j, s);
  }

  const int C = d.n_chains;
  store.acceptance.resize(cfg.components, C);
  store.final_psi.resize(cfg.components, C);
  for (int m = 0; m < cfg.components; ++m)
    for (int c = 0; c < C; ++c) {
      const auto& ad = s.adapt[static_cast<std::size_t>(m) * C + c];
      store.acceptance(m, c) = ad.acceptance_rate();
      store.final_psi(m, c) = ad.psi();
    }
  return store;
}

}  // namespace mchmm
