#pragma once

// JSON run configuration with strict key checking, and JSON (de)serialization
// of model parameters and simulation specs. Indices in config files are 1-based.

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mchmm/bench.hpp"
#include "mchmm/gibbs.hpp"
#include "mchmm/io.hpp"
#include "mchmm/simulate.hpp"

namespace mchmm {

using json = nlohmann::ordered_json;

namespace detail {

/// Reads keys of one JSON object and rejects any key that was never asked for.
class StrictObject {
 public:
  StrictObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <class T>
  bool get(const std::string& key, T& out) {
    if (!j_.contains(key)) return false;
    seen_.insert(key);
    if (j_.at(key).is_null()) return false;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
    return true;
  }

  const json* sub(const std::string& key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + where_ + "." + it.key() + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows, const std::string& what) {
  if (rows.empty()) throw ConfigError(what + " is empty");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) throw ConfigError(what + " has ragged rows");
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

inline json from_matrix(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline std::vector<int> to_zero_based(const std::vector<int>& v, int upper, const std::string& what) {
  std::vector<int> out;
  for (int x : v) {
    if (x < 1 || x > upper) throw ConfigError(what + " entries must lie in 1.." + std::to_string(upper));
    out.push_back(x - 1);
  }
  return out;
}

inline std::vector<int> to_one_based(const std::vector<int>& v) {
  std::vector<int> out;
  for (int x : v) out.push_back(x + 1);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parameters

inline json params_to_json(const ModelParams& p) {
  json j;
  const int C = p.n_chains(), K = p.n_latent();
  std::vector<int> base;
  for (int c = 0; c < C; ++c) base.push_back(p.beta.baseline(c) + 1);
  j["baseline"] = base;
  j["eta"] = json::array();
  j["emission"] = json::array();
  j["intercept"] = json::array();
  for (int c = 0; c < C; ++c) {
    j["eta"].push_back(std::vector<double>(p.eta.probs[c].data(), p.eta.probs[c].data() + K));
    j["emission"].push_back(detail::from_matrix(p.eps.matrices[c]));
    j["intercept"].push_back(detail::from_matrix(p.beta.intercept(c)));
  }
  j["effects"] = json::array();
  for (int c = 0; c < C; ++c)
    for (int s = 0; s < C; ++s) {
      if (s == c) continue;
      for (int k = 0; k < K; ++k) {
        const Eigen::MatrixXd& e = p.beta.effect(c, s, k);
        if (p.beta.target(c).is_baseline(s, k) || e.cwiseAbs().maxCoeff() == 0.0) continue;
        j["effects"].push_back({{"target", c + 1}, {"source", s + 1}, {"state", k + 1}, {"matrix", detail::from_matrix(e)}});
      }
    }
  return j;
}

inline ModelParams params_from_json(const json& j, int C, int K, int L, const std::string& where) {
  detail::StrictObject o(j, where);
  std::vector<int> base;
  if (o.get("baseline", base)) {
    if (static_cast<int>(base.size()) != C) throw ConfigError(where + ".baseline needs one entry per chain");
    base = detail::to_zero_based(base, K, where + ".baseline");
  }
  ModelParams p = uniform_params(C, K, L, base);
  std::vector<std::vector<double>> eta;
  if (o.get("eta", eta)) {
    if (static_cast<int>(eta.size()) != C) throw ConfigError(where + ".eta needs one vector per chain");
    for (int c = 0; c < C; ++c) {
      if (static_cast<int>(eta[c].size()) != K) throw ConfigError(where + ".eta vectors need K entries");
      p.eta.probs[c] = Eigen::Map<const Eigen::VectorXd>(eta[c].data(), K);
    }
  }
  std::vector<std::vector<std::vector<double>>> mats;
  if (o.get("emission", mats)) {
    if (static_cast<int>(mats.size()) != C) throw ConfigError(where + ".emission needs one matrix per chain");
    for (int c = 0; c < C; ++c) p.eps.matrices[c] = detail::to_matrix(mats[c], where + ".emission");
  }
  if (o.get("intercept", mats)) {
    if (static_cast<int>(mats.size()) != C) throw ConfigError(where + ".intercept needs one matrix per chain");
    for (int c = 0; c < C; ++c) p.beta.target(c).set_intercept(detail::to_matrix(mats[c], where + ".intercept"));
  }
  if (const json* eff = o.sub("effects")) {
    if (!eff->is_array()) throw ConfigError(where + ".effects must be an array");
    for (std::size_t i = 0; i < eff->size(); ++i) {
      detail::StrictObject e((*eff)[i], where + ".effects[" + std::to_string(i) + "]");
      int t = 0, s = 0, k = 0;
      std::vector<std::vector<double>> m;
      if (!e.get("target", t) || !e.get("source", s) || !e.get("state", k) || !e.get("matrix", m))
        throw ConfigError(where + ".effects entries need target, source, state and matrix");
      e.finish();
      if (t < 1 || t > C || s < 1 || s > C || k < 1 || k > K || s == t)
        throw ConfigError(where + ".effects entry out of range");
      p.beta.target(t - 1).set_effect(s - 1, k - 1, detail::to_matrix(m, where + ".effects.matrix"));
    }
  }
  o.finish();
  try {
    p.validate(1e-9);
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return p;
}

// ---------------------------------------------------------------------------
// Run configuration

struct SimulateBlock {
  std::string preset;
  std::optional<int> n_steps, per_cluster, n_chains, n_latent, n_obs, n_individuals;
  std::optional<std::vector<int>> cluster_sizes;
  std::optional<std::vector<double>> proportions;
  std::optional<std::vector<int>> observed_steps;  // 1-based
  std::optional<double> mcar_rate;
  std::optional<json> clusters;
};

struct BenchBlock {
  std::vector<std::pair<int, int>> cells;  // (K, C); empty = Table-1 grid
  int T = 20, J = 100, P = 10, N = 20, repetitions = 3;
  std::vector<SamplerKind> samplers{SamplerKind::ffbs, SamplerKind::iffbs, SamplerKind::fffbs, SamplerKind::pf};
  BenchOptions options;
};

struct EvalBlock {
  std::vector<std::string> metrics{"accuracy", "predictive"};
  std::vector<std::string> monitored{"beta", "loglik"};
  int folds = 5;
  int n_reps = 100;
  int ll_replicates = 10;
  std::vector<int> accuracy_grid{5, 7, 10, 20, 50, 100};
  std::vector<SamplerKind> accuracy_samplers{SamplerKind::fffbs, SamplerKind::pf};
  int accuracy_per_cluster = 200;
};

struct RunConfig {
  std::string command;
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = machine parallelism
  std::string panel, output = "out", store, truth_labels, labels;
  int components = 1;
  std::optional<int> n_chains;  // checked against the panel when given
  int n_latent = 2;
  int n_obs = 2;
  SamplerOptions sampler;
  std::vector<int> baseline;  // 0-based, empty = all first state
  PriorSpec priors;
  int iterations = 20000, warmup = 10000, thin = 1, inner_mh = 1;
  double init_beta_sd = 0.1;
  SimulateBlock simulate;
  EvalBlock eval;
  BenchBlock bench;

  GibbsConfig gibbs() const {
    GibbsConfig g;
    g.components = components;
    g.sampler = sampler;
    g.iterations = iterations;
    g.warmup = warmup;
    g.thin = thin;
    g.seed = seed;
    g.inner_mh = inner_mh;
    g.prior = priors;
    g.baseline = baseline;
    g.init_beta_sd = init_beta_sd;
    g.threads = threads > 0 ? threads : hardware_threads();
    return g;
  }
};

inline std::vector<SamplerKind> parse_samplers(const std::vector<std::string>& v) {
  std::vector<SamplerKind> out;
  for (const auto& s : v) out.push_back(parse_sampler(s));
  return out;
}

inline std::vector<std::string> sampler_names(const std::vector<SamplerKind>& v) {
  std::vector<std::string> out;
  for (auto k : v) out.push_back(to_string(k));
  return out;
}

inline RunConfig parse_config(const json& root) {
  RunConfig cfg;
  detail::StrictObject o(root, "config");
  if (o.get("command", cfg.command) && cfg.command != "simulate" && cfg.command != "fit" &&
      cfg.command != "evaluate" && cfg.command != "benchmark")
    throw ConfigError("command must be simulate, fit, evaluate or benchmark");
  o.get("seed", cfg.seed);
  o.get("threads", cfg.threads);
  if (cfg.threads < 0) throw ConfigError("threads must be nonnegative (0 = machine parallelism)");

  if (const json* j = o.sub("paths")) {
    detail::StrictObject p(*j, "paths");
    p.get("panel", cfg.panel);
    p.get("output", cfg.output);
    p.get("store", cfg.store);
    p.get("truth_labels", cfg.truth_labels);
    p.get("labels", cfg.labels);
    p.finish();
  }
  if (const json* j = o.sub("model")) {
    detail::StrictObject m(*j, "model");
    m.get("components", cfg.components);
    int nc = 0;
    if (m.get("n_chains", nc)) cfg.n_chains = nc;
    m.get("n_latent", cfg.n_latent);
    m.get("n_obs", cfg.n_obs);
    std::string s;
    if (m.get("sampler", s)) cfg.sampler.kind = parse_sampler(s);
    m.get("particles", cfg.sampler.particles);
    m.get("ess_frac", cfg.sampler.ess_frac);
    m.get("joint_cap", cfg.sampler.joint_cap);
    m.get("random_scan", cfg.sampler.random_scan);
    std::vector<int> base;
    if (m.get("baseline", base)) cfg.baseline = detail::to_zero_based(base, cfg.n_latent, "model.baseline");
    if (const json* pj = m.sub("priors")) {
      detail::StrictObject pr(*pj, "model.priors");
      pr.get("intercept_sd", cfg.priors.intercept_sd);
      pr.get("global_scale", cfg.priors.global_scale);
      pr.get("learn_global_scale", cfg.priors.learn_global_scale);
      std::vector<std::vector<double>> ec;
      if (pr.get("emission_counts", ec)) cfg.priors.emission_counts = detail::to_matrix(ec, "model.priors.emission_counts");
      pr.get("eta_concentration", cfg.priors.eta_concentration);
      pr.get("gamma_concentration", cfg.priors.gamma_concentration);
      pr.finish();
    }
    m.finish();
    if (cfg.components < 1 || cfg.n_latent < 1 || cfg.n_obs < 1 || (cfg.n_chains && *cfg.n_chains < 1))
      throw ConfigError("model.components, n_chains, n_latent and n_obs must be positive");
    if (cfg.n_chains && !cfg.baseline.empty() && static_cast<int>(cfg.baseline.size()) != *cfg.n_chains)
      throw ConfigError("model.baseline needs one state per chain");
  }
  if (const json* j = o.sub("mcmc")) {
    detail::StrictObject m(*j, "mcmc");
    m.get("iterations", cfg.iterations);
    m.get("warmup", cfg.warmup);
    m.get("thin", cfg.thin);
    m.get("inner_mh", cfg.inner_mh);
    m.get("init_beta_sd", cfg.init_beta_sd);
    m.finish();
  }
  if (const json* j = o.sub("simulate")) {
    detail::StrictObject s(*j, "simulate");
    auto& b = cfg.simulate;
    s.get("preset", b.preset);
    int iv;
    if (s.get("n_steps", iv)) b.n_steps = iv;
    if (s.get("per_cluster", iv)) b.per_cluster = iv;
    if (s.get("n_chains", iv)) b.n_chains = iv;
    if (s.get("n_latent", iv)) b.n_latent = iv;
    if (s.get("n_obs", iv)) b.n_obs = iv;
    if (s.get("n_individuals", iv)) b.n_individuals = iv;
    std::vector<int> vi;
    if (s.get("cluster_sizes", vi)) b.cluster_sizes = vi;
    std::vector<double> vd;
    if (s.get("proportions", vd)) b.proportions = vd;
    if (s.get("observed_steps", vi)) b.observed_steps = vi;
    double dv;
    if (s.get("mcar_rate", dv)) b.mcar_rate = dv;
    if (const json* cl = s.sub("clusters")) b.clusters = *cl;
    s.finish();
  }
  if (const json* j = o.sub("eval")) {
    detail::StrictObject e(*j, "eval");
    e.get("metrics", cfg.eval.metrics);
    for (const auto& m : cfg.eval.metrics)
      if (m != "accuracy" && m != "cv" && m != "predictive" && m != "accuracy_vs_T")
        throw ConfigError("unknown eval metric '" + m + "' (expected accuracy, cv, predictive, accuracy_vs_T)");
    e.get("monitored", cfg.eval.monitored);
    for (const auto& m : cfg.eval.monitored)
      if (m != "beta" && m != "eta" && m != "eps" && m != "gamma" && m != "loglik")
        throw ConfigError("unknown monitored parameter '" + m + "' (expected beta, eta, eps, gamma, loglik)");
    e.get("folds", cfg.eval.folds);
    e.get("n_reps", cfg.eval.n_reps);
    e.get("ll_replicates", cfg.eval.ll_replicates);
    e.get("accuracy_grid", cfg.eval.accuracy_grid);
    std::vector<std::string> ss;
    if (e.get("accuracy_samplers", ss)) cfg.eval.accuracy_samplers = parse_samplers(ss);
    e.get("accuracy_per_cluster", cfg.eval.accuracy_per_cluster);
    e.finish();
  }
  if (const json* j = o.sub("bench")) {
    detail::StrictObject b(*j, "bench");
    auto& bb = cfg.bench;
    if (const json* cells = b.sub("cells")) {
      if (!cells->is_array()) throw ConfigError("bench.cells must be an array");
      for (std::size_t i = 0; i < cells->size(); ++i) {
        detail::StrictObject c((*cells)[i], "bench.cells[" + std::to_string(i) + "]");
        int K = 0, C = 0;
        if (!c.get("K", K) || !c.get("C", C)) throw ConfigError("bench.cells entries need K and C");
        c.finish();
        if (K < 1 || C < 1) throw ConfigError("bench cell K and C must be positive");
        bb.cells.emplace_back(K, C);
      }
    }
    b.get("T", bb.T);
    b.get("J", bb.J);
    b.get("P", bb.P);
    b.get("N", bb.N);
    b.get("repetitions", bb.repetitions);
    std::vector<std::string> ss;
    if (b.get("samplers", ss)) bb.samplers = parse_samplers(ss);
    b.get("joint_cap", bb.options.joint_cap);
    b.get("timeout_seconds", bb.options.timeout_seconds);
    b.get("kernel_only", bb.options.kernel_only);
    b.finish();
    if (bb.T < 1 || bb.J < 0 || bb.P < 1 || bb.N < 1 || bb.repetitions < 1)
      throw ConfigError("bench T, P, N and repetitions must be positive and J nonnegative");
  }
  o.finish();
  return cfg;
}

/// Full echo of the configuration, including every default.
inline json config_to_json(const RunConfig& c) {
  json j;
  j["command"] = c.command;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["paths"] = {{"panel", c.panel}, {"output", c.output}, {"store", c.store}, {"truth_labels", c.truth_labels},
                {"labels", c.labels}};
  json pri = {{"intercept_sd", c.priors.intercept_sd},
              {"global_scale", c.priors.global_scale},
              {"learn_global_scale", c.priors.learn_global_scale},
              {"emission_counts", detail::from_matrix(c.priors.emission_prior(c.n_latent, c.n_obs))},
              {"eta_concentration", c.priors.eta_concentration},
              {"gamma_concentration", c.priors.gamma_concentration}};
  json model = {{"components", c.components},
                {"n_chains", c.n_chains ? json(*c.n_chains) : json(nullptr)},
                {"n_latent", c.n_latent},
                {"n_obs", c.n_obs},
                {"sampler", to_string(c.sampler.kind)},
                {"particles", c.sampler.particles},
                {"ess_frac", c.sampler.ess_frac},
                {"joint_cap", c.sampler.joint_cap},
                {"random_scan", c.sampler.random_scan}};
  if (!c.baseline.empty()) model["baseline"] = detail::to_one_based(c.baseline);
  model["priors"] = pri;
  j["model"] = model;
  j["mcmc"] = {{"iterations", c.iterations}, {"warmup", c.warmup}, {"thin", c.thin}, {"inner_mh", c.inner_mh},
               {"init_beta_sd", c.init_beta_sd}};
  json sim = json::object();
  const auto& s = c.simulate;
  if (!s.preset.empty()) sim["preset"] = s.preset;
  if (s.n_steps) sim["n_steps"] = *s.n_steps;
  if (s.per_cluster) sim["per_cluster"] = *s.per_cluster;
  if (s.n_chains) sim["n_chains"] = *s.n_chains;
  if (s.n_latent) sim["n_latent"] = *s.n_latent;
  if (s.n_obs) sim["n_obs"] = *s.n_obs;
  if (s.n_individuals) sim["n_individuals"] = *s.n_individuals;
  if (s.cluster_sizes) sim["cluster_sizes"] = *s.cluster_sizes;
  if (s.proportions) sim["proportions"] = *s.proportions;
  if (s.observed_steps) sim["observed_steps"] = *s.observed_steps;
  if (s.mcar_rate) sim["mcar_rate"] = *s.mcar_rate;
  if (s.clusters) sim["clusters"] = *s.clusters;
  j["simulate"] = sim;
  j["eval"] = {{"metrics", c.eval.metrics},
               {"monitored", c.eval.monitored},
               {"folds", c.eval.folds},
               {"n_reps", c.eval.n_reps},
               {"ll_replicates", c.eval.ll_replicates},
               {"accuracy_grid", c.eval.accuracy_grid},
               {"accuracy_samplers", sampler_names(c.eval.accuracy_samplers)},
               {"accuracy_per_cluster", c.eval.accuracy_per_cluster}};
  json cells = json::array();
  for (auto [K, C] : c.bench.cells) cells.push_back({{"K", K}, {"C", C}});
  j["bench"] = {{"cells", cells},
                {"T", c.bench.T},
                {"J", c.bench.J},
                {"P", c.bench.P},
                {"N", c.bench.N},
                {"repetitions", c.bench.repetitions},
                {"samplers", sampler_names(c.bench.samplers)},
                {"joint_cap", c.bench.options.joint_cap},
                {"timeout_seconds", c.bench.options.timeout_seconds},
                {"kernel_only", c.bench.options.kernel_only}};
  return j;
}

/// Parses a config file; a run manifest is accepted too and yields its echoed config.
inline RunConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (j.is_object() && j.contains("manifest_version") && j.contains("config")) return parse_config(j.at("config"));
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Simulation specs

inline SimSpec resolve_sim_spec(const SimulateBlock& b) {
  SimSpec s;
  if (!b.preset.empty()) {
    const int per = b.per_cluster.value_or(1000);
    if (b.preset == "ss1")
      s = preset::ss1(b.n_steps.value_or(20), per);
    else if (b.preset == "ss2")
      s = preset::ss2(per);
    else if (b.preset == "clear-like")
      s = preset::clear_like(per);
    else
      s = preset::by_name(b.preset);
    if (b.n_steps) {
      s.dims.n_steps = *b.n_steps;
      s.observed_steps.erase(std::remove_if(s.observed_steps.begin(), s.observed_steps.end(),
                                            [&](int t) { return t >= *b.n_steps; }),
                             s.observed_steps.end());
    }
  } else if (!b.clusters) {
    throw ConfigError("simulate needs a preset or explicit clusters");
  }
  if (b.n_chains) s.dims.n_chains = *b.n_chains;
  if (b.n_latent) s.dims.n_latent = *b.n_latent;
  if (b.n_obs) s.dims.n_obs = *b.n_obs;
  if (b.n_steps) s.dims.n_steps = *b.n_steps;
  if (b.clusters) {
    if (!b.clusters->is_array() || b.clusters->empty()) throw ConfigError("simulate.clusters must be a non-empty array");
    s.clusters.clear();
    for (std::size_t i = 0; i < b.clusters->size(); ++i)
      s.clusters.push_back(params_from_json((*b.clusters)[i], s.dims.n_chains, s.dims.n_latent, s.dims.n_obs,
                                            "simulate.clusters[" + std::to_string(i) + "]"));
    if (!b.cluster_sizes && !b.proportions && s.cluster_sizes.size() != s.clusters.size()) {
      s.cluster_sizes.clear();
      s.proportions = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(s.clusters.size()), 1.0 / s.clusters.size());
    }
  }
  if (b.cluster_sizes) {
    s.cluster_sizes = *b.cluster_sizes;
    s.dims.n_individuals = 0;
    for (int n : s.cluster_sizes) s.dims.n_individuals += n;
  } else if (b.per_cluster && b.preset.empty()) {
    s.cluster_sizes.assign(s.clusters.size(), *b.per_cluster);
    s.dims.n_individuals = *b.per_cluster * static_cast<int>(s.clusters.size());
  }
  if (b.proportions) {
    s.cluster_sizes.clear();
    s.proportions = Eigen::Map<const Eigen::VectorXd>(b.proportions->data(), static_cast<Eigen::Index>(b.proportions->size()));
  }
  if (b.n_individuals) {
    if (!s.cluster_sizes.empty() && !b.cluster_sizes) {
      s.cluster_sizes.clear();
      s.proportions = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(s.clusters.size()), 1.0 / s.clusters.size());
    }
    s.dims.n_individuals = *b.n_individuals;
  }
  if (b.observed_steps) s.observed_steps = detail::to_zero_based(*b.observed_steps, s.dims.n_steps, "simulate.observed_steps");
  if (b.mcar_rate) s.mcar_rate = *b.mcar_rate;
  s.validate();
  return s;
}

inline json sim_spec_to_json(const SimSpec& s) {
  json j;
  j["n_chains"] = s.dims.n_chains;
  j["n_latent"] = s.dims.n_latent;
  j["n_obs"] = s.dims.n_obs;
  j["n_steps"] = s.dims.n_steps;
  j["n_individuals"] = s.dims.n_individuals;
  if (!s.cluster_sizes.empty())
    j["cluster_sizes"] = s.cluster_sizes;
  else
    j["proportions"] = std::vector<double>(s.proportions.data(), s.proportions.data() + s.proportions.size());
  if (!s.observed_steps.empty()) j["observed_steps"] = detail::to_one_based(s.observed_steps);
  j["mcar_rate"] = s.mcar_rate;
  j["clusters"] = json::array();
  for (const auto& p : s.clusters) j["clusters"].push_back(params_to_json(p));
  return j;
}

}  // namespace mchmm
