#pragma once

// The four CLI commands. Each writes its outputs plus manifest.json into the
// configured output directory.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "mchmm/bench.hpp"
#include "mchmm/config.hpp"
#include "mchmm/diagnostics.hpp"
#include "mchmm/gibbs.hpp"
#include "mchmm/io.hpp"
#include "mchmm/particle.hpp"
#include "mchmm/simulate.hpp"

namespace mchmm {

inline constexpr int kManifestVersion = 1;

namespace detail {

inline fs::path prepare_output(const RunConfig& cfg) {
  const fs::path dir(cfg.output);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  return dir;
}

inline fs::path require_file(const std::string& path, const std::string& key) {
  if (path.empty()) throw ConfigError(key + " is required for this command");
  if (!fs::is_regular_file(path)) throw IoError(key + ": no such file " + path);
  return fs::path(path);
}

inline json dims_json(const Dims& d) {
  return {{"n_chains", d.n_chains}, {"n_latent", d.n_latent}, {"n_obs", d.n_obs}, {"n_steps", d.n_steps},
          {"n_individuals", d.n_individuals}};
}

inline void write_manifest(const fs::path& dir, const RunConfig& cfg, const json& inputs, const json& extra,
                           const std::vector<std::string>& outputs, double wall_time) {
  json m;
  m["manifest_version"] = kManifestVersion;
  m["command"] = cfg.command;
  m["seed"] = cfg.seed;
  m["config"] = config_to_json(cfg);
  m["inputs"] = inputs;
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  m["outputs"] = outputs;
  m["wall_time_seconds"] = wall_time;
  auto out = open_out(dir / "manifest.json");
  out << m.dump(2) << '\n';
}

inline json input_entry(const fs::path& p) {
  return {{"path", p.string()}, {"hash", git_blob_hash(read_file(p))}};
}

inline ObservationPanel load_panel(const RunConfig& cfg) {
  const fs::path path = require_file(cfg.panel, "paths.panel");
  ObservationPanel panel = read_panel(path, cfg.n_latent, cfg.n_obs);
  if (cfg.n_chains && *cfg.n_chains != panel.dims().n_chains)
    throw ConfigError("model.n_chains = " + std::to_string(*cfg.n_chains) + " but the panel has " +
                      std::to_string(panel.dims().n_chains) + " chains");
  return panel;
}

/// Loads a store written by cmd_fit, taking dims and run settings from the
/// manifest beside it.
inline SampleStore load_store(const RunConfig& cfg) {
  const fs::path path = require_file(cfg.store, "paths.store");
  const fs::path mpath = path.parent_path() / "manifest.json";
  if (!fs::is_regular_file(mpath)) throw IoError("no manifest.json next to store " + path.string());
  json m;
  try {
    m = json::parse(read_file(mpath));
    const json& d = m.at("dims");
    Dims dims{d.at("n_chains").get<int>(), d.at("n_latent").get<int>(), d.at("n_obs").get<int>(),
              d.at("n_steps").get<int>(), d.at("n_individuals").get<int>()};
    const RunConfig fit = parse_config(m.at("config"));
    std::vector<int> baseline = fit.baseline;
    return read_store(path, dims, fit.components, fit.warmup, baseline);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(mpath.string() + ": malformed manifest (" + e.what() + ")");
  }
}

inline std::string opt_num(double v) { return std::isnan(v) ? std::string() : fmt(v); }

struct MonitoredSeries {
  int component;  // -1 when not per component
  std::string param;
  std::vector<int> idx;  // 1-based, up to 5 entries
  std::vector<double> values;
};

inline std::vector<MonitoredSeries> monitored_series(const SampleStore& store, const std::vector<std::string>& which) {
  const auto draws = store.posterior();
  std::vector<MonitoredSeries> out;
  if (draws.empty()) return out;
  auto want = [&](const char* s) { return std::find(which.begin(), which.end(), s) != which.end(); };
  const ModelParams& first = draws.front()->components.front();
  const int C = first.n_chains(), K = first.n_latent(), L = first.n_obs();
  auto collect = [&](int m, std::string param, std::vector<int> idx, auto getter) {
    MonitoredSeries s{m, std::move(param), std::move(idx), {}};
    for (const Draw* d : draws) s.values.push_back(getter(*d));
    out.push_back(std::move(s));
  };
  for (int m = 0; m < store.n_components; ++m) {
    for (int c = 0; c < C; ++c) {
      if (want("eta"))
        for (int k = 0; k < K; ++k)
          collect(m, "eta", {c + 1, k + 1}, [=](const Draw& d) { return d.components[m].eta.probs[c][k]; });
      if (want("eps"))
        for (int k = 0; k < K; ++k)
          for (int l = 0; l < L; ++l)
            collect(m, "eps", {c + 1, k + 1, l + 1},
                    [=](const Draw& d) { return d.components[m].eps.matrices[c](k, l); });
      if (want("beta")) {
        const auto& tc = first.beta.target(c);
        for (std::size_t i = 0; i < tc.free_dim(); ++i) {
          const CoeffSlot slot = tc.describe(i);
          collect(m, "beta", {c + 1, slot.source + 1, slot.source_state + 1, slot.row + 1, slot.col + 1},
                  [=](const Draw& d) { return d.components[m].beta.target(c).free()[static_cast<Eigen::Index>(i)]; });
        }
      }
    }
    if (want("gamma") && store.n_components > 1)
      collect(m, "gamma", {}, [=](const Draw& d) { return d.gamma[m]; });
  }
  if (want("loglik"))
    collect(-1, "loglik", {}, [](const Draw& d) { return std::accumulate(d.log_lik.begin(), d.log_lik.end(), 0.0); });
  return out;
}

inline void write_summary(const fs::path& path, const std::vector<MonitoredSeries>& series) {
  auto out = open_out(path);
  out << "component,param,i1,i2,i3,i4,i5,mean,sd,ess\n";
  for (const auto& s : series) {
    const double n = static_cast<double>(s.values.size());
    const double mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : s.values) ss += (v - mean) * (v - mean);
    const double sd = s.values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : std::nan("");
    const double e = s.values.size() >= 10 ? ess(s.values).ess : std::nan("");
    if (s.component >= 0) out << s.component + 1;
    out << ',' << s.param;
    for (std::size_t i = 0; i < 5; ++i) {
      out << ',';
      if (i < s.idx.size()) out << s.idx[i];
    }
    out << ',' << fmt(mean) << ',' << opt_num(sd) << ',' << opt_num(e) << '\n';
  }
}

inline void write_acceptance(const fs::path& path, const SampleStore& store) {
  auto out = open_out(path);
  out << "component,chain,acceptance_rate,psi\n";
  for (Eigen::Index m = 0; m < store.acceptance.rows(); ++m)
    for (Eigen::Index c = 0; c < store.acceptance.cols(); ++c)
      out << m + 1 << ',' << c + 1 << ',' << opt_num(store.acceptance(m, c)) << ',' << fmt(store.final_psi(m, c))
          << '\n';
}

inline GibbsObserver progress_log(std::ostream* log, int iterations) {
  if (!log) return {};
  const int every = std::max(1, iterations / 10);
  return [log, every, iterations](int j, const MixtureState&) {
    if (j > 0 && (j % every == 0 || j == iterations)) *log << "iteration " << j << "/" << iterations << '\n';
  };
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline void cmd_simulate(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const SimSpec spec = resolve_sim_spec(cfg.simulate);
  const fs::path dir = detail::prepare_output(cfg);
  const SimResult res = simulate(spec, cfg.seed);
  write_panel(dir / "panel.csv", res.panel);
  write_latent(dir / "latent.csv", res.latent);
  write_labels(dir / "labels.csv", res.labels);
  {
    auto out = open_out(dir / "spec.json");
    out << sim_spec_to_json(spec).dump(2) << '\n';
  }
  detail::write_manifest(dir, cfg, json::object(), {{"dims", detail::dims_json(spec.dims)}},
                         {"panel.csv", "latent.csv", "labels.csv", "spec.json"}, detail::seconds_since(t0));
}

inline SampleStore cmd_fit(const RunConfig& cfg, std::ostream* log = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  const ObservationPanel panel = detail::load_panel(cfg);
  const GibbsConfig g = cfg.gibbs();
  g.validate();
  const fs::path dir = detail::prepare_output(cfg);
  const SampleStore store = run_gibbs(panel, g, detail::progress_log(log, g.iterations));
  std::vector<std::string> outputs{"samples.csv", "summary.csv", "acceptance.csv"};
  write_store(dir / "samples.csv", store);
  detail::write_summary(dir / "summary.csv", detail::monitored_series(store, cfg.eval.monitored));
  detail::write_acceptance(dir / "acceptance.csv", store);

  const auto post = store.posterior();
  if (!post.empty() && cfg.components > 1) {
    write_labels(dir / "labels.csv", posterior_mode_labels(store));
    outputs.push_back("labels.csv");
  }
  if (cfg.sampler.kind == SamplerKind::pf && !store.draws.empty()) {
    // particle ESS per step under the posterior mean (or the last stored draw)
    std::vector<ModelParams> comps;
    std::vector<int> z;
    if (!post.empty()) {
      comps = posterior_mean(store).components;
      z = cfg.components > 1 ? posterior_mode_labels(store) : std::vector<int>(post.back()->z);
    } else {
      comps = store.draws.back().components;
      z = store.draws.back().z;
    }
    auto out = open_out(dir / "ess_trace.csv");
    for (int n = 0; n < panel.dims().n_individuals; ++n) {
      Rng rng = make_stream(cfg.seed, {stream::kDiagnostics, static_cast<std::uint64_t>(n)});
      const ParticleSet ps = pf_run(comps[static_cast<std::size_t>(z[n])], panel.individual(n), cfg.sampler.particles,
                                    cfg.sampler.ess_frac, rng);
      write_ess_trace(out, n, ps.diagnostics, n == 0);
    }
    outputs.push_back("ess_trace.csv");
  }
  json inputs;
  inputs["panel"] = detail::input_entry(cfg.panel);
  detail::write_manifest(dir, cfg, inputs, {{"dims", detail::dims_json(panel.dims())}}, outputs,
                         detail::seconds_since(t0));
  return store;
}

inline void cmd_evaluate(const RunConfig& cfg, std::ostream* log = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& ev = cfg.eval;
  if (ev.metrics.empty()) throw ConfigError("eval.metrics is empty");
  auto wants = [&](const char* m) { return std::find(ev.metrics.begin(), ev.metrics.end(), m) != ev.metrics.end(); };

  // Validate every input before doing any work.
  const bool need_store = (wants("accuracy") && cfg.labels.empty()) || wants("predictive");
  if (wants("accuracy")) detail::require_file(cfg.truth_labels, "paths.truth_labels (accuracy needs true labels)");
  if (need_store) detail::require_file(cfg.store, "paths.store");
  if (wants("predictive") || wants("cv")) detail::require_file(cfg.panel, "paths.panel");
  if (!cfg.labels.empty()) detail::require_file(cfg.labels, "paths.labels");

  std::optional<SampleStore> store;
  if (need_store) {
    store = detail::load_store(cfg);
    if (store->posterior().empty()) throw ConfigError("sample store " + cfg.store + " has no post-warm-up draws");
  }
  std::optional<ObservationPanel> panel;
  if (wants("predictive") || wants("cv")) panel = detail::load_panel(cfg);

  const fs::path dir = detail::prepare_output(cfg);
  json inputs = json::object();
  json report = json::object();
  std::vector<std::string> outputs;

  if (wants("accuracy")) {
    const std::vector<int> truth = read_labels(cfg.truth_labels);
    inputs["truth_labels"] = detail::input_entry(cfg.truth_labels);
    std::vector<int> est;
    if (!cfg.labels.empty()) {
      est = read_labels(cfg.labels);
      inputs["labels"] = detail::input_entry(cfg.labels);
    } else {
      est = posterior_mode_labels(*store);
    }
    const int M = store ? store->n_components : 1;
    const double acc = clustering_accuracy(est, truth, M);
    auto out = open_out(dir / "accuracy.csv");
    out << "n_individuals,accuracy\n" << truth.size() << ',' << fmt(acc) << '\n';
    report["accuracy"] = acc;
    outputs.push_back("accuracy.csv");
  }
  if (store) inputs["store"] = detail::input_entry(cfg.store);
  if (panel) inputs["panel"] = detail::input_entry(cfg.panel);

  if (wants("predictive")) {
    if (store->dims.n_chains != panel->dims().n_chains || store->dims.n_steps != panel->dims().n_steps ||
        store->dims.n_individuals != panel->dims().n_individuals)
      throw DimensionError("panel does not match the fitted store");
    write_predictive(dir / "predictive.csv", posterior_predictive(*panel, *store, ev.n_reps, cfg.seed));
    outputs.push_back("predictive.csv");
  }
  if (wants("cv")) {
    GibbsConfig g = cfg.gibbs();
    g.validate();
    if (log) *log << "cv: " << ev.folds << " folds, M = " << g.components << '\n';
    const CvResult cv = cv_nll(*panel, g, ev.folds, ev.ll_replicates);
    auto out = open_out(dir / "cv.csv");
    out << "fold,n_test,nll\n";
    for (std::size_t f = 0; f < cv.fold_nll.size(); ++f)
      out << f + 1 << ',' << cv.folds[f].size() << ',' << fmt(cv.fold_nll[f]) << '\n';
    report["cv_nll_mean"] = cv.mean();
    report["cv_nll_sd"] = cv.sd();
    outputs.push_back("cv.csv");
  }
  if (wants("accuracy_vs_T")) {
    auto out = open_out(dir / "accuracy_vs_T.csv");
    out << "T,sampler,accuracy\n";
    for (int T : ev.accuracy_grid) {
      const SimSpec spec = preset::ss1(T, ev.accuracy_per_cluster);
      const SimResult data = simulate(spec, cfg.seed);
      for (SamplerKind kind : ev.accuracy_samplers) {
        GibbsConfig g = cfg.gibbs();
        g.components = 2;
        g.sampler.kind = kind;
        g.validate();
        if (kind == SamplerKind::ffbs) joint_state_count(2, spec.dims.n_chains, g.sampler.joint_cap);
        if (log) *log << "accuracy_vs_T: T = " << T << ", " << to_string(kind) << '\n';
        const SampleStore s = run_gibbs(data.panel, g);
        const double acc = clustering_accuracy(posterior_mode_labels(s), data.labels, 2);
        out << T << ',' << to_string(kind) << ',' << fmt(acc) << '\n';
      }
    }
    outputs.push_back("accuracy_vs_T.csv");
  }
  {
    auto out = open_out(dir / "report.json");
    out << report.dump(2) << '\n';
  }
  outputs.push_back("report.json");
  detail::write_manifest(dir, cfg, inputs, json::object(), outputs, detail::seconds_since(t0));
}

inline std::vector<BenchRow> cmd_benchmark(const RunConfig& cfg, std::ostream* log = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& b = cfg.bench;
  std::vector<std::pair<int, int>> cells = b.cells;
  if (cells.empty())
    for (const BenchCase& c : default_bench_grid()) cells.emplace_back(c.K, c.C);
  std::vector<BenchCase> cases;
  for (auto [K, C] : cells) {
    BenchCase bc;
    bc.K = K;
    bc.C = C;
    bc.T = b.T;
    bc.J = b.J;
    bc.P = b.P;
    bc.N = b.N;
    bc.repetitions = b.repetitions;
    bc.samplers = b.samplers;
    bc.seed = cfg.seed;
    cases.push_back(bc);
  }
  BenchOptions opt = b.options;
  opt.threads = cfg.threads > 0 ? cfg.threads : 1;
  const fs::path dir = detail::prepare_output(cfg);
  const auto rows = run_bench(cases, opt, log);
  {
    auto out = open_out(dir / "bench.csv");
    write_bench_csv(out, rows);
  }
  {
    auto out = open_out(dir / "table.txt");
    out << render_bench_table(rows);
  }
  detail::write_manifest(dir, cfg, json::object(), json::object(), {"bench.csv", "table.txt"},
                         detail::seconds_since(t0));
  return rows;
}

}  // namespace mchmm
