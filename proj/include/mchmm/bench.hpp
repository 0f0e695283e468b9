#pragma once

// Runtime harness: full Gibbs runs on freshly simulated data for a grid of
// (K, C) cells and every sampler, with medians over repetitions.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mchmm/diagnostics.hpp"
#include "mchmm/gibbs.hpp"
#include "mchmm/simulate.hpp"

namespace mchmm {

struct BenchCase {
  int K = 2;
  int C = 4;
  int T = 20;
  int J = 100;
  int P = 10;
  int N = 20;
  int repetitions = 3;
  std::vector<SamplerKind> samplers{SamplerKind::ffbs, SamplerKind::iffbs, SamplerKind::fffbs, SamplerKind::pf};
  std::uint64_t seed = 1;
};

struct BenchOptions {
  std::uint64_t joint_cap = 1024;
  double timeout_seconds = 600.0;
  bool kernel_only = false;
  int threads = 1;
};

struct BenchRow {
  int K, C, T, J, P;
  SamplerKind sampler;
  int rep;
  double seconds;  // NaN when not run
  double ess;      // NaN when too few draws
  std::string feasible;  // "yes", "NA" (joint cap) or "timeout"
};

/// Table-1 grid: K in {2, 4, 8} x C in {4, 8, 16}.
inline std::vector<BenchCase> default_bench_grid() {
  std::vector<BenchCase> out;
  for (int K : {2, 4, 8})
    for (int C : {4, 8, 16}) {
      BenchCase b;
      b.K = K;
      b.C = C;
      out.push_back(b);
    }
  return out;
}

/// Random sticky CHMM with weak coupling and informative emissions (L = K).
inline ModelParams bench_params(int K, int C, Rng& rng) {
  ModelParams p = uniform_params(C, K, K);
  for (int c = 0; c < C; ++c) {
    auto& tc = p.beta.target(c);
    Eigen::MatrixXd b0 = Eigen::MatrixXd::Constant(K, K, 0.0);
    for (int k = 0; k < K; ++k) b0(k, k) = 2.0;
    tc.set_intercept(b0);
    Eigen::VectorXd v = tc.free();
    for (Eigen::Index i = static_cast<Eigen::Index>(tc.intercept_dim()); i < v.size(); ++i) v[i] = 0.2 * std_normal(rng);
    tc.set_free(v);
    Eigen::MatrixXd e = Eigen::MatrixXd::Constant(K, K, 0.2 / std::max(1, K - 1));
    for (int k = 0; k < K; ++k) e(k, k) = K == 1 ? 1.0 : 0.8;
    p.eps.matrices[c] = e;
  }
  return p;
}

namespace detail {
struct BenchTimeout {};
}  // namespace detail

inline std::vector<BenchRow> run_bench(const std::vector<BenchCase>& cases, const BenchOptions& opt,
                                       std::ostream* log = nullptr) {
  std::vector<BenchRow> rows;
  for (const BenchCase& bc : cases) {
    Rng prng = make_stream(bc.seed, {stream::kBench, static_cast<std::uint64_t>(bc.K), static_cast<std::uint64_t>(bc.C)});
    SimSpec spec;
    spec.dims = Dims{bc.C, bc.K, bc.K, bc.T, bc.N};
    spec.clusters = {bench_params(bc.K, bc.C, prng)};
    spec.cluster_sizes = {bc.N};
    const SimResult data = simulate(spec, bc.seed);
    for (SamplerKind kind : bc.samplers) {
      const bool feasible = kind != SamplerKind::ffbs || checked_pow(bc.K, bc.C, opt.joint_cap).has_value();
      if (!feasible) {
        for (int r = 0; r < bc.repetitions; ++r)
          rows.push_back({bc.K, bc.C, bc.T, bc.J, bc.P, kind, r + 1, std::nan(""), std::nan(""), "NA"});
        continue;
      }
      GibbsConfig cfg;
      cfg.sampler.kind = kind;
      cfg.sampler.particles = bc.P;
      cfg.sampler.joint_cap = opt.joint_cap;
      cfg.iterations = bc.J;
      cfg.warmup = bc.J / 2;
      cfg.store_draws = false;
      cfg.kernel_only = opt.kernel_only;
      cfg.threads = opt.threads;
      {
        GibbsConfig warm = cfg;
        warm.iterations = std::min(bc.J, 2);
        warm.warmup = 0;
        run_gibbs(data.panel, warm);
      }
      bool timed_out = false;
      for (int r = 0; r < bc.repetitions; ++r) {
        BenchRow row{bc.K, bc.C, bc.T, bc.J, bc.P, kind, r + 1, std::nan(""), std::nan(""), "yes"};
        if (timed_out) {
          row.feasible = "timeout";
          rows.push_back(row);
          continue;
        }
        cfg.seed = bc.seed + static_cast<std::uint64_t>(r);
        std::vector<double> monitored;
        const auto t0 = std::chrono::steady_clock::now();
        auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
        try {
          run_gibbs(data.panel, cfg, [&](int j, const MixtureState& s) {
            if (elapsed() > opt.timeout_seconds) throw detail::BenchTimeout{};
            if (j > cfg.warmup) {
              const auto& tc = s.components[0].beta.target(0);
              const auto i = std::min<Eigen::Index>(static_cast<Eigen::Index>(tc.intercept_dim()), tc.free().size() - 1);
              monitored.push_back(tc.free()[i]);
            }
          });
          row.seconds = elapsed();
          if (monitored.size() >= 10) row.ess = ess(monitored).ess;
        } catch (const detail::BenchTimeout&) {
          row.feasible = "timeout";
          timed_out = true;
        }
        if (log)
          *log << "bench K=" << bc.K << " C=" << bc.C << " " << to_string(kind) << " rep " << r + 1 << ": "
               << (row.feasible == "yes" ? std::to_string(row.seconds) + " s" : row.feasible) << '\n';
        rows.push_back(row);
      }
    }
  }
  return rows;
}

inline std::optional<double> median_seconds(const std::vector<BenchRow>& rows, int K, int C, SamplerKind kind) {
  std::vector<double> v;
  for (const auto& r : rows)
    if (r.K == K && r.C == C && r.sampler == kind && r.feasible == "yes") v.push_back(r.seconds);
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// Least-squares slope of log(y) on log(x).
inline double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

inline void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "K,C,T,J,P,sampler,rep,seconds,ess,feasible\n";
  for (const auto& r : rows) {
    out << r.K << ',' << r.C << ',' << r.T << ',' << r.J << ',' << r.P << ',' << to_string(r.sampler) << ',' << r.rep
        << ',';
    if (!std::isnan(r.seconds)) out << r.seconds;
    out << ',';
    if (!std::isnan(r.ess)) out << r.ess;
    out << ',' << r.feasible << '\n';
  }
}

/// Median seconds per (K, C) cell and sampler, NA where infeasible.
inline std::string render_bench_table(const std::vector<BenchRow>& rows) {
  std::vector<std::pair<int, int>> cells;
  for (const auto& r : rows)
    if (std::find(cells.begin(), cells.end(), std::make_pair(r.K, r.C)) == cells.end()) cells.emplace_back(r.K, r.C);
  const SamplerKind kinds[] = {SamplerKind::ffbs, SamplerKind::iffbs, SamplerKind::fffbs, SamplerKind::pf};
  std::ostringstream os;
  os << std::left << std::setw(12) << "cell";
  for (auto k : kinds) os << std::right << std::setw(12) << to_string(k);
  os << '\n';
  for (auto [K, C] : cells) {
    os << std::left << std::setw(12) << ("K=" + std::to_string(K) + ", C=" + std::to_string(C));
    for (auto k : kinds) {
      const bool present = std::any_of(rows.begin(), rows.end(),
                                       [&](const BenchRow& r) { return r.K == K && r.C == C && r.sampler == k; });
      std::ostringstream cell;
      if (!present) {
        cell << "-";
      } else if (auto m = median_seconds(rows, K, C, k)) {
        cell << std::fixed << std::setprecision(3) << *m << "s";
      } else {
        cell << "NA";
      }
      os << std::right << std::setw(12) << cell.str();
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace mchmm
