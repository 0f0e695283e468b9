#pragma once

// CSV panels, parameter and sample-store records, run manifests. All indices
// in files are 1-based; in memory they are 0-based.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "mchmm/diagnostics.hpp"
#include "mchmm/gibbs.hpp"

namespace mchmm {

namespace fs = std::filesystem;

/// Shortest decimal that round-trips a double.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s(buf);
  for (int prec = 6; prec < 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return s;
}

inline std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Git-style content hash: SHA-1 over "blob <size>\0" + content.
inline std::string git_blob_hash(const std::string& content) {
  const std::string blob = "blob " + std::to_string(content.size()) + std::string(1, '\0') + content;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr) != 1)
    throw IoError("SHA-1 digest failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline int parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError("malformed " + what + " '" + s + "'");
  }
}

struct LongRecord {
  int individual, chain, time, value;  // value kMissing when empty
};

inline std::vector<LongRecord> read_long(const fs::path& path, bool allow_missing) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + " is empty");
  if (split_csv(line) != std::vector<std::string>{"individual", "chain", "time", "value"})
    throw IoError(path.string() + ": expected header individual,chain,time,value");
  std::vector<LongRecord> recs;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != 4) throw IoError(path.string() + ": expected 4 fields in '" + line + "'");
    LongRecord r{parse_int(f[0], "individual"), parse_int(f[1], "chain"), parse_int(f[2], "time"), kMissing};
    if (f[3].empty()) {
      if (!allow_missing) throw IoError(path.string() + ": latent states cannot be missing");
    } else {
      r.value = parse_int(f[3], "value") - 1;
    }
    recs.push_back(r);
  }
  return recs;
}

inline Dims long_extent(const std::vector<LongRecord>& recs) {
  Dims d{0, 1, 1, 0, 0};
  for (const auto& r : recs) {
    if (r.individual < 1 || r.chain < 1 || r.time < 1) throw IoError("indices in CSV files start at 1");
    d.n_individuals = std::max(d.n_individuals, r.individual);
    d.n_chains = std::max(d.n_chains, r.chain);
    d.n_steps = std::max(d.n_steps, r.time);
  }
  return d;
}

}  // namespace detail

/// Reads a long-format panel. n_latent and n_obs come from the caller (the
/// model block); cells absent from the file are missing.
inline ObservationPanel read_panel(const fs::path& path, int n_latent, int n_obs) {
  const auto recs = detail::read_long(path, true);
  Dims d = detail::long_extent(recs);
  d.n_latent = n_latent;
  d.n_obs = n_obs;
  ObservationPanel p(d);
  for (const auto& r : recs) {
    if (r.value != kMissing && (r.value < 0 || r.value >= n_obs))
      throw IoError(path.string() + ": observed symbol " + std::to_string(r.value + 1) + " outside 1.." +
                    std::to_string(n_obs));
    p.set(r.individual - 1, r.chain - 1, r.time - 1, r.value);
  }
  return p;
}

inline void write_panel(const fs::path& path, const ObservationPanel& p) {
  auto out = open_out(path);
  out << "individual,chain,time,value\n";
  const Dims& d = p.dims();
  for (int n = 0; n < d.n_individuals; ++n)
    for (int c = 0; c < d.n_chains; ++c)
      for (int t = 0; t < d.n_steps; ++t) {
        const int v = p.at(n, c, t);
        out << n + 1 << ',' << c + 1 << ',' << t + 1 << ',';
        if (v != kMissing) out << v + 1;
        out << '\n';
      }
}

inline void write_latent(const fs::path& path, const LatentPaths& l) {
  auto out = open_out(path);
  out << "individual,chain,time,value\n";
  const Dims& d = l.dims();
  for (int n = 0; n < d.n_individuals; ++n)
    for (int c = 0; c < d.n_chains; ++c)
      for (int t = 0; t < d.n_steps; ++t) out << n + 1 << ',' << c + 1 << ',' << t + 1 << ',' << l.at(n, c, t) + 1 << '\n';
}

inline LatentPaths read_latent(const fs::path& path, int n_latent, int n_obs) {
  const auto recs = detail::read_long(path, false);
  Dims d = detail::long_extent(recs);
  d.n_latent = n_latent;
  d.n_obs = n_obs;
  std::vector<int> v(static_cast<std::size_t>(d.n_individuals) * d.n_chains * d.n_steps, -1);
  for (const auto& r : recs)
    v[(static_cast<std::size_t>(r.individual - 1) * d.n_chains + (r.chain - 1)) * d.n_steps + (r.time - 1)] = r.value;
  for (int x : v)
    if (x < 0) throw IoError(path.string() + ": latent path file has gaps");
  return LatentPaths(d, std::move(v));
}

inline void write_labels(const fs::path& path, std::span<const int> labels) {
  auto out = open_out(path);
  out << "individual,label\n";
  for (std::size_t n = 0; n < labels.size(); ++n) out << n + 1 << ',' << labels[n] + 1 << '\n';
}

inline std::vector<int> read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (detail::split_csv(line) != std::vector<std::string>{"individual", "label"})
    throw IoError(path.string() + ": expected header individual,label");
  std::vector<std::pair<int, int>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 2) throw IoError(path.string() + ": expected 2 fields in '" + line + "'");
    rows.emplace_back(detail::parse_int(f[0], "individual"), detail::parse_int(f[1], "label"));
  }
  std::vector<int> out(rows.size(), -1);
  for (auto [n, z] : rows) {
    if (n < 1 || n > static_cast<int>(rows.size()) || z < 1) throw IoError(path.string() + ": bad label record");
    out[n - 1] = z - 1;
  }
  return out;
}

/// Flat beta records `component,target_chain,source_chain,source_state,row,col,value`.
inline void write_beta(std::ostream& out, int component, const TransitionCoeffs& beta, bool header = true) {
  if (header) out << "component,target_chain,source_chain,source_state,row,col,value\n";
  const int C = beta.n_chains();
  const int K = beta.n_states();
  for (int c = 0; c < C; ++c) {
    auto emit = [&](int src, int state, const Eigen::MatrixXd& m) {
      for (int r = 0; r < K; ++r)
        for (int j = 0; j < K; ++j)
          out << component + 1 << ',' << c + 1 << ',' << src + 1 << ',' << state << ',' << r + 1 << ',' << j + 1 << ','
              << fmt(m(r, j)) << '\n';
    };
    emit(c, 0, beta.intercept(c));
    for (int s = 0; s < C; ++s) {
      if (s == c) continue;
      for (int k = 0; k < K; ++k) emit(s, k + 1, beta.effect(c, s, k));
    }
  }
}

/// Sample-store records `iteration,component,param,i1,...,i5,value`. Unused
/// index fields are empty. beta uses (target, source, source_state, row, col)
/// with source == target and source_state 0 for the intercept.
inline void write_store(const fs::path& path, const SampleStore& store) {
  auto out = open_out(path);
  out << "iteration,component,param,i1,i2,i3,i4,i5,value\n";
  for (const Draw& d : store.draws) {
    const std::string it = std::to_string(d.iteration);
    for (std::size_t m = 0; m < d.components.size(); ++m) {
      const ModelParams& p = d.components[m];
      const std::string pre = it + ',' + std::to_string(m + 1) + ',';
      const int C = p.n_chains(), K = p.n_latent(), L = p.n_obs();
      for (int c = 0; c < C; ++c) {
        for (int k = 0; k < K; ++k) out << pre << "eta," << c + 1 << ',' << k + 1 << ",,,," << fmt(p.eta.probs[c][k]) << '\n';
        for (int k = 0; k < K; ++k)
          for (int l = 0; l < L; ++l)
            out << pre << "eps," << c + 1 << ',' << k + 1 << ',' << l + 1 << ",,," << fmt(p.eps.matrices[c](k, l)) << '\n';
        auto emit = [&](int src, int state, const Eigen::MatrixXd& mat) {
          for (int r = 0; r < K; ++r)
            for (int j = 0; j < K; ++j)
              out << pre << "beta," << c + 1 << ',' << src + 1 << ',' << state << ',' << r + 1 << ',' << j + 1 << ','
                  << fmt(mat(r, j)) << '\n';
        };
        emit(c, 0, p.beta.intercept(c));
        for (int s = 0; s < C; ++s) {
          if (s == c) continue;
          for (int k = 0; k < K; ++k) emit(s, k + 1, p.beta.effect(c, s, k));
        }
      }
      out << it << ',' << m + 1 << ",gamma,,,,,," << fmt(d.gamma[static_cast<Eigen::Index>(m)]) << '\n';
    }
    for (std::size_t n = 0; n < d.z.size(); ++n) out << it << ",,z," << n + 1 << ",,,,," << d.z[n] + 1 << '\n';
    for (std::size_t n = 0; n < d.log_lik.size(); ++n) out << it << ",,loglik," << n + 1 << ",,,,," << fmt(d.log_lik[n]) << '\n';
  }
}

/// Reads a store written by write_store (baseline taken from the zero effects).
inline SampleStore read_store(const fs::path& path, const Dims& dims, int n_components, int warmup,
                              std::vector<int> baseline = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("iteration,component,param", 0) != 0) throw IoError(path.string() + ": not a sample store");
  SampleStore store;
  store.dims = dims;
  store.n_components = n_components;
  store.warmup = warmup;
  const int C = dims.n_chains, K = dims.n_latent, L = dims.n_obs;
  std::vector<std::vector<Eigen::MatrixXd>> beta_mats;  // per component: [target*(C*K+1) + slot]
  auto finish = [&](Draw& d) {
    for (int m = 0; m < n_components; ++m) {
      auto& mats = beta_mats[m];
      for (int c = 0; c < C; ++c) {
        auto& tc = d.components[m].beta.target(c);
        tc.set_intercept(mats[static_cast<std::size_t>(c) * (C * K + 1)]);
        for (int s = 0; s < C; ++s) {
          if (s == c) continue;
          for (int k = 0; k < K; ++k)
            if (!tc.is_baseline(s, k)) tc.set_effect(s, k, mats[static_cast<std::size_t>(c) * (C * K + 1) + 1 + s * K + k]);
        }
      }
    }
  };
  Draw cur;
  bool open = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 9) throw IoError(path.string() + ": malformed record '" + line + "'");
    const int it = detail::parse_int(f[0], "iteration");
    if (!open || it != cur.iteration) {
      if (open) {
        finish(cur);
        store.draws.push_back(std::move(cur));
      }
      cur = Draw{};
      cur.iteration = it;
      cur.components.assign(static_cast<std::size_t>(n_components), uniform_params(C, K, L, baseline));
      cur.gamma = Eigen::VectorXd::Zero(n_components);
      cur.z.assign(static_cast<std::size_t>(dims.n_individuals), 0);
      cur.log_lik.assign(static_cast<std::size_t>(dims.n_individuals), 0.0);
      beta_mats.assign(static_cast<std::size_t>(n_components),
                       std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(C) * (C * K + 1), Eigen::MatrixXd::Zero(K, K)));
      open = true;
    }
    const std::string& param = f[2];
    const double v = std::stod(f[8]);
    auto idx = [&](int i) { return detail::parse_int(f[3 + i], "index") - 1; };
    if (param == "z") {
      cur.z.at(static_cast<std::size_t>(idx(0))) = static_cast<int>(v) - 1;
    } else if (param == "loglik") {
      cur.log_lik.at(static_cast<std::size_t>(idx(0))) = v;
    } else {
      const int m = detail::parse_int(f[1], "component") - 1;
      if (m < 0 || m >= n_components) throw IoError(path.string() + ": component out of range");
      ModelParams& p = cur.components[m];
      if (param == "gamma") {
        cur.gamma[m] = v;
      } else if (param == "eta") {
        p.eta.probs.at(idx(0))[idx(1)] = v;
      } else if (param == "eps") {
        p.eps.matrices.at(idx(0))(idx(1), idx(2)) = v;
      } else if (param == "beta") {
        const int c = idx(0), s = idx(1), state = detail::parse_int(f[5], "source_state");
        const std::size_t slot = static_cast<std::size_t>(c) * (C * K + 1) + (state == 0 ? 0 : 1 + s * K + state - 1);
        beta_mats[m].at(slot)(idx(3), idx(4)) = v;
      } else {
        throw IoError(path.string() + ": unknown parameter '" + param + "'");
      }
    }
  }
  if (open) {
    finish(cur);
    store.draws.push_back(std::move(cur));
  }
  return store;
}

inline void write_ess_trace(std::ostream& out, int individual, const SamplerDiagnostics& d, bool header) {
  if (header) out << "individual,t,ess,resampled\n";
  for (std::size_t t = 0; t < d.ess_trace.size(); ++t)
    out << individual + 1 << ',' << t + 1 << ',' << fmt(d.ess_trace[t]) << ',' << static_cast<int>(d.resampled[t]) << '\n';
}

inline void write_predictive(const fs::path& path, const std::vector<PredictiveCell>& cells) {
  auto out = open_out(path);
  out << "chain,time,observed,lower,median,upper\n";
  for (const auto& c : cells) {
    out << c.chain + 1 << ',' << c.step + 1 << ',';
    if (!std::isnan(c.observed)) out << fmt(c.observed);
    out << ',' << fmt(c.lower) << ',' << fmt(c.median) << ',' << fmt(c.upper) << '\n';
  }
}

}  // namespace mchmm
