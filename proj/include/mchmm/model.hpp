#pragma once

// Core value types shared by every sampler.
//
// Conventions used throughout the library:
//   * latent states and observed symbols are 0-based internally; files use
//     1-based indices (see io.hpp);
//   * a missing observation is stored as kMissing and contributes an
//     emission factor of exactly 1;
//   * per-individual data is laid out chain-major: value(c, t) = v[c*T + t].

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mchmm/errors.hpp"

namespace mchmm {

inline constexpr int kMissing = -1;
inline constexpr std::uint64_t kDefaultJointCap = 65536;

struct Dims {
  int n_chains = 1;       // C
  int n_latent = 2;       // K
  int n_obs = 2;          // L
  int n_steps = 1;        // T
  int n_individuals = 1;  // N

  void validate() const {
    if (n_chains <= 0 || n_latent <= 0 || n_obs <= 0 || n_steps <= 0 || n_individuals <= 0)
      throw DimensionError("all dimensions must be strictly positive");
  }
  bool operator==(const Dims&) const = default;
};

/// base^exp, or nullopt when the result exceeds `limit`.
inline std::optional<std::uint64_t> checked_pow(std::uint64_t base, int exp,
                                                std::uint64_t limit = UINT64_MAX) {
  std::uint64_t r = 1;
  for (int i = 0; i < exp; ++i) {
    if (base != 0 && r > limit / base) return std::nullopt;
    r *= base;
  }
  if (r > limit) return std::nullopt;
  return r;
}

/// Number of joint latent states K^C. Throws CapabilityError above `cap`.
inline std::size_t joint_state_count(int n_latent, int n_chains,
                                     std::uint64_t cap = kDefaultJointCap) {
  auto s = checked_pow(static_cast<std::uint64_t>(n_latent), n_chains, cap);
  if (!s)
    throw CapabilityError("joint state space K^C = " + std::to_string(n_latent) + "^" +
                          std::to_string(n_chains) + " exceeds the cap of " +
                          std::to_string(cap) + "; use the fffbs or pf sampler");
  return static_cast<std::size_t>(*s);
}

// ---------------------------------------------------------------------------
// Joint index: chain 0 is the fastest-varying digit.

inline std::size_t encode_joint(std::span<const int> states, int n_latent) {
  std::size_t idx = 0;
  for (std::size_t c = states.size(); c-- > 0;) {
    if (states[c] < 0 || states[c] >= n_latent)
      throw DimensionError("joint encode: state " + std::to_string(states[c]) +
                           " out of range for chain " + std::to_string(c));
    idx = idx * static_cast<std::size_t>(n_latent) + static_cast<std::size_t>(states[c]);
  }
  return idx;
}

inline void decode_joint(std::size_t idx, int n_latent, std::span<int> out) {
  for (int& s : out) {
    s = static_cast<int>(idx % static_cast<std::size_t>(n_latent));
    idx /= static_cast<std::size_t>(n_latent);
  }
}

inline std::vector<int> decode_joint(std::size_t idx, int n_latent, int n_chains) {
  std::vector<int> out(static_cast<std::size_t>(n_chains));
  decode_joint(idx, n_latent, out);
  return out;
}

// ---------------------------------------------------------------------------
// One individual's C x T grid of states or observations.

struct GridView {
  std::span<const int> values;
  int chains = 0;
  int steps = 0;

  int operator()(int c, int t) const {
    return values[static_cast<std::size_t>(c) * steps + t];
  }
};

struct StateGrid {
  int chains = 0;
  int steps = 0;
  std::vector<int> values;

  StateGrid() = default;
  StateGrid(int c, int t, int fill = 0)
      : chains(c), steps(t), values(static_cast<std::size_t>(c) * t, fill) {}

  int& operator()(int c, int t) { return values[static_cast<std::size_t>(c) * steps + t]; }
  int operator()(int c, int t) const {
    return values[static_cast<std::size_t>(c) * steps + t];
  }
  GridView view() const { return {values, chains, steps}; }
  /// States of all chains at step t.
  void column(int t, std::span<int> out) const {
    for (int c = 0; c < chains; ++c) out[c] = (*this)(c, t);
  }
  bool operator==(const StateGrid&) const = default;
};

// ---------------------------------------------------------------------------
// N x C x T panels.

class ObservationPanel {
 public:
  ObservationPanel() = default;
  explicit ObservationPanel(Dims dims)
      : dims_(dims), values_(size_of(dims), kMissing) {
    dims_.validate();
  }
  ObservationPanel(Dims dims, std::vector<int> values) : dims_(dims), values_(std::move(values)) {
    dims_.validate();
    if (values_.size() != size_of(dims_))
      throw DimensionError("observation panel size does not match dims");
    for (int v : values_)
      if (v != kMissing && (v < 0 || v >= dims_.n_obs))
        throw DimensionError("observation symbol " + std::to_string(v) + " out of range");
  }

  const Dims& dims() const { return dims_; }
  int at(int n, int c, int t) const { return values_[offset(n, c, t)]; }
  void set(int n, int c, int t, int v) {
    if (v != kMissing && (v < 0 || v >= dims_.n_obs))
      throw DimensionError("observation symbol " + std::to_string(v) + " out of range");
    values_[offset(n, c, t)] = v;
  }
  GridView individual(int n) const {
    const std::size_t len = static_cast<std::size_t>(dims_.n_chains) * dims_.n_steps;
    return {std::span<const int>(values_).subspan(static_cast<std::size_t>(n) * len, len),
            dims_.n_chains, dims_.n_steps};
  }
  const std::vector<int>& values() const { return values_; }

  /// Panel restricted to the given individuals, in the given order.
  ObservationPanel subset(std::span<const int> individuals) const {
    Dims d = dims_;
    d.n_individuals = static_cast<int>(individuals.size());
    std::vector<int> v;
    v.reserve(size_of(d));
    for (int n : individuals) {
      auto g = individual(n);
      v.insert(v.end(), g.values.begin(), g.values.end());
    }
    return ObservationPanel(d, std::move(v));
  }

  bool operator==(const ObservationPanel&) const = default;

 private:
  static std::size_t size_of(const Dims& d) {
    return static_cast<std::size_t>(d.n_individuals) * d.n_chains * d.n_steps;
  }
  std::size_t offset(int n, int c, int t) const {
    return (static_cast<std::size_t>(n) * dims_.n_chains + c) * dims_.n_steps + t;
  }

  Dims dims_{};
  std::vector<int> values_;
};

class LatentPaths {
 public:
  LatentPaths() = default;
  explicit LatentPaths(Dims dims)
      : dims_(dims),
        values_(static_cast<std::size_t>(dims.n_individuals) * dims.n_chains * dims.n_steps, 0) {
    dims_.validate();
  }
  LatentPaths(Dims dims, std::vector<int> values) : dims_(dims), values_(std::move(values)) {
    dims_.validate();
    if (values_.size() != static_cast<std::size_t>(dims.n_individuals) * dims.n_chains * dims.n_steps)
      throw DimensionError("latent path size does not match dims");
    for (int v : values_)
      if (v < 0 || v >= dims_.n_latent)
        throw DimensionError("latent state " + std::to_string(v) + " out of range");
  }

  const Dims& dims() const { return dims_; }
  int at(int n, int c, int t) const { return values_[offset(n, c, t)]; }
  GridView individual(int n) const {
    const std::size_t len = grid_len();
    return {std::span<const int>(values_).subspan(static_cast<std::size_t>(n) * len, len),
            dims_.n_chains, dims_.n_steps};
  }
  StateGrid path(int n) const {
    StateGrid g(dims_.n_chains, dims_.n_steps);
    auto v = individual(n).values;
    g.values.assign(v.begin(), v.end());
    return g;
  }
  void set_path(int n, const StateGrid& g) {
    if (g.chains != dims_.n_chains || g.steps != dims_.n_steps)
      throw DimensionError("path grid shape does not match panel");
    for (int v : g.values)
      if (v < 0 || v >= dims_.n_latent)
        throw DimensionError("latent state " + std::to_string(v) + " out of range");
    std::copy(g.values.begin(), g.values.end(),
              values_.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(n) * grid_len()));
  }
  const std::vector<int>& values() const { return values_; }
  bool operator==(const LatentPaths&) const = default;

 private:
  std::size_t grid_len() const { return static_cast<std::size_t>(dims_.n_chains) * dims_.n_steps; }
  std::size_t offset(int n, int c, int t) const {
    return (static_cast<std::size_t>(n) * dims_.n_chains + c) * dims_.n_steps + t;
  }

  Dims dims_{};
  std::vector<int> values_;
};

// ---------------------------------------------------------------------------
// Emission and initial-state parameters.

inline constexpr double kStochasticTol = 1e-12;

inline void check_probability_vector(const Eigen::VectorXd& p, double tol, const std::string& what) {
  if ((p.array() < 0.0).any() || !p.allFinite())
    throw NumericalError(what + " has negative or non-finite entries");
  if (std::abs(p.sum() - 1.0) > tol) throw NumericalError(what + " does not sum to 1");
}

/// Per chain K x L row-stochastic matrix; rows are latent states.
struct EmissionParams {
  std::vector<Eigen::MatrixXd> matrices;

  int n_chains() const { return static_cast<int>(matrices.size()); }

  void validate(int n_latent, int n_obs, double tol = kStochasticTol) const {
    for (std::size_t c = 0; c < matrices.size(); ++c) {
      const auto& m = matrices[c];
      if (m.rows() != n_latent || m.cols() != n_obs)
        throw DimensionError("emission matrix shape mismatch on chain " + std::to_string(c));
      for (Eigen::Index k = 0; k < m.rows(); ++k)
        check_probability_vector(m.row(k).transpose(), tol,
                                 "emission row " + std::to_string(k) + " of chain " + std::to_string(c));
    }
  }
};

/// p(x | latent k) for one chain; exactly 1 for a missing observation.
inline double emission_weight(const EmissionParams& eps, int chain, int latent, int obs) {
  const auto& m = eps.matrices.at(static_cast<std::size_t>(chain));
  if (latent < 0 || latent >= m.rows()) throw DimensionError("latent state out of range");
  if (obs == kMissing) return 1.0;
  if (obs < 0 || obs >= m.cols()) throw DimensionError("observed symbol out of range");
  return m(latent, obs);
}

struct InitialParams {
  std::vector<Eigen::VectorXd> probs;

  int n_chains() const { return static_cast<int>(probs.size()); }

  void validate(int n_latent, double tol = kStochasticTol) const {
    for (std::size_t c = 0; c < probs.size(); ++c) {
      if (probs[c].size() != n_latent)
        throw DimensionError("initial-state vector size mismatch on chain " + std::to_string(c));
      check_probability_vector(probs[c], tol, "initial-state vector of chain " + std::to_string(c));
    }
  }
};

}  // namespace mchmm
