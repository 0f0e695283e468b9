#pragma once

// Additive log-linear transition design.
//
// For target chain c the logits of tau_t^c are
//   mu = B0 + sum_{s != c} E[s][pi_{t-1}^s]
// with B0 the intercept and E[s][k] the effect of source chain s being in
// state k. Every matrix has zero row sums and E[s][baseline(s)] == 0. tau is the
// row-wise softmax of mu. Rows index the previous state of chain c, columns the
// next state.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mchmm/errors.hpp"
#include "mchmm/model.hpp"

namespace mchmm {

/// Subtract each row's mean so every row sums to zero.
inline Eigen::MatrixXd project_zero_row_sum(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m;
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r).array() -= out.row(r).mean();
  return out;
}

/// In-place softmax with max subtraction.
inline void softmax_inplace(std::span<double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  double s = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    s += x;
  }
  for (double& x : v) x /= s;
}

/// log softmax(v)[idx].
inline double log_softmax_at(std::span<const double> v, int idx) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return v[static_cast<std::size_t>(idx)] - mx - std::log(s);
}

inline Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  std::vector<double> row(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    for (Eigen::Index j = 0; j < logits.cols(); ++j) row[j] = logits(r, j);
    softmax_inplace(row);
    for (Eigen::Index j = 0; j < logits.cols(); ++j) out(r, j) = row[j];
  }
  return out;
}

/// Which coefficient a position of the free vector belongs to. For the
/// intercept, source == target and source_state == -1.
struct CoeffSlot {
  int source = 0;
  int source_state = -1;
  int row = 0;
  int col = 0;
  bool is_intercept() const { return source_state < 0; }
};

/// All coefficients of one target chain, kept in two synchronized forms: the
/// free vector (first K-1 columns of each zero-row-sum matrix, the walk space
/// of the MH proposal) and the materialized K x K matrices.
class TargetCoeffs {
 public:
  TargetCoeffs() = default;
  TargetCoeffs(int target, int n_chains, int n_states, std::vector<int> baseline)
      : target_(target), n_chains_(n_chains), n_states_(n_states), baseline_(std::move(baseline)) {
    if (baseline_.empty()) baseline_.assign(static_cast<std::size_t>(n_chains), 0);
    if (static_cast<int>(baseline_.size()) != n_chains)
      throw DimensionError("baseline vector must have one entry per chain");
    for (int b : baseline_)
      if (b < 0 || b >= n_states) throw DimensionError("baseline state out of range");
    free_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(free_dim()));
    rebuild();
  }

  int target() const { return target_; }
  int n_chains() const { return n_chains_; }
  int n_states() const { return n_states_; }
  int baseline(int chain) const { return baseline_[static_cast<std::size_t>(chain)]; }
  const std::vector<int>& baselines() const { return baseline_; }

  std::size_t block_size() const { return static_cast<std::size_t>(n_states_) * (n_states_ - 1); }
  std::size_t n_blocks() const {
    return 1 + static_cast<std::size_t>(n_chains_ - 1) * (n_states_ - 1);
  }
  std::size_t free_dim() const { return block_size() * n_blocks(); }
  std::size_t intercept_dim() const { return block_size(); }

  const Eigen::VectorXd& free() const { return free_; }
  void set_free(const Eigen::VectorXd& v) {
    if (static_cast<std::size_t>(v.size()) != free_dim())
      throw DimensionError("free coefficient vector has wrong length");
    free_ = v;
    rebuild();
  }

  const Eigen::MatrixXd& intercept() const { return intercept_; }

  const Eigen::MatrixXd& effect(int source, int state) const {
    if (source == target_) throw DimensionError("a chain has no effect on itself");
    return effects_[index(source, state)];
  }
  bool is_baseline(int source, int state) const { return baseline(source) == state; }

  void set_intercept(const Eigen::MatrixXd& m) { write_block(0, m); }
  void set_effect(int source, int state, const Eigen::MatrixXd& m) {
    if (source == target_) throw DimensionError("a chain has no effect on itself");
    if (is_baseline(source, state)) {
      if (m.cwiseAbs().maxCoeff() != 0.0)
        throw DimensionError("the baseline state's effect is fixed at zero");
      return;
    }
    write_block(block_of(source, state), m);
  }

  CoeffSlot describe(std::size_t free_index) const {
    if (free_index >= free_dim()) throw DimensionError("free index out of range");
    const std::size_t block = free_index / block_size();
    const std::size_t within = free_index % block_size();
    CoeffSlot s;
    s.row = static_cast<int>(within / (n_states_ - 1));
    s.col = static_cast<int>(within % (n_states_ - 1));
    if (block == 0) {
      s.source = target_;
      return s;
    }
    std::size_t b = block - 1;
    for (int src = 0; src < n_chains_; ++src) {
      if (src == target_) continue;
      for (int k = 0; k < n_states_; ++k) {
        if (is_baseline(src, k)) continue;
        if (b == 0) {
          s.source = src;
          s.source_state = k;
          return s;
        }
        --b;
      }
    }
    throw DimensionError("free index out of range");
  }

  /// out = mu[row, :] for the given previous states of all chains.
  void logits_row(std::span<const int> prev_states, int row, std::span<double> out) const {
    for (int j = 0; j < n_states_; ++j) out[j] = intercept_(row, j);
    for (int src = 0; src < n_chains_; ++src) {
      if (src == target_) continue;
      const int k = prev_states[static_cast<std::size_t>(src)];
      if (is_baseline(src, k)) continue;
      const auto& e = effects_[index(src, k)];
      for (int j = 0; j < n_states_; ++j) out[j] += e(row, j);
    }
  }

  Eigen::MatrixXd logits(std::span<const int> prev_states) const {
    Eigen::MatrixXd mu = intercept_;
    for (int src = 0; src < n_chains_; ++src) {
      if (src == target_) continue;
      const int k = prev_states[static_cast<std::size_t>(src)];
      if (k < 0 || k >= n_states_) throw DimensionError("previous state out of range");
      if (!is_baseline(src, k)) mu += effects_[index(src, k)];
    }
    return mu;
  }

  /// log tau[prev_own, next] given previous states of all chains.
  double log_prob(std::span<const int> prev_states, int next) const {
    thread_local std::vector<double> row;
    row.resize(static_cast<std::size_t>(n_states_));
    logits_row(prev_states, prev_states[static_cast<std::size_t>(target_)], row);
    return log_softmax_at(row, next);
  }

 private:
  std::size_t index(int source, int state) const {
    return static_cast<std::size_t>(source) * n_states_ + state;
  }
  std::size_t block_of(int source, int state) const {
    std::size_t b = 1;
    for (int src = 0; src < n_chains_; ++src) {
      if (src == target_) continue;
      for (int k = 0; k < n_states_; ++k) {
        if (is_baseline(src, k)) continue;
        if (src == source && k == state) return b;
        ++b;
      }
    }
    throw DimensionError("no such effect block");
  }

  void write_block(std::size_t block, const Eigen::MatrixXd& m) {
    if (m.rows() != n_states_ || m.cols() != n_states_)
      throw DimensionError("coefficient matrix must be K x K");
    const Eigen::MatrixXd p = project_zero_row_sum(m);
    const std::size_t base = block * block_size();
    for (int r = 0; r < n_states_; ++r)
      for (int j = 0; j + 1 < n_states_; ++j)
        free_[static_cast<Eigen::Index>(base + static_cast<std::size_t>(r) * (n_states_ - 1) + j)] = p(r, j);
    rebuild();
  }

  Eigen::MatrixXd read_block(std::size_t block) const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_states_, n_states_);
    const std::size_t base = block * block_size();
    for (int r = 0; r < n_states_; ++r) {
      double s = 0.0;
      for (int j = 0; j + 1 < n_states_; ++j) {
        const double v = free_[static_cast<Eigen::Index>(base + static_cast<std::size_t>(r) * (n_states_ - 1) + j)];
        m(r, j) = v;
        s += v;
      }
      m(r, n_states_ - 1) = -s;
    }
    return m;
  }

  void rebuild() {
    intercept_ = read_block(0);
    effects_.assign(static_cast<std::size_t>(n_chains_) * n_states_,
                    Eigen::MatrixXd::Zero(n_states_, n_states_));
    std::size_t b = 1;
    for (int src = 0; src < n_chains_; ++src) {
      if (src == target_) continue;
      for (int k = 0; k < n_states_; ++k) {
        if (is_baseline(src, k)) continue;
        effects_[index(src, k)] = read_block(b++);
      }
    }
  }

  int target_ = 0;
  int n_chains_ = 1;
  int n_states_ = 2;
  std::vector<int> baseline_;
  Eigen::VectorXd free_;
  Eigen::MatrixXd intercept_;
  std::vector<Eigen::MatrixXd> effects_;
};

/// Coefficients of every target chain of one CHMM.
class TransitionCoeffs {
 public:
  TransitionCoeffs() = default;
  TransitionCoeffs(int n_chains, int n_states, std::vector<int> baseline = {}) {
    if (n_chains <= 0 || n_states <= 0) throw DimensionError("chains and states must be positive");
    if (baseline.empty()) baseline.assign(static_cast<std::size_t>(n_chains), 0);
    targets_.reserve(static_cast<std::size_t>(n_chains));
    for (int c = 0; c < n_chains; ++c) targets_.emplace_back(c, n_chains, n_states, baseline);
  }

  int n_chains() const { return static_cast<int>(targets_.size()); }
  int n_states() const { return targets_.empty() ? 0 : targets_.front().n_states(); }
  int baseline(int chain) const { return targets_.front().baseline(chain); }

  const TargetCoeffs& target(int c) const { return targets_.at(static_cast<std::size_t>(c)); }
  TargetCoeffs& target(int c) { return targets_.at(static_cast<std::size_t>(c)); }

  const Eigen::MatrixXd& intercept(int c) const { return target(c).intercept(); }
  const Eigen::MatrixXd& effect(int c, int source, int state) const {
    return target(c).effect(source, state);
  }

  /// True when every coupling effect is exactly zero.
  bool uncoupled() const {
    for (const auto& t : targets_)
      for (Eigen::Index i = static_cast<Eigen::Index>(t.intercept_dim()); i < t.free().size(); ++i)
        if (t.free()[i] != 0.0) return false;
    return true;
  }

 private:
  std::vector<TargetCoeffs> targets_;
};

/// tau_t^c: K x K row-stochastic transition of chain `target` given the
/// previous states of all chains.
inline Eigen::MatrixXd build_transition(const TransitionCoeffs& beta, std::span<const int> prev_states,
                                        int target) {
  if (static_cast<int>(prev_states.size()) != beta.n_chains())
    throw DimensionError("previous-state tuple has wrong length");
  return row_softmax(beta.target(target).logits(prev_states));
}

// ---------------------------------------------------------------------------
// Factor form: tau is proportional to F0 .* prod_{s != c} F[s][pi^s], with
// F = exp(coefficient matrix) elementwise.

struct FactorSet {
  int n_chains = 0;
  int n_states = 0;
  std::vector<Eigen::MatrixXd> intercept;            // [target]
  std::vector<std::vector<Eigen::MatrixXd>> effect;  // [target][source*K + state]

  const Eigen::MatrixXd& factor(int target, int source, int state) const {
    return effect[static_cast<std::size_t>(target)][static_cast<std::size_t>(source) * n_states + state];
  }
};

inline FactorSet to_factors(const TransitionCoeffs& beta) {
  FactorSet f;
  f.n_chains = beta.n_chains();
  f.n_states = beta.n_states();
  const int K = f.n_states;
  f.intercept.resize(static_cast<std::size_t>(f.n_chains));
  f.effect.resize(static_cast<std::size_t>(f.n_chains));
  for (int c = 0; c < f.n_chains; ++c) {
    f.intercept[c] = beta.intercept(c).array().exp().matrix();
    auto& eff = f.effect[c];
    eff.assign(static_cast<std::size_t>(f.n_chains) * K, Eigen::MatrixXd::Ones(K, K));
    for (int s = 0; s < f.n_chains; ++s) {
      if (s == c) continue;
      for (int k = 0; k < K; ++k)
        eff[static_cast<std::size_t>(s) * K + k] = beta.effect(c, s, k).array().exp().matrix();
    }
  }
  return f;
}

/// Row-normalized elementwise product of factors; equals build_transition.
inline Eigen::MatrixXd factor_transition(const FactorSet& f, std::span<const int> prev_states, int target) {
  Eigen::MatrixXd m = f.intercept[static_cast<std::size_t>(target)];
  for (int s = 0; s < f.n_chains; ++s) {
    if (s == target) continue;
    m.array() *= f.factor(target, s, prev_states[static_cast<std::size_t>(s)]).array();
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r) /= m.row(r).sum();
  return m;
}

/// K^C x K^C transition matrix of the equivalent joint HMM.
inline Eigen::MatrixXd joint_transition_tensor(const TransitionCoeffs& beta,
                                               std::uint64_t cap = kDefaultJointCap) {
  const int C = beta.n_chains();
  const int K = beta.n_states();
  const std::size_t S = joint_state_count(K, C, cap);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(S));
  std::vector<int> prev(static_cast<std::size_t>(C)), next(static_cast<std::size_t>(C));
  std::vector<Eigen::MatrixXd> per_chain(static_cast<std::size_t>(C));
  for (std::size_t s = 0; s < S; ++s) {
    decode_joint(s, K, prev);
    for (int c = 0; c < C; ++c) per_chain[c] = build_transition(beta, prev, c);
    for (std::size_t s2 = 0; s2 < S; ++s2) {
      decode_joint(s2, K, next);
      double p = 1.0;
      for (int c = 0; c < C; ++c) p *= per_chain[c](prev[c], next[c]);
      out(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s2)) = p;
    }
  }
  return out;
}

}  // namespace mchmm
