#pragma once

// Adaptive random-walk Metropolis for one target chain's transition
// coefficients, on the free (unconstrained) parametrization.

#include <cmath>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mchmm/model.hpp"
#include "mchmm/priors/horseshoe.hpp"
#include "mchmm/rng.hpp"
#include "mchmm/transition.hpp"

namespace mchmm {

/// Transition counts of a set of latent paths, grouped by the distinct
/// previous joint states: counts[c](key, j) is the number of steps where the
/// previous state was keys[key] and chain c moved to j.
struct TransitionStats {
  int n_chains = 0;
  int n_states = 0;
  std::vector<int> keys;  // n_keys x C
  std::vector<Eigen::MatrixXd> counts;

  std::size_t n_keys() const { return n_chains == 0 ? 0 : keys.size() / static_cast<std::size_t>(n_chains); }
  std::span<const int> key(std::size_t i) const {
    return std::span<const int>(keys).subspan(i * static_cast<std::size_t>(n_chains),
                                              static_cast<std::size_t>(n_chains));
  }
};

inline TransitionStats transition_stats(const LatentPaths& paths, std::span<const int> individuals) {
  const Dims& d = paths.dims();
  const int C = d.n_chains;
  const int K = d.n_latent;
  std::map<std::vector<int>, std::size_t> index;
  std::vector<std::vector<double>> rows;  // per key: C*K counts
  std::vector<int> prev(static_cast<std::size_t>(C));
  for (int n : individuals) {
    for (int t = 1; t < d.n_steps; ++t) {
      for (int c = 0; c < C; ++c) prev[c] = paths.at(n, c, t - 1);
      auto [it, inserted] = index.try_emplace(prev, rows.size());
      if (inserted) rows.emplace_back(static_cast<std::size_t>(C) * K, 0.0);
      auto& r = rows[it->second];
      for (int c = 0; c < C; ++c) r[static_cast<std::size_t>(c) * K + paths.at(n, c, t)] += 1.0;
    }
  }
  TransitionStats s;
  s.n_chains = C;
  s.n_states = K;
  s.keys.resize(rows.size() * static_cast<std::size_t>(C));
  s.counts.assign(static_cast<std::size_t>(C), Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), K));
  for (const auto& [key, i] : index) {
    std::copy(key.begin(), key.end(), s.keys.begin() + static_cast<std::ptrdiff_t>(i * C));
    for (int c = 0; c < C; ++c)
      for (int k = 0; k < K; ++k)
        s.counts[c](static_cast<Eigen::Index>(i), k) = rows[i][static_cast<std::size_t>(c) * K + k];
  }
  return s;
}

/// sum over recorded steps of log tau^c(prev)[prev_c, next_c].
inline double transition_loglik(const TargetCoeffs& tc, const TransitionStats& s) {
  const int c = tc.target();
  const int K = tc.n_states();
  const Eigen::MatrixXd& cnt = s.counts[static_cast<std::size_t>(c)];
  std::vector<double> row(static_cast<std::size_t>(K));
  double ll = 0.0;
  for (std::size_t i = 0; i < s.n_keys(); ++i) {
    const auto key = s.key(i);
    tc.logits_row(key, key[static_cast<std::size_t>(c)], row);
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double lz = mx + std::log(z);
    for (int j = 0; j < K; ++j) {
      const double n = cnt(static_cast<Eigen::Index>(i), j);
      if (n != 0.0) ll += n * (row[j] - lz);
    }
  }
  return ll;
}

/// Normal log prior (up to a constant) on the free vector: sd `intercept_sd`
/// on intercept scalars, horseshoe conditional variance on effect scalars.
inline double beta_log_prior(const Eigen::VectorXd& free, std::size_t intercept_dim, double intercept_sd,
                             const HorseshoeState& hs) {
  double lp = 0.0;
  for (std::size_t i = 0; i < intercept_dim; ++i) {
    const double b = free[static_cast<Eigen::Index>(i)];
    lp -= 0.5 * b * b / (intercept_sd * intercept_sd);
  }
  for (std::size_t i = intercept_dim; i < static_cast<std::size_t>(free.size()); ++i) {
    const double b = free[static_cast<Eigen::Index>(i)];
    lp -= 0.5 * b * b / hs.prior_variance(i - intercept_dim);
  }
  return lp;
}

struct MhOptions {
  double target_accept = 0.234;
  double rm_exponent = 0.6;
  double initial_variance = 0.01;
  double jitter = 1e-9;
  /// Above this dimension the learned proposal covariance is kept diagonal.
  int full_covariance_limit = 400;
};

/// Proposal scale psi, proposal covariance Sigma, running moments of the
/// visited states and acceptance bookkeeping for one block.
class MhAdaptState {
 public:
  MhAdaptState() = default;
  MhAdaptState(std::size_t dim, MhOptions opt = {})
      : opt_(opt),
        dim_(static_cast<Eigen::Index>(dim)),
        diagonal_(static_cast<int>(dim) > opt.full_covariance_limit) {
    reset_scale();
    const double sd = std::sqrt(opt.initial_variance);
    if (diagonal_)
      factor_ = Eigen::VectorXd::Constant(dim_, sd);
    else
      factor_ = Eigen::MatrixXd::Identity(dim_, dim_) * sd;
    mean_ = Eigen::VectorXd::Zero(dim_);
    m2_ = diagonal_ ? Eigen::MatrixXd::Zero(dim_, 1) : Eigen::MatrixXd::Zero(dim_, dim_);
  }

  double psi() const { return std::exp(log_psi_); }
  bool diagonal() const { return diagonal_; }
  bool adapting() const { return adapting_; }
  long proposed() const { return proposed_; }
  long accepted() const { return accepted_; }
  long frozen_proposed() const { return frozen_proposed_; }
  long frozen_accepted() const { return frozen_accepted_; }
  double acceptance_rate() const {
    return frozen_proposed_ > 0 ? static_cast<double>(frozen_accepted_) / frozen_proposed_
                                : (proposed_ > 0 ? static_cast<double>(accepted_) / proposed_ : 0.0);
  }

  Eigen::VectorXd propose(const Eigen::VectorXd& current, Rng& rng) const {
    Eigen::VectorXd z(dim_);
    for (Eigen::Index i = 0; i < dim_; ++i) z[i] = std_normal(rng);
    if (diagonal_) return current + psi() * factor_.col(0).cwiseProduct(z);
    const Eigen::VectorXd step = factor_.triangularView<Eigen::Lower>() * z;
    return current + psi() * step;
  }

  /// Records one MH step. While adapting, psi follows a Robbins-Monro
  /// recursion toward the target acceptance rate; while collecting, the state
  /// enters the running moments.
  void observe(bool accepted, const Eigen::VectorXd& state) {
    ++proposed_;
    accepted_ += accepted ? 1 : 0;
    if (!adapting_) {
      ++frozen_proposed_;
      frozen_accepted_ += accepted ? 1 : 0;
    }
    if (adapting_) {
      ++rm_step_;
      const double gain = std::pow(static_cast<double>(rm_step_), -opt_.rm_exponent);
      log_psi_ += gain * ((accepted ? 1.0 : 0.0) - opt_.target_accept);
    }
    if (collecting_) {
      ++n_;
      const Eigen::VectorXd delta = state - mean_;
      mean_ += delta / static_cast<double>(n_);
      const Eigen::VectorXd delta2 = state - mean_;
      if (diagonal_)
        m2_.col(0) += delta.cwiseProduct(delta2);
      else
        m2_.noalias() += delta * delta2.transpose();
    }
  }

  /// Discards the running moments collected so far (burn-in transient).
  void restart_collection() {
    n_ = 0;
    mean_.setZero();
    m2_.setZero();
  }

  /// Replaces the fixed proposal covariance by the sample covariance of the
  /// collected states and restarts the scale adaptation.
  void switch_to_covariance() {
    collecting_ = false;
    if (n_ < 10 || dim_ == 0) return;
    const double denom = static_cast<double>(n_ - 1);
    if (diagonal_) {
      Eigen::VectorXd var = m2_.col(0) / denom;
      var.array() += opt_.jitter;
      factor_ = var.cwiseSqrt();
    } else {
      Eigen::MatrixXd cov = m2_ / denom;
      cov = 0.5 * (cov + cov.transpose());
      cov.diagonal().array() += opt_.jitter;
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() != Eigen::Success) return;
      factor_ = llt.matrixL();
    }
    reset_scale();
    rm_step_ = 0;
  }

  void freeze() {
    adapting_ = false;
    collecting_ = false;
  }

 private:
  void reset_scale() { log_psi_ = dim_ > 0 ? std::log(2.38 / std::sqrt(static_cast<double>(dim_))) : 0.0; }

  MhOptions opt_;
  Eigen::Index dim_ = 0;
  bool diagonal_ = false;
  bool adapting_ = true;
  bool collecting_ = true;
  double log_psi_ = 0.0;
  long rm_step_ = 0;
  Eigen::MatrixXd factor_;  // Cholesky factor, or a column of sds when diagonal
  long n_ = 0;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd m2_;
  long proposed_ = 0, accepted_ = 0;
  long frozen_proposed_ = 0, frozen_accepted_ = 0;
};

/// `repeats` MH steps on target chain tc; returns the number accepted.
inline int mh_update_beta(TargetCoeffs& tc, const TransitionStats& stats, MhAdaptState& adapt,
                          const HorseshoeState& hs, double intercept_sd, Rng& rng, int repeats = 1) {
  Eigen::VectorXd cur = tc.free();
  if (cur.size() == 0) return 0;
  const std::size_t idim = tc.intercept_dim();
  double cur_lp = transition_loglik(tc, stats) + beta_log_prior(cur, idim, intercept_sd, hs);
  int n_acc = 0;
  for (int r = 0; r < repeats; ++r) {
    Eigen::VectorXd prop = adapt.propose(cur, rng);
    tc.set_free(prop);
    const double prop_lp = transition_loglik(tc, stats) + beta_log_prior(prop, idim, intercept_sd, hs);
    const double log_u = std::log(uniform01(rng));
    const bool accept = log_u < prop_lp - cur_lp;
    if (accept) {
      cur = std::move(prop);
      cur_lp = prop_lp;
      ++n_acc;
    } else {
      tc.set_free(cur);
    }
    adapt.observe(accept, cur);
  }
  return n_acc;
}

}  // namespace mchmm
