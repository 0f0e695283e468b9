#pragma once

// Forward filtering backward sampling on the joint HMM whose latent state is
// the tuple of all chain states (K^C values).

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "mchmm/params.hpp"
#include "mchmm/rng.hpp"

namespace mchmm {

/// Filtered distributions alpha_t (one row per step) and log normalizers.
struct ForwardLattice {
  Eigen::MatrixXd alpha;  // T x S
  std::vector<double> log_norms;

  double log_lik() const { return std::accumulate(log_norms.begin(), log_norms.end(), 0.0); }
};

struct SamplerDiagnostics {
  std::vector<double> ess_trace;  // particle ESS per step (PF only)
  std::vector<char> resampled;
};

/// One posterior latent-path draw for one individual.
struct SamplerResult {
  StateGrid path;
  double log_lik = 0.0;
  SamplerDiagnostics diagnostics;
};

/// Joint-HMM view of a CHMM. Holds the dense K^C x K^C transition matrix up to
/// kDenseLimit joint states; above that, per-state transition rows are kept and
/// the S^2 products are formed on the fly.
class JointModel {
 public:
  static constexpr std::size_t kDenseLimit = 4096;

  explicit JointModel(const ModelParams& p, std::uint64_t cap = kDefaultJointCap)
      : C_(p.n_chains()), K_(p.n_latent()), eps_(p.eps) {
    S_ = joint_state_count(K_, C_, cap);
    prior_.resize(static_cast<Eigen::Index>(S_));
    std::vector<int> s(static_cast<std::size_t>(C_));
    for (std::size_t i = 0; i < S_; ++i) {
      decode_joint(i, K_, s);
      double pr = 1.0;
      for (int c = 0; c < C_; ++c) pr *= p.eta.probs[c][s[c]];
      prior_[static_cast<Eigen::Index>(i)] = pr;
    }
    if (S_ <= kDenseLimit) {
      dense_ = joint_transition_tensor(p.beta, cap);
    } else {
      rows_.resize(S_ * C_ * K_);
      std::vector<double> row(static_cast<std::size_t>(K_));
      for (std::size_t i = 0; i < S_; ++i) {
        decode_joint(i, K_, s);
        for (int c = 0; c < C_; ++c) {
          p.beta.target(c).logits_row(s, s[c], row);
          softmax_inplace(row);
          std::copy(row.begin(), row.end(), rows_.begin() + static_cast<std::ptrdiff_t>((i * C_ + c) * K_));
        }
      }
    }
  }

  std::size_t n_states() const { return S_; }
  int n_chains() const { return C_; }
  int n_latent() const { return K_; }
  const Eigen::VectorXd& prior() const { return prior_; }
  bool dense() const { return S_ <= kDenseLimit; }

  double transition(std::size_t from, std::size_t to) const {
    if (dense()) return dense_(static_cast<Eigen::Index>(from), static_cast<Eigen::Index>(to));
    double p = 1.0;
    for (int c = 0; c < C_; ++c) {
      const int next = static_cast<int>(to % K_);
      to /= K_;
      p *= rows_[(from * C_ + c) * K_ + next];
    }
    return p;
  }

  /// out(s') = sum_s alpha(s) tau(s, s').
  void predict(const Eigen::VectorXd& alpha, Eigen::VectorXd& out) const {
    if (dense()) {
      out.noalias() = dense_.transpose() * alpha;
      return;
    }
    out.setZero(static_cast<Eigen::Index>(S_));
    for (std::size_t s = 0; s < S_; ++s) {
      const double a = alpha[static_cast<Eigen::Index>(s)];
      if (a == 0.0) continue;
      for (std::size_t s2 = 0; s2 < S_; ++s2) out[static_cast<Eigen::Index>(s2)] += a * transition(s, s2);
    }
  }

  /// out(s) = prod_c p(x_t^c | s_c).
  void emission(GridView obs, int t, Eigen::VectorXd& out) const {
    std::vector<double> w(static_cast<std::size_t>(C_) * K_);
    emission_column(eps_, obs, t, K_, w);
    out.resize(static_cast<Eigen::Index>(S_));
    for (std::size_t s = 0; s < S_; ++s) {
      std::size_t rest = s;
      double e = 1.0;
      for (int c = 0; c < C_; ++c) {
        e *= w[static_cast<std::size_t>(c) * K_ + rest % K_];
        rest /= K_;
      }
      out[static_cast<Eigen::Index>(s)] = e;
    }
  }

 private:
  int C_;
  int K_;
  std::size_t S_ = 0;
  EmissionParams eps_;
  Eigen::VectorXd prior_;
  Eigen::MatrixXd dense_;
  std::vector<double> rows_;
};

inline ForwardLattice ffbs_forward(const JointModel& jm, GridView obs) {
  const int T = obs.steps;
  const auto S = static_cast<Eigen::Index>(jm.n_states());
  ForwardLattice lat;
  lat.alpha.resize(T, S);
  lat.log_norms.resize(static_cast<std::size_t>(T));
  Eigen::VectorXd pred = jm.prior(), em, a;
  for (int t = 0; t < T; ++t) {
    if (t > 0) jm.predict(lat.alpha.row(t - 1).transpose(), pred);
    jm.emission(obs, t, em);
    a = pred.cwiseProduct(em);
    const double z = a.sum();
    if (!(z > 0.0))
      throw NumericalError("forward recursion lost all mass at step " + std::to_string(t + 1) +
                           " (impossible observation)");
    lat.log_norms[static_cast<std::size_t>(t)] = std::log(z);
    lat.alpha.row(t) = (a / z).transpose();
  }
  return lat;
}

inline ForwardLattice ffbs_forward(const ModelParams& p, GridView obs,
                                   std::uint64_t cap = kDefaultJointCap) {
  return ffbs_forward(JointModel(p, cap), obs);
}

inline SamplerResult ffbs_backward_sample(const ForwardLattice& lat, const JointModel& jm, Rng& rng) {
  const int T = static_cast<int>(lat.alpha.rows());
  const int C = jm.n_chains();
  const std::size_t S = jm.n_states();
  SamplerResult res;
  res.path = StateGrid(C, T);
  res.log_lik = lat.log_lik();
  std::vector<double> w(S);
  std::vector<int> states(static_cast<std::size_t>(C));

  for (std::size_t s = 0; s < S; ++s) w[s] = lat.alpha(T - 1, static_cast<Eigen::Index>(s));
  std::size_t next = static_cast<std::size_t>(sample_categorical(w, rng));
  decode_joint(next, jm.n_latent(), states);
  for (int c = 0; c < C; ++c) res.path(c, T - 1) = states[c];

  for (int t = T - 2; t >= 0; --t) {
    for (std::size_t s = 0; s < S; ++s)
      w[s] = jm.transition(s, next) * lat.alpha(t, static_cast<Eigen::Index>(s));
    next = static_cast<std::size_t>(sample_categorical(w, rng));
    decode_joint(next, jm.n_latent(), states);
    for (int c = 0; c < C; ++c) res.path(c, t) = states[c];
  }
  return res;
}

}  // namespace mchmm
