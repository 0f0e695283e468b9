#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace mchmm;

namespace {

ModelParams identity_emissions(ModelParams p) {
  for (auto& m : p.eps.matrices) m = Eigen::MatrixXd::Identity(p.n_latent(), p.n_latent());
  return p;
}

/// Chain c of p as a one-chain model (valid when p is uncoupled).
ModelParams single_chain(const ModelParams& p, int c) {
  ModelParams q = uniform_params(1, p.n_latent(), p.n_obs());
  q.eta.probs[0] = p.eta.probs[c];
  q.eps.matrices[0] = p.eps.matrices[c];
  q.beta.target(0).set_intercept(p.beta.intercept(c));
  return q;
}

/// p with chains relabeled: old chain c becomes perm[c].
ModelParams permute_chains(const ModelParams& p, const std::vector<int>& perm) {
  const int C = p.n_chains(), K = p.n_latent();
  ModelParams q = uniform_params(C, K, p.n_obs());
  for (int c = 0; c < C; ++c) {
    q.eta.probs[perm[c]] = p.eta.probs[c];
    q.eps.matrices[perm[c]] = p.eps.matrices[c];
    q.beta.target(perm[c]).set_intercept(p.beta.intercept(c));
    for (int s = 0; s < C; ++s)
      if (s != c)
        for (int k = 1; k < K; ++k) q.beta.target(perm[c]).set_effect(perm[s], k, p.beta.effect(c, s, k));
  }
  return q;
}

}  // namespace

TEST(Ffbs, IdentityEmissionsPinTheState) {
  Rng rng(1);
  const ModelParams p = identity_emissions(oracle::random_params(2, 3, 3, rng));
  const StateGrid obs = oracle::random_obs(2, 4, 3, rng);
  const JointModel jm(p);
  const ForwardLattice lat = ffbs_forward(jm, obs.view());
  for (int t = 0; t < 4; ++t) {
    const std::vector<int> col{obs(0, t), obs(1, t)};
    EXPECT_NEAR(lat.alpha(t, static_cast<Eigen::Index>(encode_joint(col, 3))), 1.0, 1e-12);
  }
  EXPECT_NEAR(lat.log_lik(), std::log(oracle::enumerate(p, obs).likelihood), 1e-10);
  for (int r = 0; r < 20; ++r) EXPECT_EQ(ffbs_backward_sample(lat, jm, rng).path.values, obs.values);
}

TEST(Ffbs, UniformModelLikelihood) {
  Rng rng(2);
  const int C = 3, K = 2, L = 4, T = 6;
  const ModelParams p = uniform_params(C, K, L);
  const StateGrid obs = oracle::random_obs(C, T, L, rng);
  EXPECT_NEAR(ffbs_forward(p, obs.view()).log_lik(), -T * C * std::log(static_cast<double>(L)), 1e-12);
}

TEST(Ffbs, LikelihoodMatchesEnumeration) {
  Rng rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    const int K = 2 + rep % 2;
    const ModelParams p = oracle::random_params(2, K, 3, rng);
    const StateGrid obs = oracle::random_obs(2, K == 2 ? 4 : 3, 3, rng, 0.2);
    EXPECT_NEAR(ffbs_forward(p, obs.view()).log_lik(), std::log(oracle::enumerate(p, obs).likelihood), 1e-10);
  }
}

TEST(Ffbs, PathDrawsFollowThePosterior) {
  Rng rng(4);
  const ModelParams p = oracle::random_params(2, 2, 2, rng);
  const StateGrid obs = oracle::random_obs(2, 3, 2, rng);
  const auto post = oracle::enumerate(p, obs).posterior();
  const JointModel jm(p);
  const ForwardLattice lat = ffbs_forward(jm, obs.view());
  std::vector<double> freq(post.size(), 0.0);
  const int n = 40000;
  for (int i = 0; i < n; ++i) freq[oracle::encode_path(ffbs_backward_sample(lat, jm, rng).path, 2)] += 1.0 / n;
  EXPECT_LT(oracle::total_variation(freq, post), 0.03);
}

TEST(Ffbs, SingleStepDrawsFromAlpha) {
  Rng rng(5);
  const ModelParams p = oracle::random_params(2, 2, 2, rng);
  const StateGrid obs = oracle::random_obs(2, 1, 2, rng);
  const JointModel jm(p);
  const ForwardLattice lat = ffbs_forward(jm, obs.view());
  std::vector<double> freq(4, 0.0), alpha(4);
  for (int s = 0; s < 4; ++s) alpha[s] = lat.alpha(0, s);
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const StateGrid g = ffbs_backward_sample(lat, jm, rng).path;
    const std::vector<int> col{g(0, 0), g(1, 0)};
    freq[encode_joint(col, 2)] += 1.0 / n;
  }
  EXPECT_LT(oracle::total_variation(freq, alpha), 0.02);
}

TEST(Ffbs, ChainRelabelingLeavesLikelihoodUnchanged) {
  Rng rng(6);
  const ModelParams p = oracle::random_params(3, 2, 2, rng);
  const StateGrid obs = oracle::random_obs(3, 5, 2, rng, 0.1);
  const std::vector<int> perm{2, 0, 1};
  const ModelParams q = permute_chains(p, perm);
  StateGrid obs_q(3, 5);
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 5; ++t) obs_q(perm[c], t) = obs(c, t);
  EXPECT_NEAR(ffbs_forward(p, obs.view()).log_lik(), ffbs_forward(q, obs_q.view()).log_lik(), 1e-11);
}

TEST(Ffbs, CapExceededIsCapabilityError) {
  const ModelParams p = uniform_params(5, 4, 2);
  EXPECT_THROW(JointModel(p, 512), CapabilityError);
}

TEST(Iffbs, SingleChainIsExactFfbs) {
  Rng rng(7);
  const ModelParams p = oracle::random_params(1, 3, 2, rng);
  const StateGrid obs = oracle::random_obs(1, 6, 2, rng, 0.2);
  const StateGrid cur(1, 6, 0);
  const ChainLattice lat = iffbs_forward(p, obs.view(), 0, cur);
  const ForwardLattice ex = ffbs_forward(p, obs.view());
  EXPECT_LT((lat.alpha - ex.alpha).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(lat.log_lik(), ex.log_lik(), 1e-10);
  EXPECT_NEAR(iffbs_sweep(p, obs.view(), cur, rng).approx_log_lik, ex.log_lik(), 1e-10);
}

TEST(Iffbs, UncoupledIgnoresOtherChains) {
  Rng rng(8);
  const ModelParams p = oracle::random_params(3, 2, 3, rng, 0.0);
  const StateGrid obs = oracle::random_obs(3, 5, 3, rng, 0.1);
  StateGrid obs1(1, 5);
  for (int t = 0; t < 5; ++t) obs1(0, t) = obs(1, t);
  const ForwardLattice ref = ffbs_forward(single_chain(p, 1), obs1.view());
  for (int rep = 0; rep < 4; ++rep) {
    const StateGrid other = oracle::random_obs(3, 5, 2, rng);
    const ChainLattice lat = iffbs_forward(p, obs.view(), 1, other);
    EXPECT_LT((lat.alpha - ref.alpha).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Iffbs, ForwardMatchesConditionalEnumeration) {
  Rng rng(9);
  const int K = 2, C = 2, T = 3;
  for (int rep = 0; rep < 5; ++rep) {
    const ModelParams p = oracle::random_params(C, K, 2, rng, 1.5);
    const StateGrid obs = oracle::random_obs(C, T, 2, rng);
    const StateGrid fixed = oracle::random_obs(C, T, K, rng);
    for (int c = 0; c < C; ++c) {
      const ChainLattice lat = iffbs_forward(p, obs.view(), c, fixed);
      for (int t = 0; t < T; ++t) {
        // p(pi_t^c | other chains up to t+1, x^c up to t), summing chain c's paths over 0..t.
        std::vector<double> m(K, 0.0);
        std::size_t n_paths = 1;
        for (int u = 0; u <= t; ++u) n_paths *= K;
        for (std::size_t idx = 0; idx < n_paths; ++idx) {
          StateGrid g = fixed;
          std::size_t rest = idx;
          for (int u = 0; u <= t; ++u) {
            g(c, u) = static_cast<int>(rest % K);
            rest /= K;
          }
          double w = 1.0;
          std::vector<int> prev(C);
          for (int u = 0; u <= std::min(t + 1, T - 1); ++u) {
            for (int s = 0; s < C; ++s) {
              if (s == c && u > t) continue;
              w *= u == 0 ? p.eta.probs[s][g(s, 0)] : oracle::transition_prob(p, prev, s, g(s, u));
              if (s == c && obs(c, u) != kMissing) w *= p.eps.matrices[c](g(c, u), obs(c, u));
            }
            g.column(u, prev);
          }
          m[g(c, t)] += w;
        }
        const double z = m[0] + m[1];
        for (int k = 0; k < K; ++k) EXPECT_NEAR(lat.alpha(t, k), m[k] / z, 1e-10) << "t=" << t << " c=" << c;
      }
    }
  }
}

TEST(Iffbs, IdentityEmissionsRecoverObservations) {
  Rng rng(10);
  const ModelParams p = identity_emissions(oracle::random_params(3, 2, 2, rng));
  const StateGrid obs = oracle::random_obs(3, 5, 2, rng);
  const SweepResult first = iffbs_sweep(p, obs.view(), StateGrid(3, 5, 0), rng);
  EXPECT_EQ(first.paths.values, obs.values);
  const SweepResult r = iffbs_sweep(p, obs.view(), first.paths, rng);
  EXPECT_EQ(r.paths.values, obs.values);
  // With degenerate posteriors the per-chain normalizers multiply to the exact likelihood.
  EXPECT_NEAR(r.approx_log_lik, std::log(oracle::enumerate(p, obs).likelihood), 1e-10);
}

TEST(Iffbs, GibbsChainTargetsThePosterior) {
  Rng rng(11);
  const ModelParams p = oracle::random_params(2, 2, 2, rng);
  const StateGrid obs = oracle::random_obs(2, 3, 2, rng);
  const auto post = oracle::enumerate(p, obs).posterior();
  StateGrid cur(2, 3, 0);
  for (int i = 0; i < 200; ++i) cur = iffbs_sweep(p, obs.view(), cur, rng).paths;
  std::vector<double> freq(post.size(), 0.0);
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    cur = iffbs_sweep(p, obs.view(), cur, rng, i % 2 == 1).paths;
    freq[oracle::encode_path(cur, 2)] += 1.0 / n;
  }
  EXPECT_LT(oracle::total_variation(freq, post), 0.03);
}
