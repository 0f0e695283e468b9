#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mchmm/errors.hpp"

namespace mchmm {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Named stream tags. Every random draw in the library comes from a stream
/// derived from the root seed and a path of these tags plus indices.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kParams = 2;
inline constexpr std::uint64_t kLatent = 3;
inline constexpr std::uint64_t kLabels = 4;
inline constexpr std::uint64_t kSimulate = 5;
inline constexpr std::uint64_t kFolds = 6;
inline constexpr std::uint64_t kPredictive = 7;
inline constexpr std::uint64_t kBench = 8;
inline constexpr std::uint64_t kEval = 9;
inline constexpr std::uint64_t kDiagnostics = 10;
}  // namespace stream

/// Deterministic child stream: same (seed, path) always gives the same engine,
/// independent of thread scheduling.
inline Rng make_stream(std::uint64_t seed,
                       std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(splitmix64(h)),
                    static_cast<std::uint32_t>(splitmix64(h) >> 32)};
  return Rng(seq);
}

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double std_normal(Rng& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  return d(rng);
}

inline double gamma_draw(double shape, double rate, Rng& rng) {
  std::gamma_distribution<double> d(shape, 1.0 / rate);
  return d(rng);
}

/// Inverse-gamma with density proportional to x^{-shape-1} exp(-rate / x).
inline double inv_gamma_draw(double shape, double rate, Rng& rng) {
  return 1.0 / gamma_draw(shape, rate, rng);
}

/// Index drawn with probability proportional to the nonnegative weights.
inline int sample_categorical(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0) || !std::isfinite(total))
    throw NumericalError("categorical draw with zero or non-finite total mass");
  double u = uniform01(rng) * total;
  int last_positive = -1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    u -= weights[i];
    if (u < 0.0) return static_cast<int>(i);
  }
  return last_positive;
}

/// Categorical draw from unnormalized log weights (max-subtracted).
inline int sample_log_categorical(std::span<const double> log_weights, Rng& rng) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : log_weights) mx = std::max(mx, v);
  if (!std::isfinite(mx)) throw NumericalError("log-categorical draw with no finite weight");
  std::vector<double> w(log_weights.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i] - mx);
  return sample_categorical(w, rng);
}

inline Eigen::VectorXd dirichlet_draw(const Eigen::VectorXd& alpha, Rng& rng) {
  Eigen::VectorXd g(alpha.size());
  for (Eigen::Index i = 0; i < alpha.size(); ++i) g[i] = gamma_draw(alpha[i], 1.0, rng);
  double s = g.sum();
  if (!(s > 0.0)) {
    // All gammas underflowed (tiny concentrations): put the mass on the largest alpha.
    Eigen::Index best;
    alpha.maxCoeff(&best);
    g.setZero();
    g[best] = 1.0;
    return g;
  }
  return g / s;
}

}  // namespace mchmm
