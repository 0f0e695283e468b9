#pragma once

// Uniform front end over the four latent-path samplers.

#include <optional>
#include <string>
#include <variant>

#include "mchmm/fffbs.hpp"
#include "mchmm/ffbs.hpp"
#include "mchmm/iffbs.hpp"
#include "mchmm/particle.hpp"

namespace mchmm {

enum class SamplerKind { ffbs, iffbs, fffbs, pf };

inline std::string to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::ffbs: return "ffbs";
    case SamplerKind::iffbs: return "iffbs";
    case SamplerKind::fffbs: return "fffbs";
    case SamplerKind::pf: return "pf";
  }
  return "?";
}

inline SamplerKind parse_sampler(const std::string& s) {
  if (s == "ffbs") return SamplerKind::ffbs;
  if (s == "iffbs") return SamplerKind::iffbs;
  if (s == "fffbs") return SamplerKind::fffbs;
  if (s == "pf") return SamplerKind::pf;
  throw ConfigError("unknown sampler '" + s + "' (expected ffbs, iffbs, fffbs or pf)");
}

/// Whether the sampler yields a likelihood usable for cluster-label updates.
inline bool has_likelihood(SamplerKind k) { return k != SamplerKind::iffbs; }

struct SamplerOptions {
  SamplerKind kind = SamplerKind::fffbs;
  int particles = 10;
  double ess_frac = 0.5;
  std::uint64_t joint_cap = kDefaultJointCap;
  bool random_scan = false;
};

/// Forward-pass output of any likelihood-bearing sampler, kept so the backward
/// draw can follow the label update without a second forward pass.
struct ForwardState {
  std::variant<std::monostate, ForwardLattice, FactorizedLattice, ParticleSet> state;
  double log_lik = 0.0;
};

/// Sampler bound to one component's parameters, with per-parameter caches.
class ComponentSampler {
 public:
  ComponentSampler(const ModelParams& p, const SamplerOptions& opt) : params_(&p), opt_(opt) {
    switch (opt.kind) {
      case SamplerKind::ffbs: joint_.emplace(p, opt.joint_cap); break;
      case SamplerKind::fffbs:
      case SamplerKind::iffbs: factors_ = to_factors(p.beta); break;
      case SamplerKind::pf: break;
    }
  }

  const SamplerOptions& options() const { return opt_; }

  ForwardState forward(GridView obs, Rng& rng) const {
    ForwardState fs;
    switch (opt_.kind) {
      case SamplerKind::ffbs: {
        auto lat = ffbs_forward(*joint_, obs);
        fs.log_lik = lat.log_lik();
        fs.state = std::move(lat);
        break;
      }
      case SamplerKind::fffbs: {
        auto lat = fffbs_forward(*params_, factors_, obs);
        fs.log_lik = lat.log_lik();
        fs.state = std::move(lat);
        break;
      }
      case SamplerKind::pf: {
        auto ps = pf_run(*params_, obs, opt_.particles, opt_.ess_frac, rng);
        fs.log_lik = ps.log_lik;
        fs.state = std::move(ps);
        break;
      }
      case SamplerKind::iffbs:
        throw CapabilityError("iffbs has no marginal-likelihood estimate; use ffbs, fffbs or pf");
    }
    return fs;
  }

  SamplerResult backward(const ForwardState& fs, Rng& rng) const {
    if (auto* l = std::get_if<ForwardLattice>(&fs.state)) return ffbs_backward_sample(*l, *joint_, rng);
    if (auto* l = std::get_if<FactorizedLattice>(&fs.state))
      return fffbs_backward_sample(*l, *params_, factors_, rng);
    if (auto* ps = std::get_if<ParticleSet>(&fs.state)) return pf_sample_path(*ps, rng);
    throw CapabilityError("no forward state to sample from");
  }

  /// One latent-path draw. iffbs needs the current path and returns a Gibbs
  /// update of it; the other samplers ignore `current`.
  SamplerResult draw(GridView obs, const StateGrid* current, Rng& rng) const {
    if (opt_.kind == SamplerKind::iffbs) {
      if (current == nullptr) throw CapabilityError("iffbs needs a current latent path");
      auto sw = iffbs_sweep(*params_, obs, *current, rng, opt_.random_scan);
      SamplerResult r;
      r.path = std::move(sw.paths);
      r.log_lik = sw.approx_log_lik;
      return r;
    }
    return backward(forward(obs, rng), rng);
  }

 private:
  const ModelParams* params_;
  SamplerOptions opt_;
  std::optional<JointModel> joint_;
  FactorSet factors_;
};

/// Log marginal likelihood of one individual under the sampler's estimator.
inline double estimate_log_lik(const ModelParams& p, GridView obs, const SamplerOptions& opt, Rng& rng) {
  ComponentSampler s(p, opt);
  return s.forward(obs, rng).log_lik;
}

}  // namespace mchmm
