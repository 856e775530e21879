#pragma once

#include <cstdint>

#include "flexmuse/encoders.hpp"
#include "flexmuse/numerics.hpp"
#include "flexmuse/rng.hpp"

namespace flexmuse {

enum class GateMode { Sampled, FixedThreshold };

struct GateConfig {
  GateMode mode = GateMode::Sampled;
  double fixed_tau = 0.5;  // used only in FixedThreshold mode
  std::uint64_t seed = 0;
};

// One gating decision: the mask is all-or-nothing across the dimension.
struct GateDecision {
  double sigma = 0.0;
  double u = 0.0;
  bool masked = false;
  Vec mask;
};

// |Zt.Zv| / (|Zt||Zv|), in [0,1].
double semantic_sim(const Embedding& zt, const Embedding& zv);

struct GateResult {
  Vec gated;
  GateDecision decision;
};

// Masks the textual feature when similarity reaches the threshold. In
// Sampled mode u is drawn from rng; in FixedThreshold mode u := fixed_tau
// and rng is untouched. Ties (sigma == u) mask.
GateResult apply_gate(const Embedding& zt, const Embedding& zv, const GateConfig& cfg, Rng& rng);

}  // namespace flexmuse
