#include "flexmuse/msagate.hpp"

#include <cmath>

#include "flexmuse/error.hpp"

namespace flexmuse {

double semantic_sim(const Embedding& zt, const Embedding& zv) {
  if (zt.dim() != zv.dim()) {
    throw UsageError("semantic_sim: dimension mismatch (" + std::to_string(zt.dim()) + " vs " +
                     std::to_string(zv.dim()) + ")");
  }
  const double s =
      std::abs(vec_dot(zt.vector, zv.vector)) / (vec_norm(zt.vector) * vec_norm(zv.vector));
  // Clamp rounding excursions above 1.
  return s > 1.0 ? 1.0 : s;
}

GateResult apply_gate(const Embedding& zt, const Embedding& zv, const GateConfig& cfg, Rng& rng) {
  GateResult r;
  r.decision.sigma = semantic_sim(zt, zv);
  r.decision.u = cfg.mode == GateMode::Sampled ? rng.uniform_open() : cfg.fixed_tau;
  r.decision.masked = r.decision.sigma >= r.decision.u;

  const std::size_t d = zt.dim();
  r.decision.mask.assign(d, r.decision.masked ? 0.0 : 1.0);
  r.gated = r.decision.masked ? Vec(d, 0.0) : zt.vector;
  return r;
}

}  // namespace flexmuse
