#pragma once

#include <cstdint>

#include "flexmuse/encoders.hpp"
#include "flexmuse/numerics.hpp"
#include "flexmuse/rng.hpp"

namespace flexmuse {

// Element-wise trainable maps, one weight row per projection.
struct FusionParams {
  Vec w_q, w_k, w_v, w_lambda;

  std::size_t dim() const { return w_q.size(); }
  static FusionParams init(std::size_t dim, Rng& rng, double scale = 0.1);
};

struct FusionConfig {
  // Number of attention tokens L; the feature row is reshaped to L x (D/L).
  // L = 1 is the literal single-token form where attention degenerates and
  // the aggregated feature equals the value row exactly.
  std::size_t attention_tokens = 1;
};

struct FusionOutput {
  Vec z_a;           // aggregated feature
  Vec lambda;        // per-coordinate mixing weight, strictly in (0,1)
  Vec z_f;           // fused feature
  Vec attn_weights;  // row-major L x L attention rows
};

// Cached forward state consumed by fuse_backward.
struct FusionCache {
  bool valid = false;
  std::size_t tokens = 1;
  Vec zv, zt_gated;
  Vec q, k, v;
  Vec attn;  // row-major L x L
  Vec z_a, lambda;
  double lambda_score = 0.0;  // dot(w_lambda, z_a)
  FusionParams params;
};

FusionOutput fuse_forward(const Embedding& zv, const Vec& zt_gated, const FusionParams& params,
                          const FusionConfig& cfg, FusionCache* cache = nullptr);

struct FusionGrads {
  Vec w_q, w_k, w_v, w_lambda;
  Vec zv, zt_gated;
};

FusionGrads fuse_backward(const Vec& upstream_grad, const FusionCache& cache);

}  // namespace flexmuse
