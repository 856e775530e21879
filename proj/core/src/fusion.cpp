#include "flexmuse/fusion.hpp"

#include <cmath>

#include "flexmuse/error.hpp"

namespace flexmuse {

FusionParams FusionParams::init(std::size_t dim, Rng& rng, double scale) {
  FusionParams p;
  p.w_q.resize(dim);
  p.w_k.resize(dim);
  p.w_v.resize(dim);
  p.w_lambda.resize(dim);
  for (auto* w : {&p.w_q, &p.w_k, &p.w_v, &p.w_lambda}) {
    for (auto& x : *w) x = rng.normal() * scale;
  }
  return p;
}

FusionOutput fuse_forward(const Embedding& zv, const Vec& zt_gated, const FusionParams& params,
                          const FusionConfig& cfg, FusionCache* cache) {
  const std::size_t d = zv.dim();
  if (zt_gated.size() != d || params.dim() != d) {
    throw UsageError("fuse_forward: dimension mismatch");
  }
  const std::size_t L = cfg.attention_tokens;
  if (L == 0 || d % L != 0) {
    throw ConfigError("fuse_forward: attention_tokens " + std::to_string(L) +
                      " does not divide dim " + std::to_string(d));
  }
  const std::size_t dk = d / L;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  const Vec q = vec_hadamard(params.w_q, zv.vector);
  const Vec k = vec_hadamard(params.w_k, zt_gated);
  const Vec v = vec_hadamard(params.w_v, zt_gated);

  // Attention over L tokens of width dk. For L = 1 the softmax row is the
  // singleton {1} and z_a reduces to v.
  Vec attn(L * L, 0.0);
  Vec z_a(d, 0.0);
  for (std::size_t i = 0; i < L; ++i) {
    Vec scores(L);
    for (std::size_t j = 0; j < L; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < dk; ++c) s += q[i * dk + c] * k[j * dk + c];
      scores[j] = s * inv_sqrt_dk;
    }
    const Vec row = softmax(scores);
    for (std::size_t j = 0; j < L; ++j) {
      attn[i * L + j] = row[j];
      for (std::size_t c = 0; c < dk; ++c) z_a[i * dk + c] += row[j] * v[j * dk + c];
    }
  }

  // lambda_i = sigmoid((w_lambda . z_a) * zv_i); associativity collapses the
  // outer-product form of the score to a scalar times the visual row.
  const double score = vec_dot(params.w_lambda, z_a);
  Vec lambda(d);
  Vec z_f(d);
  for (std::size_t i = 0; i < d; ++i) {
    lambda[i] = sigmoid(score * zv.vector[i]);
    z_f[i] = (1.0 - lambda[i]) * z_a[i] + lambda[i] * zv.vector[i];
  }

  if (cache) {
    cache->valid = true;
    cache->tokens = L;
    cache->zv = zv.vector;
    cache->zt_gated = zt_gated;
    cache->q = q;
    cache->k = k;
    cache->v = v;
    cache->attn = attn;
    cache->z_a = z_a;
    cache->lambda = lambda;
    cache->lambda_score = score;
    cache->params = params;
  }

  FusionOutput out;
  out.z_a = z_a;
  out.lambda = std::move(lambda);
  out.z_f = std::move(z_f);
  out.attn_weights = std::move(attn);
  return out;
}

FusionGrads fuse_backward(const Vec& upstream_grad, const FusionCache& cache) {
  if (!cache.valid) throw UsageError("fuse_backward: missing forward cache");
  const std::size_t d = cache.zv.size();
  if (upstream_grad.size() != d) throw UsageError("fuse_backward: upstream grad dim mismatch");
  const std::size_t L = cache.tokens;
  const std::size_t dk = d / L;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  FusionGrads g;
  g.w_q.assign(d, 0.0);
  g.w_k.assign(d, 0.0);
  g.w_v.assign(d, 0.0);
  g.w_lambda.assign(d, 0.0);
  g.zv.assign(d, 0.0);
  g.zt_gated.assign(d, 0.0);

  // Through z_f = (1-lambda) z_a + lambda zv.
  Vec d_za(d, 0.0);
  double d_score = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double gi = upstream_grad[i];
    const double lam = cache.lambda[i];
    d_za[i] = gi * (1.0 - lam);
    g.zv[i] = gi * lam;
    const double d_lam = gi * (cache.zv[i] - cache.z_a[i]);
    const double d_pre = d_lam * lam * (1.0 - lam);  // pre = score * zv_i
    d_score += d_pre * cache.zv[i];
    g.zv[i] += d_pre * cache.lambda_score;
  }
  // score = w_lambda . z_a
  for (std::size_t i = 0; i < d; ++i) {
    g.w_lambda[i] = d_score * cache.z_a[i];
    d_za[i] += d_score * cache.params.w_lambda[i];
  }

  // Through attention.
  Vec d_q(d, 0.0), d_k(d, 0.0), d_v(d, 0.0);
  for (std::size_t i = 0; i < L; ++i) {
    Vec d_attn(L, 0.0);
    for (std::size_t j = 0; j < L; ++j) {
      const double a = cache.attn[i * L + j];
      double dot_da = 0.0;
      for (std::size_t c = 0; c < dk; ++c) {
        d_v[j * dk + c] += a * d_za[i * dk + c];
        dot_da += d_za[i * dk + c] * cache.v[j * dk + c];
      }
      d_attn[j] = dot_da;
    }
    // Softmax Jacobian for the row.
    double inner = 0.0;
    for (std::size_t j = 0; j < L; ++j) inner += cache.attn[i * L + j] * d_attn[j];
    for (std::size_t j = 0; j < L; ++j) {
      const double d_s = cache.attn[i * L + j] * (d_attn[j] - inner) * inv_sqrt_dk;
      for (std::size_t c = 0; c < dk; ++c) {
        d_q[i * dk + c] += d_s * cache.k[j * dk + c];
        d_k[j * dk + c] += d_s * cache.q[i * dk + c];
      }
    }
  }

  for (std::size_t i = 0; i < d; ++i) {
    g.w_q[i] = cache.zv[i] * d_q[i];
    g.zv[i] += cache.params.w_q[i] * d_q[i];
    g.w_k[i] = cache.zt_gated[i] * d_k[i];
    g.w_v[i] = cache.zt_gated[i] * d_v[i];
    g.zt_gated[i] = cache.params.w_k[i] * d_k[i] + cache.params.w_v[i] * d_v[i];
  }
  return g;
}

}  // namespace flexmuse
