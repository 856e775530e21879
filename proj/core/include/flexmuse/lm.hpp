#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "flexmuse/numerics.hpp"
#include "flexmuse/rng.hpp"

namespace flexmuse {

// Reserved symbols sit at fixed indices 0-3.
enum ReservedToken : int { kPad = 0, kBos = 1, kEos = 2, kImg = 3 };

struct Vocab {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;

  static Vocab build(const std::vector<std::string>& symbols);
  std::size_t size() const { return tokens.size(); }
  int id_of(const std::string& tok) const;  // -1 when absent
};

struct TokenizeStats {
  std::size_t unknown_dropped = 0;
};

// CJK codepoints segment character-wise; Latin runs split on whitespace.
// Unknown symbols are dropped (counted in stats). Total function.
std::vector<int> tokenize(const std::string& text, const Vocab& vocab,
                          TokenizeStats* stats = nullptr);
std::string detokenize(const std::vector<int>& ids, const Vocab& vocab);

struct LMConfig {
  std::size_t feature_dim = 16;  // D of the fused prefix
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t max_len = 256;
};

struct LayerParams {
  Vec ln1_g, ln1_b;
  Vec wq, wk, wv, wo;  // d_model x d_model, row-major (out x in)
  Vec ln2_g, ln2_b;
  Vec w1, b1;  // d_ff x d_model, d_ff
  Vec w2, b2;  // d_model x d_ff, d_model
};

struct LMParams {
  LMConfig cfg;
  Vec tok_emb;    // vocab x d_model
  Vec pos_emb;    // max_len x d_model
  Vec prefix_w;   // d_model x feature_dim
  std::vector<LayerParams> layers;
  Vec lnf_g, lnf_b;
  Vec out_w;  // vocab x d_model, zero-initialized so untrained logits are uniform

  static LMParams init(const LMConfig& cfg, Rng& rng, double scale = 0.02);
  static LMParams zeros_like(const LMParams& p);
};

// Visits every parameter block in declaration order; shared by the
// checkpoint writer, the optimizer, and the gradcheck harness.
template <class Params, class Fn>
void visit_param_blocks(Params& p, Fn&& fn) {
  fn("tok_emb", p.tok_emb);
  fn("pos_emb", p.pos_emb);
  fn("prefix_w", p.prefix_w);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& L = p.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    fn(pre + "ln1_g", L.ln1_g);
    fn(pre + "ln1_b", L.ln1_b);
    fn(pre + "wq", L.wq);
    fn(pre + "wk", L.wk);
    fn(pre + "wv", L.wv);
    fn(pre + "wo", L.wo);
    fn(pre + "ln2_g", L.ln2_g);
    fn(pre + "ln2_b", L.ln2_b);
    fn(pre + "w1", L.w1);
    fn(pre + "b1", L.b1);
    fn(pre + "w2", L.w2);
    fn(pre + "b2", L.b2);
  }
  fn("lnf_g", p.lnf_g);
  fn("lnf_b", p.lnf_b);
  fn("out_w", p.out_w);
}

struct LMForwardCache;

// Row t is the log-probability distribution of the token following
// tokens[0..t-1], conditioned on the projected prefix; tokens.size()+1 rows.
std::vector<Vec> lm_forward(const Vec& prefix, const std::vector<int>& tokens,
                            const LMParams& params, LMForwardCache* cache = nullptr);

double sequence_logprob(const Vec& prefix, const std::vector<int>& tokens,
                        const LMParams& params);

struct LMGradients {
  LMParams params;  // same shapes, holds d/dtheta
  Vec d_prefix;     // d/d z_f, feature_dim
};

struct SftResult {
  double loss = 0.0;
  LMGradients grads;
};

// Mean per-token NLL with teacher forcing.
SftResult sft_loss(const Vec& prefix, const std::vector<int>& tokens, const LMParams& params);

// Like sft_loss but adds parameter gradients into acc.params and overwrites
// acc.d_prefix, avoiding a fresh allocation per example in batch loops.
double sft_loss_accumulate(const Vec& prefix, const std::vector<int>& tokens,
                           const LMParams& params, LMGradients& acc);

// Gradients of sum_t weight * log p(tokens[t] | ...), the building block
// shared by sft_loss and the preference-loss backward.
void sequence_logprob_backward(const Vec& prefix, const std::vector<int>& tokens,
                               const LMParams& params, double weight, LMGradients& acc);

struct DecodeConfig {
  std::size_t max_len = 64;
  double temperature = 1.0;  // 0 selects greedy argmax decoding
};

std::vector<int> sample_generate(const Vec& prefix, const LMParams& params, Rng& rng,
                                 const DecodeConfig& cfg);

// Global L2 clipping followed by a plain gradient-descent step.
void apply_sgd_step(LMParams& params, const LMParams& grads, double lr, double clip_norm);
double grad_global_norm(const LMParams& grads);

}  // namespace flexmuse
