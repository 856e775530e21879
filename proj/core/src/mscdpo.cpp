#include "flexmuse/mscdpo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "flexmuse/error.hpp"

namespace flexmuse {

std::vector<SemanticUnit> split_semantic_units(const MuseDocument& doc) {
  if (doc.units.empty()) {
    throw DataError("split_semantic_units: document '" + doc.doc_id + "' has no image units");
  }
  std::vector<SemanticUnit> out;
  out.reserve(doc.units.size());
  for (std::size_t i = 0; i < doc.units.size(); ++i) {
    out.push_back({i, doc.units[i].image_id, doc.units[i].text});
  }
  return out;
}

namespace {

// Seeded subsampling used by rejected_cap: trims the per-chosen rejected
// list without disturbing pair order.
template <class T>
void subsample(std::vector<T>& items, std::size_t cap, Rng& rng) {
  while (items.size() > cap) items.erase(items.begin() + static_cast<std::ptrdiff_t>(rng.below(items.size())));
}

}  // namespace

std::vector<PreferencePair> build_pref_pairs(const MuseDocument& reference,
                                             const std::vector<MuseDocument>& corpus,
                                             const DPOConfig& cfg, std::uint64_t seed,
                                             PairBuildStats* stats) {
  const auto units = split_semantic_units(reference);
  std::vector<PreferencePair> pairs;
  const std::uint64_t doc_hash = fnv1a64(reference.doc_id.data(), reference.doc_id.size());
  Rng rng(seed ^ doc_hash);

  if (cfg.mode == DpoMode::Msc) {
    if (units.size() < 2) {
      if (stats) ++stats->skipped_single_unit_docs;
      return pairs;
    }
    for (const auto& chosen : units) {
      std::vector<const SemanticUnit*> rejected;
      for (const auto& other : units) {
        if (other.unit_index == chosen.unit_index) continue;
        if (other.text == chosen.text) {
          if (stats) ++stats->dropped_equal_pairs;
          continue;
        }
        rejected.push_back(&other);
      }
      if (cfg.rejected_cap) subsample(rejected, *cfg.rejected_cap, rng);
      for (const auto* r : rejected) {
        PreferencePair p;
        p.prompt_topic = reference.topic;
        p.prompt_image_id = chosen.image_id;
        p.chosen = chosen.text;
        p.rejected = r->text;
        p.doc_id = reference.doc_id;
        p.chosen_unit_index = chosen.unit_index;
        p.rejected_unit_index = r->unit_index;
        pairs.push_back(std::move(p));
      }
    }
    return pairs;
  }

  // Conventional mode: one rejected chunk from a different document.
  std::vector<const MuseDocument*> others;
  for (const auto& d : corpus) {
    if (d.doc_id != reference.doc_id) others.push_back(&d);
  }
  if (others.empty()) {
    throw ConfigError("build_pref_pairs: conventional mode needs a corpus with >= 2 documents");
  }
  for (const auto& chosen : units) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const MuseDocument* src = others[rng.below(others.size())];
      const auto& unit = src->units[rng.below(src->units.size())];
      if (unit.text == chosen.text) {
        if (stats && attempt == 99) ++stats->dropped_equal_pairs;
        continue;
      }
      PreferencePair p;
      p.prompt_topic = reference.topic;
      p.prompt_image_id = chosen.image_id;
      p.chosen = chosen.text;
      p.rejected = unit.text;
      p.doc_id = reference.doc_id;
      p.chosen_unit_index = chosen.unit_index;
      p.rejected_doc_id = src->doc_id;
      pairs.push_back(std::move(p));
      break;
    }
  }
  return pairs;
}

std::vector<PreferencePair> build_pref_pairs_corpus(const std::vector<MuseDocument>& corpus,
                                                    const DPOConfig& cfg, std::uint64_t seed,
                                                    PairBuildStats* stats) {
  std::vector<PreferencePair> all;
  for (const auto& doc : corpus) {
    auto pairs = build_pref_pairs(doc, corpus, cfg, seed, stats);
    all.insert(all.end(), pairs.begin(), pairs.end());
  }
  return all;
}

void save_pref_pairs(const std::vector<PreferencePair>& pairs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pair list: " + path);
  for (const auto& p : pairs) {
    nlohmann::json j;
    j["doc_id"] = p.doc_id;
    j["chosen_unit_index"] = p.chosen_unit_index;
    if (p.rejected_doc_id.empty()) {
      j["rejected_unit_index"] = p.rejected_unit_index;
    } else {
      j["rejected_doc_id"] = p.rejected_doc_id;
    }
    j["prompt_image_id"] = p.prompt_image_id;
    out << j.dump() << '\n';
  }
}

namespace {

std::vector<int> tokens_with_eos(const std::string& text, const Vocab& vocab) {
  std::vector<int> toks = tokenize(text, vocab);
  toks.push_back(kEos);
  return toks;
}

}  // namespace

double dpo_loss_from_ratios(double delta_w, double delta_l, double beta) {
  const double h = beta * (delta_w - delta_l);
  // -log sigmoid(h), computed in the softplus form for stability.
  return h >= 0.0 ? std::log1p(std::exp(-h)) : -h + std::log1p(std::exp(h));
}

namespace {

// Shared body of dpo_loss and train_step_dpo: parameter gradients add into
// acc.params (acc.d_prefix is overwritten), so batch loops reuse one
// accumulator instead of allocating per pair.
double dpo_loss_impl(const PreferencePair& pair, const DpoModelState& policy,
                     const DpoModelState& reference, const DpoContext& ctx, const DPOConfig& cfg,
                     Rng& rng, LMGradients& acc, FusionGrads& fusion_grads, double& margin) {
  if (!ctx.store || !ctx.vocab) throw UsageError("dpo_loss: context missing store or vocab");
  const std::size_t dim = ctx.store->dim();
  const Embedding zt =
      toy_encode(pair.prompt_topic, Modality::Text, dim, ctx.encoder_seed);
  const Embedding& zv = ctx.store->lookup(pair.prompt_image_id);

  // One gate decision per pair, shared across the policy and reference
  // sides so that policy == reference pins the loss at ln 2.
  GateDecision decision;
  FusionCache policy_cache;
  const Vec prefix_policy = fused_prefix(zt, zv, policy.fusion, ctx.fusion_cfg, ctx.gate, rng,
                                         &policy_cache, &decision);
  Vec gated_replay = decision.masked ? Vec(dim, 0.0) : zt.vector;
  const Vec prefix_ref =
      fuse_forward(zv, gated_replay, reference.fusion, ctx.fusion_cfg).z_f;

  const std::vector<int> chosen = tokens_with_eos(pair.chosen, *ctx.vocab);
  const std::vector<int> rejected = tokens_with_eos(pair.rejected, *ctx.vocab);

  const double lp_pol_w = sequence_logprob(prefix_policy, chosen, policy.lm);
  const double lp_pol_l = sequence_logprob(prefix_policy, rejected, policy.lm);
  const double lp_ref_w = sequence_logprob(prefix_ref, chosen, reference.lm);
  const double lp_ref_l = sequence_logprob(prefix_ref, rejected, reference.lm);

  const double h = cfg.beta * ((lp_pol_w - lp_ref_w) - (lp_pol_l - lp_ref_l));
  margin = h;

  // dloss/dh = sigmoid(h) - 1; chain through the two policy log-probs.
  const double dh = sigmoid(h) - 1.0;
  acc.d_prefix.assign(policy.lm.cfg.feature_dim, 0.0);
  sequence_logprob_backward(prefix_policy, chosen, policy.lm, dh * cfg.beta, acc);
  sequence_logprob_backward(prefix_policy, rejected, policy.lm, -dh * cfg.beta, acc);

  fusion_grads = fuse_backward(acc.d_prefix, policy_cache);
  return dpo_loss_from_ratios(lp_pol_w - lp_ref_w, lp_pol_l - lp_ref_l, cfg.beta);
}

}  // namespace

DpoLossResult dpo_loss(const PreferencePair& pair, const DpoModelState& policy,
                       const DpoModelState& reference, const DpoContext& ctx,
                       const DPOConfig& cfg, Rng& rng) {
  DpoLossResult out;
  out.lm_grads.params = LMParams::zeros_like(policy.lm);
  out.loss = dpo_loss_impl(pair, policy, reference, ctx, cfg, rng, out.lm_grads, out.fusion_grads,
                           out.margin);
  return out;
}

DpoStepMetrics train_step_dpo(const std::vector<PreferencePair>& batch, DpoModelState& policy,
                              const DpoModelState& reference, const DpoContext& ctx,
                              const DPOConfig& cfg, double lr, double clip_norm, Rng& rng) {
  if (batch.empty()) throw UsageError("train_step_dpo: empty batch");

  LMGradients acc;
  acc.params = LMParams::zeros_like(policy.lm);
  Vec fq(policy.fusion.dim(), 0.0), fk = fq, fv = fq, fl = fq;
  DpoStepMetrics m;

  for (const auto& pair : batch) {
    FusionGrads fg;
    double margin = 0.0;
    m.mean_loss += dpo_loss_impl(pair, policy, reference, ctx, cfg, rng, acc, fg, margin);
    m.mean_margin += margin;
    if (cfg.train_fusion) {
      for (std::size_t i = 0; i < fq.size(); ++i) {
        fq[i] += fg.w_q[i];
        fk[i] += fg.w_k[i];
        fv[i] += fg.w_v[i];
        fl[i] += fg.w_lambda[i];
      }
    }
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  m.mean_loss *= inv_n;
  m.mean_margin *= inv_n;
  visit_param_blocks(acc.params, [&](const std::string&, Vec& v) {
    for (auto& x : v) x *= inv_n;
  });
  for (auto* v : {&fq, &fk, &fv, &fl}) {
    for (auto& x : *v) x *= inv_n;
  }

  // Joint clip over LM and fusion gradients.
  double sq = grad_global_norm(acc.params);
  sq = sq * sq;
  for (auto* v : {&fq, &fk, &fv, &fl}) {
    for (double x : *v) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  double scale = lr;
  if (clip_norm > 0.0 && norm > clip_norm) scale = lr * clip_norm / norm;

  apply_sgd_step(policy.lm, acc.params, scale, 0.0);
  if (cfg.train_fusion) {
    for (std::size_t i = 0; i < fq.size(); ++i) {
      policy.fusion.w_q[i] -= scale * fq[i];
      policy.fusion.w_k[i] -= scale * fk[i];
      policy.fusion.w_v[i] -= scale * fv[i];
      policy.fusion.w_lambda[i] -= scale * fl[i];
    }
  }
  return m;
}

}  // namespace flexmuse
