#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flexmuse/fusion.hpp"
#include "flexmuse/lm.hpp"
#include "flexmuse/pipeline.hpp"

namespace flexmuse {

struct SemanticUnit {
  std::size_t unit_index = 0;
  std::string image_id;
  std::string text;
};

struct PreferencePair {
  std::string prompt_topic;
  std::string prompt_image_id;
  std::string chosen;
  std::string rejected;
  std::string doc_id;
  std::size_t chosen_unit_index = 0;
  // msc mode: index of the rejected chunk within doc_id.
  std::size_t rejected_unit_index = 0;
  // conventional mode: provenance of the cross-document rejected chunk.
  std::string rejected_doc_id;
};

enum class DpoMode { Msc, Conventional };

struct DPOConfig {
  double beta = 0.1;
  DpoMode mode = DpoMode::Msc;
  std::optional<std::size_t> rejected_cap;
  bool train_fusion = true;
};

// One unit per (image, following-text) block, order preserved. The same
// chunking applies to generated results and references.
std::vector<SemanticUnit> split_semantic_units(const MuseDocument& doc);

struct PairBuildStats {
  std::size_t skipped_single_unit_docs = 0;
  std::size_t dropped_equal_pairs = 0;
};

// msc mode: for each chunk, every other chunk of the same reference is a
// rejected sample: k(k-1) pairs. Conventional mode: one seeded rejected
// chunk drawn from another document: k pairs.
std::vector<PreferencePair> build_pref_pairs(const MuseDocument& reference,
                                             const std::vector<MuseDocument>& corpus,
                                             const DPOConfig& cfg, std::uint64_t seed,
                                             PairBuildStats* stats = nullptr);

std::vector<PreferencePair> build_pref_pairs_corpus(const std::vector<MuseDocument>& corpus,
                                                    const DPOConfig& cfg, std::uint64_t seed,
                                                    PairBuildStats* stats = nullptr);

// Audit export: one line-record per pair.
void save_pref_pairs(const std::vector<PreferencePair>& pairs, const std::string& path);

struct DpoModelState {
  LMParams lm;
  FusionParams fusion;
};

struct DpoContext {
  const EmbeddingStore* store = nullptr;
  const Vocab* vocab = nullptr;
  GateSettings gate;
  FusionConfig fusion_cfg;
  std::uint64_t encoder_seed = 0;
};

struct DpoLossResult {
  double loss = 0.0;
  double margin = 0.0;  // beta * (chosen log-ratio - rejected log-ratio)
  LMGradients lm_grads;
  FusionGrads fusion_grads;
};

// -log psi(beta * (delta_w - delta_l)), the scalar core of dpo_loss.
double dpo_loss_from_ratios(double delta_w, double delta_l, double beta);

// Standard sigmoid preference loss over policy/reference log-ratios; the
// prompt prefix runs through gate and fusion with policy-side fusion
// parameters, so gradients reach FusionParams as well.
DpoLossResult dpo_loss(const PreferencePair& pair, const DpoModelState& policy,
                       const DpoModelState& reference, const DpoContext& ctx,
                       const DPOConfig& cfg, Rng& rng);

struct DpoStepMetrics {
  double mean_loss = 0.0;
  double mean_margin = 0.0;
};

// Averages the batch loss, clips the combined gradient norm at clip_norm,
// and applies one plain gradient-descent step to the policy.
DpoStepMetrics train_step_dpo(const std::vector<PreferencePair>& batch, DpoModelState& policy,
                              const DpoModelState& reference, const DpoContext& ctx,
                              const DPOConfig& cfg, double lr, double clip_norm, Rng& rng);

}  // namespace flexmuse
