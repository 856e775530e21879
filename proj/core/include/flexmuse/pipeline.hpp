#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flexmuse/checkpoint.hpp"
#include "flexmuse/encoders.hpp"
#include "flexmuse/fusion.hpp"
#include "flexmuse/lm.hpp"
#include "flexmuse/msagate.hpp"

namespace flexmuse {

// One (topic, image) conditioning pair.
struct AnchorPair {
  std::string topic;
  std::string image_id;
  Embedding topic_embedding;
  Embedding image_embedding;
};

// The n-element input set: one topic repeated against n visual anchors.
struct InputSet {
  std::vector<AnchorPair> anchors;
};

struct MuseUnit {
  std::string image_id;
  std::string text;
};

struct MuseDocument {
  std::string doc_id;
  std::string topic;
  std::vector<MuseUnit> units;
};

// Seam for a text-to-image backend: given a topic embedding, registers n
// image embeddings in the store and returns their ids.
class VisualAnchorProvider {
 public:
  virtual ~VisualAnchorProvider() = default;
  virtual std::vector<std::string> provide(const std::string& topic,
                                           const Embedding& topic_embedding, std::size_t n,
                                           std::uint64_t seed, EmbeddingStore& store) = 0;
};

// Synthesizes anchors as seeded spherical perturbations of the topic
// embedding, re-normalized, rejection-sampled into a cosine band: related
// to the topic (floor) but pairwise distinct (ceiling).
class DeterministicAnchorProvider : public VisualAnchorProvider {
 public:
  DeterministicAnchorProvider(double topic_cos_floor = 0.6, double pairwise_cos_ceiling = 0.99)
      : floor_(topic_cos_floor), ceiling_(pairwise_cos_ceiling) {}

  std::vector<std::string> provide(const std::string& topic, const Embedding& topic_embedding,
                                   std::size_t n, std::uint64_t seed,
                                   EmbeddingStore& store) override;

 private:
  double floor_;
  double ceiling_;
};

std::vector<std::string> acquire_visual_anchors(const std::string& topic,
                                                const Embedding& topic_embedding, std::size_t n,
                                                VisualAnchorProvider& provider,
                                                std::uint64_t seed, EmbeddingStore& store);

InputSet build_input_set(const std::string& topic, const Embedding& topic_embedding,
                         const std::vector<std::string>& image_ids, const EmbeddingStore& store);

struct GateSettings {
  bool enabled = true;
  GateConfig config;
};

// End-to-end generation: per anchor, gate -> fuse -> sample; unit i keeps
// anchor i's image. Each unit draws from its own rng substream.
MuseDocument generate_muse(const InputSet& input_set, const Checkpoint& ckpt,
                           const GateSettings& gate, const FusionConfig& fusion_cfg,
                           const DecodeConfig& decode_cfg, std::uint64_t seed,
                           const std::string& doc_id);

// Computes the fused prefix for one anchor; shared by generation and the
// preference-training path.
Vec fused_prefix(const Embedding& topic_embedding, const Embedding& image_embedding,
                 const FusionParams& params, const FusionConfig& cfg, const GateSettings& gate,
                 Rng& rng, FusionCache* cache = nullptr, GateDecision* decision = nullptr);

// Canonical text form: "# topic: ..." header, then per unit a
// [[IMG:<id>]] placeholder line followed by the unit text, units separated
// by one blank line. Inverse of parse_document.
std::string assemble_document(const MuseDocument& doc);
MuseDocument parse_document(const std::string& text);

}  // namespace flexmuse
