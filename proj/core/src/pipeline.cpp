#include "flexmuse/pipeline.hpp"

#include <cmath>
#include <sstream>

#include "flexmuse/error.hpp"

namespace flexmuse {

namespace {

constexpr int kMaxProviderRetries = 1000;

std::string hex16(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

}  // namespace

std::vector<std::string> DeterministicAnchorProvider::provide(const std::string& topic,
                                                              const Embedding& topic_embedding,
                                                              std::size_t n, std::uint64_t seed,
                                                              EmbeddingStore& store) {
  const std::size_t d = topic_embedding.dim();
  const std::uint64_t topic_hash = fnv1a64(topic.data(), topic.size());
  Rng rng(topic_hash ^ (seed * 0x9e3779b97f4a7c15ULL));

  std::vector<Vec> accepted;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < kMaxProviderRetries && !ok; ++attempt) {
      // Perturbation scale 0.5 lands most draws inside the cosine band.
      Vec v(d);
      for (std::size_t j = 0; j < d; ++j) {
        v[j] = topic_embedding.vector[j] + 0.5 * rng.normal() / std::sqrt(static_cast<double>(d));
      }
      const double norm = vec_norm(v);
      for (auto& x : v) x /= norm;

      if (std::abs(vec_dot(v, topic_embedding.vector)) < floor_) continue;
      bool distinct = true;
      for (const auto& prev : accepted) {
        if (std::abs(vec_dot(v, prev)) >= ceiling_) {
          distinct = false;
          break;
        }
      }
      if (!distinct) continue;
      accepted.push_back(v);
      ok = true;
    }
    if (!ok) {
      throw DataError("anchor provider: cosine band unsatisfiable after " +
                      std::to_string(kMaxProviderRetries) + " retries for topic '" + topic + "'");
    }
    const std::string id = "v" + hex16(topic_hash ^ seed) + "_" + std::to_string(i);
    ids.push_back(id);
    store.insert(Embedding(accepted.back(), Modality::Image, id));
  }
  return ids;
}

std::vector<std::string> acquire_visual_anchors(const std::string& topic,
                                                const Embedding& topic_embedding, std::size_t n,
                                                VisualAnchorProvider& provider,
                                                std::uint64_t seed, EmbeddingStore& store) {
  if (n < 1) throw UsageError("acquire_visual_anchors: n must be >= 1");
  return provider.provide(topic, topic_embedding, n, seed, store);
}

InputSet build_input_set(const std::string& topic, const Embedding& topic_embedding,
                         const std::vector<std::string>& image_ids, const EmbeddingStore& store) {
  if (image_ids.empty()) throw UsageError("build_input_set: empty image id list");
  InputSet set;
  for (const auto& id : image_ids) {
    AnchorPair a;
    a.topic = topic;
    a.image_id = id;
    a.topic_embedding = topic_embedding;
    a.image_embedding = store.lookup(id);
    set.anchors.push_back(std::move(a));
  }
  return set;
}

Vec fused_prefix(const Embedding& topic_embedding, const Embedding& image_embedding,
                 const FusionParams& params, const FusionConfig& cfg, const GateSettings& gate,
                 Rng& rng, FusionCache* cache, GateDecision* decision) {
  Vec gated;
  if (gate.enabled) {
    GateResult gr = apply_gate(topic_embedding, image_embedding, gate.config, rng);
    gated = std::move(gr.gated);
    if (decision) *decision = gr.decision;
  } else {
    gated = topic_embedding.vector;
    if (decision) {
      decision->sigma = semantic_sim(topic_embedding, image_embedding);
      decision->u = 1.0;
      decision->masked = false;
      decision->mask.assign(topic_embedding.dim(), 1.0);
    }
  }
  FusionOutput out = fuse_forward(image_embedding, gated, params, cfg, cache);
  return out.z_f;
}

MuseDocument generate_muse(const InputSet& input_set, const Checkpoint& ckpt,
                           const GateSettings& gate, const FusionConfig& fusion_cfg,
                           const DecodeConfig& decode_cfg, std::uint64_t seed,
                           const std::string& doc_id) {
  if (input_set.anchors.empty()) throw UsageError("generate_muse: empty input set");
  const std::size_t d = ckpt.lm.cfg.feature_dim;
  if (input_set.anchors.front().topic_embedding.dim() != d) {
    throw ConfigError("generate_muse: checkpoint feature_dim " + std::to_string(d) +
                      " does not match embedding dim " +
                      std::to_string(input_set.anchors.front().topic_embedding.dim()));
  }

  MuseDocument doc;
  doc.doc_id = doc_id;
  doc.topic = input_set.anchors.front().topic;
  const Rng base(seed);
  for (std::size_t i = 0; i < input_set.anchors.size(); ++i) {
    const auto& anchor = input_set.anchors[i];
    Rng unit_rng = base.split(i);
    const Vec prefix =
        fused_prefix(anchor.topic_embedding, anchor.image_embedding, ckpt.fusion, fusion_cfg,
                     gate, unit_rng);
    const std::vector<int> tokens = sample_generate(prefix, ckpt.lm, unit_rng, decode_cfg);
    doc.units.push_back({anchor.image_id, detokenize(tokens, ckpt.vocab)});
  }
  return doc;
}

namespace {

const std::string kImgOpen = "[[IMG:";

std::string escape_unit_text(const std::string& text) {
  std::string out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t hit = text.find(kImgOpen, pos);
    if (hit == std::string::npos) {
      out += text.substr(pos);
      break;
    }
    out += text.substr(pos, hit - pos);
    out += "\\[[IMG:";
    pos = hit + kImgOpen.size();
  }
  return out;
}

std::string unescape_unit_text(const std::string& text) {
  std::string out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t hit = text.find("\\[[IMG:", pos);
    if (hit == std::string::npos) {
      out += text.substr(pos);
      break;
    }
    out += text.substr(pos, hit - pos);
    out += kImgOpen;
    pos = hit + 7;
  }
  return out;
}

}  // namespace

std::string assemble_document(const MuseDocument& doc) {
  if (doc.units.empty()) throw UsageError("assemble_document: document has no units");
  std::ostringstream out;
  out << "# topic: " << doc.topic << "\n";
  for (std::size_t i = 0; i < doc.units.size(); ++i) {
    out << kImgOpen << doc.units[i].image_id << "]]\n";
    out << escape_unit_text(doc.units[i].text) << "\n";
    if (i + 1 < doc.units.size()) out << "\n";
  }
  return out.str();
}

MuseDocument parse_document(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# topic: ", 0) != 0) {
    throw ParseError("document: missing '# topic: ' header");
  }
  MuseDocument doc;
  doc.topic = line.substr(9);

  MuseUnit current;
  bool in_unit = false;
  std::string body;
  auto flush = [&]() {
    if (!in_unit) return;
    if (!body.empty() && body.back() == '\n') body.pop_back();
    current.text = unescape_unit_text(body);
    doc.units.push_back(current);
    body.clear();
    in_unit = false;
  };
  while (std::getline(in, line)) {
    if (line.rfind(kImgOpen, 0) == 0 && line.size() > kImgOpen.size() + 1 &&
        line.substr(line.size() - 2) == "]]") {
      flush();
      current.image_id = line.substr(kImgOpen.size(), line.size() - kImgOpen.size() - 2);
      in_unit = true;
    } else if (line.empty()) {
      flush();
    } else {
      if (!in_unit) throw ParseError("document: text outside any image unit: '" + line + "'");
      body += line;
      body += '\n';
    }
  }
  flush();
  if (doc.units.empty()) throw ParseError("document: no image units found");
  return doc;
}

}  // namespace flexmuse
