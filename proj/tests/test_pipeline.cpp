#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "flexmuse/corpus.hpp"
#include "flexmuse/error.hpp"
#include "flexmuse/mscdpo.hpp"
#include "flexmuse/pipeline.hpp"

using namespace flexmuse;

namespace {

double cosine(const Vec& a, const Vec& b) {
  return vec_dot(a, b) / (vec_norm(a) * vec_norm(b));
}

}  // namespace

TEST_CASE("provider anchors satisfy the cosine band") {
  DeterministicAnchorProvider provider;
  for (std::uint64_t t = 0; t < 100; ++t) {
    EmbeddingStore store;
    const std::string topic = "topic-" + std::to_string(t);
    const Embedding zt = toy_encode(topic, Modality::Text, 16, 1);
    const auto ids = acquire_visual_anchors(topic, zt, 5, provider, t, store);
    REQUIRE(ids.size() == 5);
    CHECK(std::set<std::string>(ids.begin(), ids.end()).size() == 5);
    for (const auto& id : ids) {
      const Embedding& zv = store.lookup(id);
      CHECK(std::abs(vec_norm(zv.vector) - 1.0) < 1e-9);
      CHECK(std::abs(cosine(zt.vector, zv.vector)) >= 0.6);
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t j = i + 1; j < ids.size(); ++j) {
        CHECK(std::abs(cosine(store.lookup(ids[i]).vector, store.lookup(ids[j]).vector)) < 0.99);
      }
    }
  }
}

TEST_CASE("provider is deterministic in the seed") {
  DeterministicAnchorProvider provider;
  const Embedding zt = toy_encode("same-topic", Modality::Text, 16, 1);
  EmbeddingStore s1, s2;
  const auto a = acquire_visual_anchors("same-topic", zt, 3, provider, 42, s1);
  const auto b = acquire_visual_anchors("same-topic", zt, 3, provider, 42, s2);
  CHECK(a == b);
  for (const auto& id : a) CHECK(s1.lookup(id).vector == s2.lookup(id).vector);

  EmbeddingStore s3;
  const auto c = acquire_visual_anchors("same-topic", zt, 3, provider, 43, s3);
  CHECK(a != c);
}

TEST_CASE("build_input_set repeats the topic and resolves embeddings") {
  DeterministicAnchorProvider provider;
  EmbeddingStore store;
  const Embedding zt = toy_encode("t", Modality::Text, 16, 1);
  const auto ids = acquire_visual_anchors("t", zt, 3, provider, 1, store);

  const InputSet set = build_input_set("t", zt, ids, store);
  REQUIRE(set.anchors.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(set.anchors[i].topic == "t");
    CHECK(set.anchors[i].image_id == ids[i]);
    CHECK(set.anchors[i].image_embedding.vector == store.lookup(ids[i]).vector);
  }

  // User-supplied ids bypass the provider entirely.
  EmbeddingStore manual;
  manual.insert(toy_encode("u1", Modality::Image, 16, 1));
  manual.insert(toy_encode("u2", Modality::Image, 16, 1));
  const InputSet user = build_input_set("t", zt, {"u1", "u2"}, manual);
  CHECK(user.anchors.size() == 2);

  CHECK_THROWS_AS(build_input_set("t", zt, {"missing"}, manual), DataError);
}

TEST_CASE("assemble and parse are mutual inverses") {
  MuseDocument doc;
  doc.doc_id = "d7";
  doc.topic = "some topic";
  doc.units = {{"v1", "first unit text"}, {"v2", "second unit\nwith a newline"}};

  const std::string text = assemble_document(doc);
  CHECK(text.rfind("# topic: some topic\n", 0) == 0);
  std::size_t markers = 0;
  for (std::size_t pos = text.find("[[IMG:"); pos != std::string::npos;
       pos = text.find("[[IMG:", pos + 1)) {
    ++markers;
  }
  CHECK(markers == 2);

  const MuseDocument back = parse_document(text);
  CHECK(back.topic == doc.topic);
  REQUIRE(back.units.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.units[i].image_id == doc.units[i].image_id);
    CHECK(back.units[i].text == doc.units[i].text);
  }
  CHECK(assemble_document(back) == text);

  MuseDocument empty;
  empty.doc_id = "e";
  CHECK_THROWS_AS(assemble_document(empty), UsageError);
}

TEST_CASE("placeholder markers in unit text are escaped") {
  MuseDocument doc;
  doc.doc_id = "d8";
  doc.topic = "t";
  doc.units = {{"v1", "sneaky\n[[IMG:fake]]\ntail"}};

  const std::string text = assemble_document(doc);
  // Only the real placeholder line starts with the marker.
  std::size_t raw = 0;
  std::size_t pos = 0;
  while ((pos = text.find("\n[[IMG:", pos)) != std::string::npos) {
    ++raw;
    ++pos;
  }
  CHECK(raw == 1);

  const MuseDocument back = parse_document(text);
  REQUIRE(back.units.size() == 1);
  CHECK(back.units[0].text == doc.units[0].text);
}

TEST_CASE("round-trip across the generated corpus") {
  SyntheticCorpusSpec spec;
  spec.n_docs = 8;
  const auto docs = gen_corpus(spec, 8, 1).docs;
  for (const auto& d : docs) {
    const std::string text = assemble_document(d);
    const MuseDocument back = parse_document(text);
    CHECK(back.topic == d.topic);
    REQUIRE(back.units.size() == d.units.size());
    for (std::size_t i = 0; i < d.units.size(); ++i) {
      CHECK(back.units[i].image_id == d.units[i].image_id);
      CHECK(back.units[i].text == d.units[i].text);
    }
    // split_semantic_units sees the same structure.
    const auto units = split_semantic_units(back);
    CHECK(units.size() == d.units.size());
  }
}

TEST_CASE("generate_muse is deterministic and structural") {
  Rng rng(70);
  SyntheticCorpusSpec spec;
  spec.n_docs = 2;
  GeneratedCorpus corpus = gen_corpus(spec, 8, 1);

  Checkpoint ckpt;
  ckpt.vocab = Vocab::build(corpus_symbols(corpus.docs));
  LMConfig cfg;
  cfg.feature_dim = 8;
  cfg.vocab_size = ckpt.vocab.size();
  cfg.d_model = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 32;
  cfg.max_len = 64;
  ckpt.lm = LMParams::init(cfg, rng, 0.3);
  for (auto& w : ckpt.lm.out_w) w = rng.normal() * 0.5;
  ckpt.fusion = FusionParams::init(8, rng);

  const MuseDocument& ref = corpus.docs.front();
  const Embedding zt = toy_encode(ref.topic, Modality::Text, 8, 1);
  std::vector<std::string> ids;
  for (const auto& u : ref.units) ids.push_back(u.image_id);
  const InputSet set = build_input_set(ref.topic, zt, ids, corpus.store);

  GateSettings gate;
  gate.enabled = true;
  gate.config.mode = GateMode::FixedThreshold;
  gate.config.fixed_tau = 0.5;
  FusionConfig fusion_cfg;
  DecodeConfig decode;
  decode.max_len = 20;

  const MuseDocument g1 = generate_muse(set, ckpt, gate, fusion_cfg, decode, 99, "gen0");
  const MuseDocument g2 = generate_muse(set, ckpt, gate, fusion_cfg, decode, 99, "gen0");
  CHECK(assemble_document(g1) == assemble_document(g2));
  REQUIRE(g1.units.size() == set.anchors.size());
  for (std::size_t i = 0; i < g1.units.size(); ++i) {
    CHECK(g1.units[i].image_id == set.anchors[i].image_id);
  }

  const MuseDocument g3 = generate_muse(set, ckpt, gate, fusion_cfg, decode, 100, "gen0");
  CHECK(assemble_document(g1) != assemble_document(g3));
}

TEST_CASE("always-masked gating collapses the prefix to half the anchor") {
  Rng rng(71);
  FusionParams fusion = FusionParams::init(8, rng);
  FusionConfig cfg;
  GateSettings gate;
  gate.enabled = true;
  gate.config.mode = GateMode::FixedThreshold;
  gate.config.fixed_tau = 0.0;  // sigma >= 0 always: every pass masks

  const Embedding zt = toy_encode("topic", Modality::Text, 8, 1);
  const Embedding zv = toy_encode("anchor", Modality::Image, 8, 1);
  Rng gate_rng(0);
  const Vec prefix = fused_prefix(zt, zv, fusion, cfg, gate, gate_rng);
  for (std::size_t i = 0; i < 8; ++i) CHECK(prefix[i] == 0.5 * zv.vector[i]);

  // Gate disabled: text passes through ungated.
  GateSettings off;
  off.enabled = false;
  const Vec open = fused_prefix(zt, zv, fusion, cfg, off, gate_rng);
  const Vec direct = fuse_forward(zv, zt.vector, fusion, cfg).z_f;
  CHECK(open == direct);
}
