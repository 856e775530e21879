#include "flexmuse/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "flexmuse/error.hpp"
#include "flexmuse/rng.hpp"

namespace flexmuse {

std::vector<MuseDocument> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus: " + path);
  std::vector<MuseDocument> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    MuseDocument d;
    d.doc_id = j.at("doc_id").get<std::string>();
    d.topic = j.at("topic").get<std::string>();
    for (const auto& u : j.at("units")) {
      d.units.push_back({u.at("image_id").get<std::string>(), u.at("text").get<std::string>()});
    }
    if (d.units.empty()) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": document '" + d.doc_id +
                       "' has no units");
    }
    docs.push_back(std::move(d));
  }
  return docs;
}

void save_corpus(const std::vector<MuseDocument>& docs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write corpus: " + path);
  for (const auto& d : docs) {
    nlohmann::json j;
    j["doc_id"] = d.doc_id;
    j["topic"] = d.topic;
    j["units"] = nlohmann::json::array();
    for (const auto& u : d.units) {
      j["units"].push_back({{"image_id", u.image_id}, {"text", u.text}});
    }
    out << j.dump() << '\n';
  }
}

namespace {

// Symbol i is the CJK codepoint U+4E00+i encoded as UTF-8.
std::string cjk_symbol(std::size_t i) {
  const char32_t cp = 0x4E00 + static_cast<char32_t>(i);
  std::string s;
  s += static_cast<char>(0xE0 | (cp >> 12));
  s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
  s += static_cast<char>(0x80 | (cp & 0x3F));
  return s;
}

std::string pad3(std::size_t n) {
  std::string s = std::to_string(n);
  while (s.size() < 3) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

GeneratedCorpus gen_corpus(const SyntheticCorpusSpec& spec, std::size_t dim,
                           std::uint64_t encoder_seed) {
  GeneratedCorpus out;
  Rng rng(spec.seed);
  DeterministicAnchorProvider provider;

  // A small pool of reusable phrases keeps the corpus low-entropy enough
  // for the desk-scale model to drive the SFT loss toward zero.
  const std::size_t n_phrases = 24;
  std::vector<std::string> phrases;
  for (std::size_t p = 0; p < n_phrases; ++p) {
    const std::size_t len =
        spec.unit_len_min + rng.below(spec.unit_len_max - spec.unit_len_min + 1);
    std::string text;
    for (std::size_t i = 0; i < len; ++i) text += cjk_symbol(rng.below(spec.vocab_symbols));
    phrases.push_back(std::move(text));
  }

  for (std::size_t d = 0; d < spec.n_docs; ++d) {
    MuseDocument doc;
    doc.doc_id = "doc" + pad3(d);
    doc.topic = "topic-" + pad3(d);
    const Embedding topic_emb = toy_encode(doc.topic, Modality::Text, dim, encoder_seed);

    const std::size_t k = spec.units_min + rng.below(spec.units_max - spec.units_min + 1);
    const auto image_ids =
        provider.provide(doc.topic, topic_emb, k, spec.seed + d, out.store);
    // Phrases are drawn without replacement inside a document so no
    // preference pair degenerates into equal chosen and rejected texts.
    std::vector<std::size_t> used;
    for (std::size_t u = 0; u < k; ++u) {
      std::size_t idx = rng.below(phrases.size());
      while (std::find(used.begin(), used.end(), idx) != used.end()) {
        idx = rng.below(phrases.size());
      }
      used.push_back(idx);
      doc.units.push_back({image_ids[u], phrases[idx]});
    }
    out.docs.push_back(std::move(doc));
  }
  return out;
}

void write_corpus_files(const GeneratedCorpus& corpus, const SyntheticCorpusSpec& spec,
                        const std::string& corpus_path, const std::string& store_path,
                        const std::string& manifest_path) {
  save_corpus(corpus.docs, corpus_path);
  save_embedding_store(corpus.store, store_path);

  std::ofstream manifest(manifest_path);
  if (!manifest) throw IoError("cannot write manifest: " + manifest_path);
  nlohmann::json j;
  j["n_docs"] = spec.n_docs;
  j["units_min"] = spec.units_min;
  j["units_max"] = spec.units_max;
  j["unit_len_min"] = spec.unit_len_min;
  j["unit_len_max"] = spec.unit_len_max;
  j["vocab_symbols"] = spec.vocab_symbols;
  j["seed"] = spec.seed;
  manifest << j.dump(2) << '\n';
}

std::vector<std::string> corpus_symbols(const std::vector<MuseDocument>& docs) {
  std::set<std::string> symbols;
  // Corpus texts are CJK; each 3-byte UTF-8 unit in the generator range is
  // one symbol. Latin words are collected whole.
  for (const auto& d : docs) {
    for (const auto& u : d.units) {
      std::string latin;
      std::size_t i = 0;
      while (i < u.text.size()) {
        const unsigned char c = static_cast<unsigned char>(u.text[i]);
        std::size_t len = 1;
        if ((c & 0xE0) == 0xC0) len = 2;
        else if ((c & 0xF0) == 0xE0) len = 3;
        else if ((c & 0xF8) == 0xF0) len = 4;
        if (i + len > u.text.size()) len = 1;
        const std::string unit = u.text.substr(i, len);
        if (len == 1 && (c == ' ' || c == '\t' || c == '\n')) {
          if (!latin.empty()) symbols.insert(latin);
          latin.clear();
        } else if (len == 1) {
          latin += unit;
        } else {
          if (!latin.empty()) symbols.insert(latin);
          latin.clear();
          symbols.insert(unit);
        }
        i += len;
      }
      if (!latin.empty()) symbols.insert(latin);
    }
  }
  return std::vector<std::string>(symbols.begin(), symbols.end());
}

}  // namespace flexmuse
