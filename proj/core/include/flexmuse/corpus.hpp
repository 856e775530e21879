#pragma once

#include <string>
#include <vector>

#include "flexmuse/config.hpp"
#include "flexmuse/encoders.hpp"
#include "flexmuse/lm.hpp"
#include "flexmuse/pipeline.hpp"

namespace flexmuse {

// One JSON record per line: {"doc_id":..., "topic":..., "units":[{"image_id":...,"text":...}]}
std::vector<MuseDocument> load_corpus(const std::string& path);
void save_corpus(const std::vector<MuseDocument>& docs, const std::string& path);

struct GeneratedCorpus {
  std::vector<MuseDocument> docs;
  EmbeddingStore store;
};

// Deterministic synthetic corpus: CJK-range unit texts over a small symbol
// set, image embeddings synthesized by the anchor provider around each
// topic embedding.
GeneratedCorpus gen_corpus(const SyntheticCorpusSpec& spec, std::size_t dim,
                           std::uint64_t encoder_seed);

void write_corpus_files(const GeneratedCorpus& corpus, const SyntheticCorpusSpec& spec,
                        const std::string& corpus_path, const std::string& store_path,
                        const std::string& manifest_path);

// All distinct symbols appearing in the corpus texts, sorted; feeds
// Vocab::build deterministically.
std::vector<std::string> corpus_symbols(const std::vector<MuseDocument>& docs);

}  // namespace flexmuse
