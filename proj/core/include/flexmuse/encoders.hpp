#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "flexmuse/numerics.hpp"

namespace flexmuse {

enum class Modality { Text, Image };

std::string modality_name(Modality m);
Modality modality_from_name(const std::string& s);

// A unit-scale multimodal feature vector. Zero vectors are rejected at
// construction so cosine similarity is always defined.
struct Embedding {
  Vec vector;
  Modality modality = Modality::Text;
  std::string source_id;

  Embedding() = default;
  Embedding(Vec v, Modality m, std::string id);

  std::size_t dim() const { return vector.size(); }
};

// Deterministic stand-in for a pretrained multimodal encoder: hashes the
// content into a seeded pseudo-random unit vector. Distinct contents land
// nearly orthogonal for large dim.
Embedding toy_encode(const std::string& content, Modality modality, std::size_t dim,
                     std::uint64_t seed);

class EmbeddingStore {
 public:
  // dim() is 0 until the first insert fixes it.
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(const std::string& source_id) const;

  void insert(Embedding e);
  const Embedding& lookup(const std::string& source_id) const;

  const std::map<std::string, Embedding>& entries() const { return entries_; }

 private:
  std::size_t dim_ = 0;
  std::map<std::string, Embedding> entries_;
};

// One JSON record per line: {"id":..., "modality":"text"|"image", "vec":[...]}.
EmbeddingStore load_embedding_store(const std::string& path);
void save_embedding_store(const EmbeddingStore& store, const std::string& path);

}  // namespace flexmuse
