#include "flexmuse/encoders.hpp"

#include <fstream>

#include <json.hpp>

#include "flexmuse/error.hpp"
#include "flexmuse/rng.hpp"

namespace flexmuse {

std::string modality_name(Modality m) { return m == Modality::Text ? "text" : "image"; }

Modality modality_from_name(const std::string& s) {
  if (s == "text") return Modality::Text;
  if (s == "image") return Modality::Image;
  throw ParseError("unknown modality: " + s);
}

Embedding::Embedding(Vec v, Modality m, std::string id)
    : vector(std::move(v)), modality(m), source_id(std::move(id)) {
  check_finite(vector, "Embedding " + source_id);
  if (vec_norm(vector) == 0.0) {
    throw UsageError("Embedding " + source_id + ": zero vector rejected");
  }
}

Embedding toy_encode(const std::string& content, Modality modality, std::size_t dim,
                     std::uint64_t seed) {
  if (dim < 2) throw UsageError("toy_encode: dim must be >= 2");
  if (content.empty()) throw UsageError("toy_encode: empty content");

  // Mixing the modality into the hash keeps text/image encodings of the same
  // bytes distinct, mirroring separate encoder branches.
  const std::uint64_t h = fnv1a64(content.data(), content.size());
  const std::uint64_t tag = modality == Modality::Text ? 0x54ULL : 0x56ULL;
  Rng rng(h ^ (seed * 0x9e3779b97f4a7c15ULL) ^ (tag << 56));

  Vec v(dim);
  for (auto& x : v) x = rng.normal();
  const double n = vec_norm(v);
  for (auto& x : v) x /= n;
  return Embedding(std::move(v), modality, content);
}

bool EmbeddingStore::contains(const std::string& source_id) const {
  return entries_.count(source_id) != 0;
}

void EmbeddingStore::insert(Embedding e) {
  if (dim_ == 0) {
    dim_ = e.dim();
  } else if (e.dim() != dim_) {
    throw DataError("EmbeddingStore: dimension mismatch for id '" + e.source_id + "' (" +
                    std::to_string(e.dim()) + " vs store dim " + std::to_string(dim_) + ")");
  }
  if (entries_.count(e.source_id) != 0) {
    throw DataError("EmbeddingStore: duplicate id '" + e.source_id + "'");
  }
  const std::string id = e.source_id;
  entries_.emplace(id, std::move(e));
}

const Embedding& EmbeddingStore::lookup(const std::string& source_id) const {
  auto it = entries_.find(source_id);
  if (it == entries_.end()) {
    throw DataError("EmbeddingStore: unknown id '" + source_id + "'");
  }
  return it->second;
}

EmbeddingStore load_embedding_store(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding store: " + path);

  EmbeddingStore store;
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
    if (!j.contains("id") || !j.contains("modality") || !j.contains("vec")) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": missing id/modality/vec");
    }
    Vec v = j.at("vec").get<Vec>();
    store.insert(Embedding(std::move(v), modality_from_name(j.at("modality")),
                           j.at("id").get<std::string>()));
  }
  return store;
}

void save_embedding_store(const EmbeddingStore& store, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write embedding store: " + path);
  for (const auto& [id, e] : store.entries()) {
    nlohmann::json j;
    j["id"] = id;
    j["modality"] = modality_name(e.modality);
    j["vec"] = e.vector;
    out << j.dump() << '\n';
  }
}

}  // namespace flexmuse
