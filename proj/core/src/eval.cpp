#include "flexmuse/eval.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "flexmuse/error.hpp"
#include "flexmuse/lm.hpp"

namespace flexmuse {

namespace {

double f1(double p, double r) { return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

std::map<std::vector<int>, std::size_t> ngram_counts(const std::vector<int>& seq, int n) {
  std::map<std::vector<int>, std::size_t> counts;
  if (static_cast<int>(seq.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    counts[std::vector<int>(seq.begin() + i, seq.begin() + i + n)]++;
  }
  return counts;
}

}  // namespace

double rouge_n(const std::vector<int>& candidate, const std::vector<int>& reference, int n) {
  if (n != 1 && n != 2) throw UsageError("rouge_n: n must be 1 or 2");
  if (candidate.empty() && reference.empty()) return 1.0;
  if (candidate.empty() || reference.empty()) return 0.0;

  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  if (cand.empty() && ref.empty()) return 1.0;  // both shorter than n
  if (cand.empty() || ref.empty()) return 0.0;

  std::size_t overlap = 0, cand_total = 0, ref_total = 0;
  for (const auto& [g, c] : cand) {
    cand_total += c;
    auto it = ref.find(g);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  for (const auto& [g, c] : ref) ref_total += c;
  return f1(static_cast<double>(overlap) / static_cast<double>(cand_total),
            static_cast<double>(overlap) / static_cast<double>(ref_total));
}

double rouge_l(const std::vector<int>& candidate, const std::vector<int>& reference) {
  if (candidate.empty() && reference.empty()) return 1.0;
  if (candidate.empty() || reference.empty()) return 0.0;

  const std::size_t m = candidate.size(), n = reference.size();
  std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      cur[j] = candidate[i - 1] == reference[j - 1] ? prev[j - 1] + 1
                                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[n]);
  return f1(lcs / static_cast<double>(m), lcs / static_cast<double>(n));
}

double embedding_f1(const std::vector<std::string>& candidate_tokens,
                    const std::vector<std::string>& reference_tokens, std::size_t dim,
                    std::uint64_t seed) {
  if (candidate_tokens.empty() || reference_tokens.empty()) return 0.0;

  auto embed = [&](const std::vector<std::string>& toks) {
    std::vector<Vec> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(toy_encode(t, Modality::Text, dim, seed).vector);
    return out;
  };
  const auto cand = embed(candidate_tokens);
  const auto ref = embed(reference_tokens);

  auto greedy = [](const std::vector<Vec>& from, const std::vector<Vec>& to) {
    double sum = 0.0;
    for (const auto& f : from) {
      double best = -1.0;
      for (const auto& t : to) best = std::max(best, vec_dot(f, t));
      sum += best;
    }
    return std::max(0.0, sum / static_cast<double>(from.size()));
  };
  return f1(greedy(cand, ref), greedy(ref, cand));
}

MetricReport evaluate_corpus(const std::vector<MuseDocument>& candidates,
                             const std::vector<MuseDocument>& references, const Vocab& vocab,
                             std::size_t embed_dim, std::uint64_t embed_seed) {
  if (candidates.size() != references.size()) {
    throw UsageError("evaluate_corpus: candidate/reference count mismatch");
  }
  if (candidates.empty()) throw UsageError("evaluate_corpus: empty corpus");

  auto doc_tokens = [&](const MuseDocument& d) {
    std::vector<int> ids;
    for (const auto& u : d.units) {
      const auto t = tokenize(u.text, vocab);
      ids.insert(ids.end(), t.begin(), t.end());
    }
    return ids;
  };
  auto doc_token_strings = [&](const std::vector<int>& ids) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(vocab.tokens[id]);
    return out;
  };

  MetricReport report;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto cand = doc_tokens(candidates[i]);
    const auto ref = doc_tokens(references[i]);
    DocMetrics dm;
    dm.doc_id = candidates[i].doc_id;
    dm.rouge1 = rouge_n(cand, ref, 1);
    dm.rouge2 = rouge_n(cand, ref, 2);
    dm.rougeL = rouge_l(cand, ref);
    dm.embedding_f1 = embedding_f1(doc_token_strings(cand), doc_token_strings(ref), embed_dim,
                                   embed_seed);
    report.rouge1 += dm.rouge1;
    report.rouge2 += dm.rouge2;
    report.rougeL += dm.rougeL;
    report.embedding_f1 += dm.embedding_f1;
    report.per_document.push_back(std::move(dm));
  }
  const double inv = 1.0 / static_cast<double>(candidates.size());
  report.rouge1 *= inv;
  report.rouge2 *= inv;
  report.rougeL *= inv;
  report.embedding_f1 *= inv;
  return report;
}

void save_metric_report(const MetricReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metric report: " + path);
  nlohmann::json j;
  j["rouge1"] = report.rouge1;
  j["rouge2"] = report.rouge2;
  j["rougeL"] = report.rougeL;
  j["embedding_f1"] = report.embedding_f1;
  j["per_document"] = nlohmann::json::array();
  for (const auto& d : report.per_document) {
    j["per_document"].push_back({{"doc_id", d.doc_id},
                                 {"rouge1", d.rouge1},
                                 {"rouge2", d.rouge2},
                                 {"rougeL", d.rougeL},
                                 {"embedding_f1", d.embedding_f1}});
  }
  out << j.dump(2) << '\n';
}

std::string criterion_name(JudgeCriterion c) {
  switch (c) {
    case JudgeCriterion::SC: return "SC";
    case JudgeCriterion::CC: return "CC";
    case JudgeCriterion::CV: return "CV";
    case JudgeCriterion::RN: return "RN";
    case JudgeCriterion::CO: return "CO";
  }
  return "?";
}

std::string variant_name(JudgeVariant v) {
  return v == JudgeVariant::ReferenceFree ? "reference_free" : "reference_aware";
}

namespace {

JudgeCriterion criterion_from_name(const std::string& s) {
  if (s == "SC") return JudgeCriterion::SC;
  if (s == "CC") return JudgeCriterion::CC;
  if (s == "CV") return JudgeCriterion::CV;
  if (s == "RN") return JudgeCriterion::RN;
  if (s == "CO") return JudgeCriterion::CO;
  throw ParseError("unknown judge criterion: " + s);
}

JudgeVariant variant_from_name(const std::string& s) {
  if (s == "reference_free") return JudgeVariant::ReferenceFree;
  if (s == "reference_aware") return JudgeVariant::ReferenceAware;
  throw ParseError("unknown judge variant: " + s);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open template: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Template headers are comment lines starting with '#'; they carry the
// template version and are stripped before substitution.
std::string strip_header(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  bool past_header = false;
  while (std::getline(in, line)) {
    if (!past_header && (line.rfind('#', 0) == 0 || line.empty())) continue;
    past_header = true;
    out += line;
    out += '\n';
  }
  return out;
}

std::string substitute(std::string text, const std::string& slot, const std::string& value) {
  const std::string needle = "{" + slot + "}";
  std::size_t pos;
  while ((pos = text.find(needle)) != std::string::npos) {
    text.replace(pos, needle.size(), value);
  }
  return text;
}

}  // namespace

std::vector<JudgeRequest> emit_judge_prompts(const MuseDocument& doc,
                                             const MuseDocument* reference,
                                             const std::string& template_dir) {
  const std::string body = strip_header(read_file(template_dir + "/prompt_reference_free.txt"));
  const std::string body_aware =
      strip_header(read_file(template_dir + "/prompt_reference_aware.txt"));

  const std::string candidate_text = assemble_document(doc);
  const std::string reference_text = reference ? assemble_document(*reference) : "";

  std::vector<JudgeRequest> out;
  for (JudgeCriterion c : {JudgeCriterion::SC, JudgeCriterion::CC, JudgeCriterion::CV,
                           JudgeCriterion::RN, JudgeCriterion::CO}) {
    const std::string def =
        strip_header(read_file(template_dir + "/criterion_" + criterion_name(c) + ".txt"));
    {
      JudgeRequest r;
      r.doc_id = doc.doc_id;
      r.criterion = c;
      r.variant = JudgeVariant::ReferenceFree;
      r.prompt = substitute(substitute(body, "criterion_definition", def), "candidate",
                            candidate_text);
      out.push_back(std::move(r));
    }
    if (reference) {
      JudgeRequest r;
      r.doc_id = doc.doc_id;
      r.criterion = c;
      r.variant = JudgeVariant::ReferenceAware;
      r.prompt = substitute(
          substitute(substitute(body_aware, "criterion_definition", def), "candidate",
                     candidate_text),
          "reference", reference_text);
      out.push_back(std::move(r));
    }
  }
  return out;
}

void save_judge_requests(const std::vector<JudgeRequest>& requests, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write judge requests: " + path);
  for (const auto& r : requests) {
    nlohmann::json j;
    j["doc_id"] = r.doc_id;
    j["criterion"] = criterion_name(r.criterion);
    j["variant"] = variant_name(r.variant);
    j["prompt"] = r.prompt;
    out << j.dump() << '\n';
  }
}

std::vector<JudgeScore> parse_judge_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open judge scores: " + path);
  std::vector<JudgeScore> scores;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
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
    JudgeScore s;
    s.doc_id = j.at("doc_id").get<std::string>();
    const std::string crit = j.at("criterion").get<std::string>();
    const std::string var = j.at("variant").get<std::string>();
    s.criterion = criterion_from_name(crit);
    s.variant = variant_from_name(var);
    s.value = j.at("value").get<double>();
    if (s.value < 0.0 || s.value > 5.0) {
      throw DataError("judge score out of [0,5] for doc '" + s.doc_id + "': " +
                      std::to_string(s.value));
    }
    const auto key = std::make_tuple(s.doc_id, crit, var);
    if (!seen.insert(key).second) {
      throw DataError("duplicate judge score for (" + s.doc_id + ", " + crit + ", " + var + ")");
    }
    scores.push_back(std::move(s));
  }
  return scores;
}

JudgeAggregate aggregate_judge_scores(const std::vector<JudgeScore>& scores) {
  JudgeAggregate agg;
  std::set<std::string> docs;
  for (const auto& s : scores) docs.insert(s.doc_id);
  for (JudgeCriterion c : {JudgeCriterion::SC, JudgeCriterion::CC, JudgeCriterion::CV,
                           JudgeCriterion::RN, JudgeCriterion::CO}) {
    for (JudgeVariant v : {JudgeVariant::ReferenceFree, JudgeVariant::ReferenceAware}) {
      double sum = 0.0;
      std::size_t count = 0;
      for (const auto& s : scores) {
        if (s.criterion == c && s.variant == v) {
          sum += s.value;
          ++count;
        }
      }
      if (count > 0) {
        agg.cells.emplace_back(c, v, sum / static_cast<double>(count), count);
        if (count < docs.size()) {
          agg.completeness_warnings.push_back("cell (" + criterion_name(c) + ", " +
                                              variant_name(v) + ") covers " +
                                              std::to_string(count) + "/" +
                                              std::to_string(docs.size()) + " documents");
        }
      }
    }
  }
  return agg;
}

}  // namespace flexmuse
