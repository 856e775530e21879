#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flexmuse/encoders.hpp"
#include "flexmuse/pipeline.hpp"

namespace flexmuse {

struct DocMetrics {
  std::string doc_id;
  double rouge1 = 0.0, rouge2 = 0.0, rougeL = 0.0, embedding_f1 = 0.0;
};

struct MetricReport {
  double rouge1 = 0.0, rouge2 = 0.0, rougeL = 0.0, embedding_f1 = 0.0;
  std::vector<DocMetrics> per_document;
};

// Clipped n-gram F1. Both empty -> 1, exactly one empty -> 0.
double rouge_n(const std::vector<int>& candidate, const std::vector<int>& reference, int n);

// LCS-based F1 with the standard dynamic program.
double rouge_l(const std::vector<int>& candidate, const std::vector<int>& reference);

// Greedy-matching token-embedding F1: precision is the mean best cosine of
// each candidate token against the reference tokens, recall symmetric.
double embedding_f1(const std::vector<std::string>& candidate_tokens,
                    const std::vector<std::string>& reference_tokens, std::size_t dim,
                    std::uint64_t seed);

MetricReport evaluate_corpus(const std::vector<MuseDocument>& candidates,
                             const std::vector<MuseDocument>& references, const Vocab& vocab,
                             std::size_t embed_dim, std::uint64_t embed_seed);

void save_metric_report(const MetricReport& report, const std::string& path);

enum class JudgeCriterion { SC, CC, CV, RN, CO };
enum class JudgeVariant { ReferenceFree, ReferenceAware };

std::string criterion_name(JudgeCriterion c);
std::string variant_name(JudgeVariant v);

struct JudgeRequest {
  std::string doc_id;
  JudgeCriterion criterion;
  JudgeVariant variant;
  std::string prompt;
};

struct JudgeScore {
  std::string doc_id;
  JudgeCriterion criterion;
  JudgeVariant variant;
  double value = 0.0;  // in [0,5]
};

// 5 reference-free requests, plus 5 reference-aware when a reference is
// supplied. Prompts are filled from plain-text template files with
// {criterion_definition}/{candidate}/{reference} slots.
std::vector<JudgeRequest> emit_judge_prompts(const MuseDocument& doc,
                                             const MuseDocument* reference,
                                             const std::string& template_dir);

void save_judge_requests(const std::vector<JudgeRequest>& requests, const std::string& path);

struct JudgeAggregate {
  // mean value per (criterion, variant) cell; missing cells are flagged.
  std::vector<std::tuple<JudgeCriterion, JudgeVariant, double, std::size_t>> cells;
  std::vector<std::string> completeness_warnings;
};

std::vector<JudgeScore> parse_judge_scores(const std::string& path);
JudgeAggregate aggregate_judge_scores(const std::vector<JudgeScore>& scores);

}  // namespace flexmuse
