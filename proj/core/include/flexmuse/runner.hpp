#pragma once

#include <functional>
#include <string>

#include "flexmuse/config.hpp"
#include "flexmuse/eval.hpp"
#include "flexmuse/numerics.hpp"

namespace flexmuse {

// Command implementations shared by the CLI and the acceptance suite. Each
// works inside cfg.run_dir and is silent unless given a logger.
using Logger = std::function<void(const std::string&)>;

void run_gen_data(const RunConfig& cfg, const Logger& log = {});

struct SftRunResult {
  double final_loss = 0.0;
  std::string checkpoint_path;
};
SftRunResult run_train_sft(const RunConfig& cfg, const Logger& log = {});

struct DpoRunResult {
  double first_loss = 0.0;
  double final_loss = 0.0;
  double final_margin = 0.0;
  std::size_t n_pairs = 0;
  std::size_t skipped_single_unit_docs = 0;
  std::string checkpoint_path;
};
DpoRunResult run_train_dpo(const RunConfig& cfg, const Logger& log = {});

struct GenerateRunResult {
  std::string output_path;  // generated.jsonl inside the run dir
};
GenerateRunResult run_generate(const RunConfig& cfg, const Logger& log = {});

struct EvalRunResult {
  MetricReport report;
  std::string report_path;
};
EvalRunResult run_eval(const RunConfig& cfg, const Logger& log = {});

struct GradCheckResult {
  std::vector<GradReport> reports;
  double worst = 0.0;
  bool passed = false;  // all blocks under 1e-3
};
GradCheckResult run_gradcheck(const RunConfig& cfg, std::size_t n_seeds = 20,
                              const Logger& log = {});

}  // namespace flexmuse
