#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flexmuse/fusion.hpp"
#include "flexmuse/lm.hpp"
#include "flexmuse/msagate.hpp"
#include "flexmuse/mscdpo.hpp"

namespace flexmuse {

// Shape of the synthetic corpus generator.
struct SyntheticCorpusSpec {
  std::size_t n_docs = 16;
  std::size_t units_min = 2, units_max = 4;
  std::size_t unit_len_min = 8, unit_len_max = 16;
  std::size_t vocab_symbols = 32;
  std::uint64_t seed = 7;
};

// Flat dotted-key run configuration; one value per line, `key=value`.
struct RunConfig {
  std::size_t dim = 16;
  std::uint64_t seed = 7;
  std::uint64_t encoder_seed = 1;

  bool gate_enabled = true;
  GateConfig gate;

  FusionConfig fusion;

  std::size_t lm_d_model = 64;
  std::size_t lm_n_layers = 2;
  std::size_t lm_n_heads = 4;
  std::size_t lm_d_ff = 256;
  std::size_t lm_max_len = 256;

  std::size_t sft_steps = 600;
  double sft_lr = 1.0;
  std::size_t dpo_steps = 500;
  double dpo_lr = 1e-3;
  std::size_t dpo_batch_size = 16;
  double clip_norm = 1.0;

  bool dpo_enabled = true;
  DPOConfig dpo;

  DecodeConfig decode;

  SyntheticCorpusSpec corpus;

  std::string corpus_path = "corpus.jsonl";
  std::string store_path = "store.jsonl";
  std::string run_dir = "runs/default";
  std::string template_dir = "templates/judge";

  // Full-scale training constants for reference; the desk presets above use
  // far smaller budgets.
  static constexpr std::size_t kFullScaleSftIterations = 500000;
  static constexpr double kFullScaleSftLr = 8e-5;
  static constexpr std::size_t kFullScaleDpoIterations = 200000;
  static constexpr double kFullScaleDpoLr = 1e-5;

  void set(const std::string& key, const std::string& value);
  std::string serialize() const;
  void validate() const;

  GateSettings gate_settings() const { return GateSettings{gate_enabled, gate}; }
  LMConfig lm_config(std::size_t vocab_size) const;
};

RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text);

// The six ablation rows: sft, dpo, mscdpo, msagate, msagate_dpo, flexmuse.
std::vector<std::string> preset_names();
RunConfig preset_config(const std::string& name);

}  // namespace flexmuse
