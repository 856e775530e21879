#include "flexmuse/config.hpp"

#include <fstream>
#include <sstream>

#include "flexmuse/error.hpp"

namespace flexmuse {

namespace {

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("config: bad boolean for '" + key + "': " + v);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    return static_cast<std::size_t>(std::stoull(v));
  } catch (...) {
    throw ConfigError("config: bad integer for '" + key + "': " + v);
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    return std::stod(v);
  } catch (...) {
    throw ConfigError("config: bad real for '" + key + "': " + v);
  }
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "dim") dim = parse_size(key, value);
  else if (key == "seed") seed = parse_size(key, value);
  else if (key == "encoder.seed") encoder_seed = parse_size(key, value);
  else if (key == "gate.enabled") gate_enabled = parse_bool(key, value);
  else if (key == "gate.mode") {
    if (value == "sampled") gate.mode = GateMode::Sampled;
    else if (value == "fixed_threshold") gate.mode = GateMode::FixedThreshold;
    else throw ConfigError("config: gate.mode must be sampled|fixed_threshold, got " + value);
  } else if (key == "gate.fixed_tau") gate.fixed_tau = parse_real(key, value);
  else if (key == "gate.seed") gate.seed = parse_size(key, value);
  else if (key == "fusion.attention_tokens") fusion.attention_tokens = parse_size(key, value);
  else if (key == "lm.d_model") lm_d_model = parse_size(key, value);
  else if (key == "lm.n_layers") lm_n_layers = parse_size(key, value);
  else if (key == "lm.n_heads") lm_n_heads = parse_size(key, value);
  else if (key == "lm.d_ff") lm_d_ff = parse_size(key, value);
  else if (key == "lm.max_len") lm_max_len = parse_size(key, value);
  else if (key == "train.sft_steps") sft_steps = parse_size(key, value);
  else if (key == "train.sft_lr") sft_lr = parse_real(key, value);
  else if (key == "train.dpo_steps") dpo_steps = parse_size(key, value);
  else if (key == "train.dpo_lr") dpo_lr = parse_real(key, value);
  else if (key == "train.dpo_batch_size") dpo_batch_size = parse_size(key, value);
  else if (key == "train.clip_norm") clip_norm = parse_real(key, value);
  else if (key == "dpo.enabled") dpo_enabled = parse_bool(key, value);
  else if (key == "dpo.mode") {
    if (value == "msc") dpo.mode = DpoMode::Msc;
    else if (value == "conventional") dpo.mode = DpoMode::Conventional;
    else throw ConfigError("config: dpo.mode must be msc|conventional, got " + value);
  } else if (key == "dpo.beta") dpo.beta = parse_real(key, value);
  else if (key == "dpo.rejected_cap") {
    const std::size_t cap = parse_size(key, value);
    if (cap == 0) dpo.rejected_cap.reset();
    else dpo.rejected_cap = cap;
  } else if (key == "dpo.train_fusion") dpo.train_fusion = parse_bool(key, value);
  else if (key == "decode.max_len") decode.max_len = parse_size(key, value);
  else if (key == "decode.temperature") decode.temperature = parse_real(key, value);
  else if (key == "corpus.n_docs") corpus.n_docs = parse_size(key, value);
  else if (key == "corpus.units_min") corpus.units_min = parse_size(key, value);
  else if (key == "corpus.units_max") corpus.units_max = parse_size(key, value);
  else if (key == "corpus.unit_len_min") corpus.unit_len_min = parse_size(key, value);
  else if (key == "corpus.unit_len_max") corpus.unit_len_max = parse_size(key, value);
  else if (key == "corpus.vocab_symbols") corpus.vocab_symbols = parse_size(key, value);
  else if (key == "corpus.seed") corpus.seed = parse_size(key, value);
  else if (key == "paths.corpus") corpus_path = value;
  else if (key == "paths.store") store_path = value;
  else if (key == "paths.run_dir") run_dir = value;
  else if (key == "paths.templates") template_dir = value;
  else throw ConfigError("config: unknown key '" + key + "'");
}

std::string RunConfig::serialize() const {
  std::ostringstream out;
  out << "dim=" << dim << "\n";
  out << "seed=" << seed << "\n";
  out << "encoder.seed=" << encoder_seed << "\n";
  out << "gate.enabled=" << (gate_enabled ? "true" : "false") << "\n";
  out << "gate.mode=" << (gate.mode == GateMode::Sampled ? "sampled" : "fixed_threshold") << "\n";
  out << "gate.fixed_tau=" << gate.fixed_tau << "\n";
  out << "gate.seed=" << gate.seed << "\n";
  out << "fusion.attention_tokens=" << fusion.attention_tokens << "\n";
  out << "lm.d_model=" << lm_d_model << "\n";
  out << "lm.n_layers=" << lm_n_layers << "\n";
  out << "lm.n_heads=" << lm_n_heads << "\n";
  out << "lm.d_ff=" << lm_d_ff << "\n";
  out << "lm.max_len=" << lm_max_len << "\n";
  out << "train.sft_steps=" << sft_steps << "\n";
  out << "train.sft_lr=" << sft_lr << "\n";
  out << "train.dpo_steps=" << dpo_steps << "\n";
  out << "train.dpo_lr=" << dpo_lr << "\n";
  out << "train.dpo_batch_size=" << dpo_batch_size << "\n";
  out << "train.clip_norm=" << clip_norm << "\n";
  out << "dpo.enabled=" << (dpo_enabled ? "true" : "false") << "\n";
  out << "dpo.mode=" << (dpo.mode == DpoMode::Msc ? "msc" : "conventional") << "\n";
  out << "dpo.beta=" << dpo.beta << "\n";
  out << "dpo.rejected_cap=" << (dpo.rejected_cap ? *dpo.rejected_cap : 0) << "\n";
  out << "dpo.train_fusion=" << (dpo.train_fusion ? "true" : "false") << "\n";
  out << "decode.max_len=" << decode.max_len << "\n";
  out << "decode.temperature=" << decode.temperature << "\n";
  out << "corpus.n_docs=" << corpus.n_docs << "\n";
  out << "corpus.units_min=" << corpus.units_min << "\n";
  out << "corpus.units_max=" << corpus.units_max << "\n";
  out << "corpus.unit_len_min=" << corpus.unit_len_min << "\n";
  out << "corpus.unit_len_max=" << corpus.unit_len_max << "\n";
  out << "corpus.vocab_symbols=" << corpus.vocab_symbols << "\n";
  out << "corpus.seed=" << corpus.seed << "\n";
  out << "paths.corpus=" << corpus_path << "\n";
  out << "paths.store=" << store_path << "\n";
  out << "paths.run_dir=" << run_dir << "\n";
  out << "paths.templates=" << template_dir << "\n";
  return out.str();
}

void RunConfig::validate() const {
  if (dim < 2) throw ConfigError("config: dim must be >= 2");
  if (fusion.attention_tokens == 0 || dim % fusion.attention_tokens != 0) {
    throw ConfigError("config: fusion.attention_tokens must divide dim");
  }
  if (lm_d_model % lm_n_heads != 0) throw ConfigError("config: lm.n_heads must divide lm.d_model");
  if (gate.fixed_tau < 0.0 || gate.fixed_tau > 1.0) {
    throw ConfigError("config: gate.fixed_tau must be in [0,1]");
  }
  if (dpo.beta <= 0.0) throw ConfigError("config: dpo.beta must be positive");
  if (decode.temperature < 0.0) throw ConfigError("config: decode.temperature must be >= 0");
  if (corpus.units_min == 0 || corpus.units_min > corpus.units_max) {
    throw ConfigError("config: corpus.units_min..units_max range is empty");
  }
  if (corpus.unit_len_min == 0 || corpus.unit_len_min > corpus.unit_len_max) {
    throw ConfigError("config: corpus.unit_len range is empty");
  }
  if (corpus.n_docs == 0) throw ConfigError("config: corpus.n_docs must be positive");
}

LMConfig RunConfig::lm_config(std::size_t vocab_size) const {
  LMConfig c;
  c.feature_dim = dim;
  c.vocab_size = vocab_size;
  c.d_model = lm_d_model;
  c.n_layers = lm_n_layers;
  c.n_heads = lm_n_heads;
  c.d_ff = lm_d_ff;
  c.max_len = lm_max_len;
  return c;
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    cfg.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::vector<std::string> preset_names() {
  return {"sft", "dpo", "mscdpo", "msagate", "msagate_dpo", "flexmuse"};
}

RunConfig preset_config(const std::string& name) {
  RunConfig cfg;
  if (name == "sft") {
    cfg.gate_enabled = false;
    cfg.dpo_enabled = false;
  } else if (name == "dpo") {
    cfg.gate_enabled = false;
    cfg.dpo_enabled = true;
    cfg.dpo.mode = DpoMode::Conventional;
  } else if (name == "mscdpo") {
    cfg.gate_enabled = false;
    cfg.dpo_enabled = true;
    cfg.dpo.mode = DpoMode::Msc;
  } else if (name == "msagate") {
    cfg.gate_enabled = true;
    cfg.dpo_enabled = false;
  } else if (name == "msagate_dpo") {
    cfg.gate_enabled = true;
    cfg.dpo_enabled = true;
    cfg.dpo.mode = DpoMode::Conventional;
  } else if (name == "flexmuse") {
    cfg.gate_enabled = true;
    cfg.dpo_enabled = true;
    cfg.dpo.mode = DpoMode::Msc;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  cfg.run_dir = "runs/" + name + "_seed" + std::to_string(cfg.seed);
  return cfg;
}

}  // namespace flexmuse
