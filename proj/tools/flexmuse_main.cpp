// Command-line front end: gen-data, train-sft, train-dpo, generate, eval,
// gradcheck. Configuration comes from a flat key=value file, a named
// preset, --set overrides, and FLEXMUSE_SET_* environment variables.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flexmuse/config.hpp"
#include "flexmuse/error.hpp"
#include "flexmuse/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitAcceptance = 3;

void apply_override(flexmuse::RunConfig& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) {
    throw flexmuse::ConfigError("--set expects key=value, got '" + kv + "'");
  }
  cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
}

// FLEXMUSE_SET_gate.mode is not a valid env var name, so dots map to
// double underscores: FLEXMUSE_SET_gate__mode=sampled.
void apply_env_overrides(flexmuse::RunConfig& cfg, char** envp) {
  const std::string prefix = "FLEXMUSE_SET_";
  for (char** e = envp; e && *e; ++e) {
    std::string entry(*e);
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string key = entry.substr(prefix.size(), eq - prefix.size());
    std::size_t pos;
    while ((pos = key.find("__")) != std::string::npos) key.replace(pos, 2, ".");
    cfg.set(key, entry.substr(eq + 1));
  }
}

}  // namespace

int main(int argc, char** argv, char** envp) {
  CLI::App app{"FlexMUSE desk-scale multimodal creative-writing pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string preset;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "flat key=value configuration file");
  app.add_option("--preset", preset,
                 "named ablation preset: sft|dpo|mscdpo|msagate|msagate_dpo|flexmuse");
  app.add_option("--set", overrides, "override one key, e.g. --set gate.mode=sampled");

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus and embedding store");
  auto* sft = app.add_subcommand("train-sft", "supervised fine-tuning phase");
  auto* dpo = app.add_subcommand("train-dpo", "preference-optimization phase");
  auto* generate = app.add_subcommand("generate", "generate documents from the trained model");
  auto* eval = app.add_subcommand("eval", "compute metrics and emit judge prompts");
  auto* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference verification of every gradient path");

  std::size_t gradcheck_seeds = 20;
  gradcheck->add_option("--seeds", gradcheck_seeds, "number of random instances per suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    flexmuse::RunConfig cfg;
    if (!preset.empty()) cfg = flexmuse::preset_config(preset);
    if (!config_path.empty()) {
      cfg = flexmuse::parse_config_file(config_path);
      if (!preset.empty()) {
        std::cerr << "error: --preset and --config are mutually exclusive\n";
        return kExitConfig;
      }
    }
    for (const auto& kv : overrides) apply_override(cfg, kv);
    apply_env_overrides(cfg, envp);
    cfg.validate();

    const flexmuse::Logger log = [](const std::string& msg) { std::cout << msg << "\n"; };

    if (gen->parsed()) {
      flexmuse::run_gen_data(cfg, log);
    } else if (sft->parsed()) {
      flexmuse::run_train_sft(cfg, log);
    } else if (dpo->parsed()) {
      flexmuse::run_train_dpo(cfg, log);
    } else if (generate->parsed()) {
      flexmuse::run_generate(cfg, log);
    } else if (eval->parsed()) {
      flexmuse::run_eval(cfg, log);
    } else if (gradcheck->parsed()) {
      auto res = flexmuse::run_gradcheck(cfg, gradcheck_seeds, log);
      std::cout << "gradcheck worst max_rel_err " << res.worst << "\n";
      if (!res.passed) return kExitAcceptance;
    }
    return kExitOk;
  } catch (const flexmuse::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const flexmuse::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const flexmuse::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitData;
  } catch (const flexmuse::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const flexmuse::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
