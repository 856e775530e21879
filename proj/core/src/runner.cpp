#include "flexmuse/runner.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "flexmuse/checkpoint.hpp"
#include "flexmuse/corpus.hpp"
#include "flexmuse/error.hpp"
#include "flexmuse/mscdpo.hpp"

namespace flexmuse {

namespace fs = std::filesystem;

namespace {

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

std::string join(const std::string& dir, const std::string& path) {
  if (path.empty()) throw ConfigError("empty path");
  if (fs::path(path).is_absolute()) return path;
  return (fs::path(dir) / path).string();
}

void prepare_run_dir(const RunConfig& cfg) {
  fs::create_directories(cfg.run_dir);
  std::ofstream out(join(cfg.run_dir, "config.resolved"));
  if (!out) throw IoError("cannot write resolved config in " + cfg.run_dir);
  out << cfg.serialize();
}

struct TrainingData {
  std::vector<MuseDocument> docs;
  EmbeddingStore store;
  Vocab vocab;
};

TrainingData load_training_data(const RunConfig& cfg) {
  TrainingData d;
  d.docs = load_corpus(join(cfg.run_dir, cfg.corpus_path));
  d.store = load_embedding_store(join(cfg.run_dir, cfg.store_path));
  d.vocab = Vocab::build(corpus_symbols(d.docs));
  return d;
}

struct TrainExample {
  Embedding topic_emb;
  const Embedding* image_emb;
  std::vector<int> tokens;  // with EOS
};

std::vector<TrainExample> build_examples(const TrainingData& data, const RunConfig& cfg) {
  std::vector<TrainExample> out;
  for (const auto& doc : data.docs) {
    const Embedding topic_emb =
        toy_encode(doc.topic, Modality::Text, cfg.dim, cfg.encoder_seed);
    for (const auto& unit : doc.units) {
      TrainExample ex;
      ex.topic_emb = topic_emb;
      ex.image_emb = &data.store.lookup(unit.image_id);
      ex.tokens = tokenize(unit.text, data.vocab);
      ex.tokens.push_back(kEos);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

// Mean SFT loss and joint clipped step over LM and fusion parameters.
double sft_epoch_step(std::vector<TrainExample>& examples, LMParams& lm, FusionParams& fusion,
                      const RunConfig& cfg, Rng& gate_rng, bool update) {
  LMGradients acc;
  acc.params = LMParams::zeros_like(lm);
  Vec fq(fusion.dim(), 0.0), fk = fq, fv = fq, fl = fq;
  double loss = 0.0;

  const GateSettings gate = cfg.gate_settings();
  for (auto& ex : examples) {
    FusionCache cache;
    const Vec prefix =
        fused_prefix(ex.topic_emb, *ex.image_emb, fusion, cfg.fusion, gate, gate_rng, &cache);
    if (!update) {
      loss -= sequence_logprob(prefix, ex.tokens, lm) / static_cast<double>(ex.tokens.size());
      continue;
    }
    loss += sft_loss_accumulate(prefix, ex.tokens, lm, acc);
    FusionGrads fg = fuse_backward(acc.d_prefix, cache);
    for (std::size_t i = 0; i < fq.size(); ++i) {
      fq[i] += fg.w_q[i];
      fk[i] += fg.w_k[i];
      fv[i] += fg.w_v[i];
      fl[i] += fg.w_lambda[i];
    }
  }

  const double inv_n = 1.0 / static_cast<double>(examples.size());
  loss *= inv_n;
  if (!update) return loss;

  visit_param_blocks(acc.params, [&](const std::string&, Vec& v) {
    for (auto& x : v) x *= inv_n;
  });
  double sq = grad_global_norm(acc.params);
  sq = sq * sq;
  for (auto* v : {&fq, &fk, &fv, &fl}) {
    for (auto& x : *v) {
      x *= inv_n;
      sq += x * x;
    }
  }
  const double norm = std::sqrt(sq);
  double scale = cfg.sft_lr;
  if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) scale = cfg.sft_lr * cfg.clip_norm / norm;
  apply_sgd_step(lm, acc.params, scale, 0.0);
  for (std::size_t i = 0; i < fq.size(); ++i) {
    fusion.w_q[i] -= scale * fq[i];
    fusion.w_k[i] -= scale * fk[i];
    fusion.w_v[i] -= scale * fv[i];
    fusion.w_lambda[i] -= scale * fl[i];
  }
  return loss;
}

}  // namespace

void run_gen_data(const RunConfig& cfg, const Logger& log) {
  cfg.validate();
  prepare_run_dir(cfg);
  GeneratedCorpus corpus = gen_corpus(cfg.corpus, cfg.dim, cfg.encoder_seed);
  write_corpus_files(corpus, cfg.corpus, join(cfg.run_dir, cfg.corpus_path),
                     join(cfg.run_dir, cfg.store_path), join(cfg.run_dir, "manifest.json"));
  say(log, "gen-data: " + std::to_string(corpus.docs.size()) + " documents, " +
               std::to_string(corpus.store.size()) + " image embeddings");
}

SftRunResult run_train_sft(const RunConfig& cfg, const Logger& log) {
  cfg.validate();
  prepare_run_dir(cfg);
  TrainingData data = load_training_data(cfg);
  auto examples = build_examples(data, cfg);

  Rng init_rng(cfg.seed);
  FusionParams fusion = FusionParams::init(cfg.dim, init_rng);
  LMParams lm = LMParams::init(cfg.lm_config(data.vocab.size()), init_rng);
  Rng gate_rng(cfg.gate.seed ^ (cfg.seed * 0x9e3779b97f4a7c15ULL));

  double loss = 0.0;
  for (std::size_t step = 0; step < cfg.sft_steps; ++step) {
    loss = sft_epoch_step(examples, lm, fusion, cfg, gate_rng, true);
    if (log && (step % 100 == 0 || step + 1 == cfg.sft_steps)) {
      say(log, "sft step " + std::to_string(step) + " loss " + std::to_string(loss));
    }
  }

  Checkpoint ckpt;
  ckpt.config_echo = cfg.serialize();
  ckpt.vocab = data.vocab;
  ckpt.fusion = fusion;
  ckpt.lm = lm;
  ckpt.rng_state = gate_rng.state();
  SftRunResult res;
  res.final_loss = loss;
  res.checkpoint_path = join(cfg.run_dir, "sft.ckpt");
  save_checkpoint(ckpt, res.checkpoint_path);
  say(log, "sft done, final loss " + std::to_string(loss));
  return res;
}

DpoRunResult run_train_dpo(const RunConfig& cfg, const Logger& log) {
  cfg.validate();
  if (!cfg.dpo_enabled) throw ConfigError("train-dpo: dpo.enabled is false in this config");
  prepare_run_dir(cfg);
  TrainingData data = load_training_data(cfg);

  Checkpoint sft_ckpt = load_checkpoint(join(cfg.run_dir, "sft.ckpt"));
  DpoModelState policy{sft_ckpt.lm, sft_ckpt.fusion};
  const DpoModelState reference{sft_ckpt.lm, sft_ckpt.fusion};

  PairBuildStats stats;
  auto pairs = build_pref_pairs_corpus(data.docs, cfg.dpo, cfg.seed, &stats);
  if (pairs.empty()) throw DataError("train-dpo: no preference pairs could be built");
  save_pref_pairs(pairs, join(cfg.run_dir, "pref_pairs.jsonl"));

  DpoContext ctx;
  ctx.store = &data.store;
  ctx.vocab = &sft_ckpt.vocab;
  ctx.gate = cfg.gate_settings();
  ctx.fusion_cfg = cfg.fusion;
  ctx.encoder_seed = cfg.encoder_seed;

  Rng rng(cfg.seed ^ 0xd1feULL);
  DpoRunResult res;
  res.n_pairs = pairs.size();
  res.skipped_single_unit_docs = stats.skipped_single_unit_docs;
  for (std::size_t step = 0; step < cfg.dpo_steps; ++step) {
    std::vector<PreferencePair> batch;
    if (pairs.size() <= cfg.dpo_batch_size) {
      batch = pairs;
    } else {
      for (std::size_t i = 0; i < cfg.dpo_batch_size; ++i) {
        batch.push_back(pairs[rng.below(pairs.size())]);
      }
    }
    DpoStepMetrics m =
        train_step_dpo(batch, policy, reference, ctx, cfg.dpo, cfg.dpo_lr, cfg.clip_norm, rng);
    if (step == 0) res.first_loss = m.mean_loss;
    res.final_loss = m.mean_loss;
    res.final_margin = m.mean_margin;
    if (log && (step % 50 == 0 || step + 1 == cfg.dpo_steps)) {
      say(log, "dpo step " + std::to_string(step) + " loss " + std::to_string(m.mean_loss) +
                   " margin " + std::to_string(m.mean_margin));
    }
  }

  Checkpoint out = sft_ckpt;
  out.fusion = policy.fusion;
  out.lm = policy.lm;
  out.rng_state = rng.state();
  res.checkpoint_path = join(cfg.run_dir, "dpo.ckpt");
  save_checkpoint(out, res.checkpoint_path);
  say(log, "dpo done: pairs " + std::to_string(res.n_pairs) + ", skipped single-unit docs " +
               std::to_string(res.skipped_single_unit_docs) + ", final margin " +
               std::to_string(res.final_margin));
  return res;
}

GenerateRunResult run_generate(const RunConfig& cfg, const Logger& log) {
  cfg.validate();
  prepare_run_dir(cfg);
  TrainingData data = load_training_data(cfg);
  const std::string ckpt_path =
      join(cfg.run_dir, cfg.dpo_enabled ? "dpo.ckpt" : "sft.ckpt");
  Checkpoint ckpt = load_checkpoint(ckpt_path);

  std::vector<MuseDocument> generated;
  fs::create_directories(join(cfg.run_dir, "generated"));
  for (const auto& doc : data.docs) {
    const Embedding topic_emb =
        toy_encode(doc.topic, Modality::Text, cfg.dim, cfg.encoder_seed);
    std::vector<std::string> ids;
    for (const auto& u : doc.units) ids.push_back(u.image_id);
    const InputSet set = build_input_set(doc.topic, topic_emb, ids, data.store);
    const std::uint64_t doc_seed =
        cfg.seed ^ fnv1a64(doc.doc_id.data(), doc.doc_id.size());
    MuseDocument gen = generate_muse(set, ckpt, cfg.gate_settings(), cfg.fusion, cfg.decode,
                                     doc_seed, doc.doc_id);
    std::ofstream txt(join(cfg.run_dir, "generated/" + doc.doc_id + ".txt"));
    txt << assemble_document(gen);
    generated.push_back(std::move(gen));
  }

  GenerateRunResult res;
  res.output_path = join(cfg.run_dir, "generated.jsonl");
  save_corpus(generated, res.output_path);
  say(log, "generate: wrote " + std::to_string(generated.size()) + " documents");
  return res;
}

EvalRunResult run_eval(const RunConfig& cfg, const Logger& log) {
  cfg.validate();
  prepare_run_dir(cfg);
  auto references = load_corpus(join(cfg.run_dir, cfg.corpus_path));
  auto candidates = load_corpus(join(cfg.run_dir, "generated.jsonl"));
  if (candidates.size() != references.size()) {
    throw DataError("eval: generated corpus has " + std::to_string(candidates.size()) +
                    " documents, references have " + std::to_string(references.size()));
  }

  // The metric vocabulary covers both sides so candidate-only symbols are
  // not silently dropped.
  auto all_docs = references;
  all_docs.insert(all_docs.end(), candidates.begin(), candidates.end());
  const Vocab vocab = Vocab::build(corpus_symbols(all_docs));

  EvalRunResult res;
  res.report = evaluate_corpus(candidates, references, vocab, cfg.dim, cfg.encoder_seed);
  res.report_path = join(cfg.run_dir, "metrics.json");
  save_metric_report(res.report, res.report_path);

  std::vector<JudgeRequest> requests;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto r = emit_judge_prompts(candidates[i], &references[i], cfg.template_dir);
    requests.insert(requests.end(), r.begin(), r.end());
  }
  save_judge_requests(requests, join(cfg.run_dir, "judge_requests.jsonl"));
  say(log, "eval: rouge1 " + std::to_string(res.report.rouge1) + " rouge2 " +
               std::to_string(res.report.rouge2) + " rougeL " + std::to_string(res.report.rougeL) +
               " embedding_f1 " + std::to_string(res.report.embedding_f1));
  return res;
}

namespace {

// Finite differences over a fusion parameter block via a scalar probe
// f = g . z_f with fixed random g.
void gradcheck_fusion(std::size_t attention_tokens, std::size_t n_seeds,
                      std::vector<GradReport>& reports) {
  const std::size_t d = 8;
  const std::string tag = "fusion.L" + std::to_string(attention_tokens) + ".";
  for (std::size_t seed = 0; seed < n_seeds; ++seed) {
    Rng rng(1000 + seed);
    FusionParams params = FusionParams::init(d, rng, 0.5);
    const Embedding zv = toy_encode("zv" + std::to_string(seed), Modality::Image, d, seed);
    Vec zt(d);
    for (auto& x : zt) x = rng.normal();
    Vec g(d);
    for (auto& x : g) x = rng.normal();

    FusionConfig cfg;
    cfg.attention_tokens = attention_tokens;
    FusionCache cache;
    fuse_forward(zv, zt, params, cfg, &cache);
    const FusionGrads grads = fuse_backward(g, cache);

    struct Block {
      const char* name;
      Vec FusionParams::*member;
      const Vec* analytic;
    };
    const Block blocks[] = {{"w_q", &FusionParams::w_q, &grads.w_q},
                            {"w_k", &FusionParams::w_k, &grads.w_k},
                            {"w_v", &FusionParams::w_v, &grads.w_v},
                            {"w_lambda", &FusionParams::w_lambda, &grads.w_lambda}};
    for (const auto& b : blocks) {
      auto f = [&](const Vec& x) {
        FusionParams p = params;
        p.*(b.member) = x;
        return vec_dot(g, fuse_forward(zv, zt, p, cfg).z_f);
      };
      const Vec numeric = finite_diff_grad(f, params.*(b.member), 1e-5);
      reports.push_back(make_grad_report(tag + b.name, *b.analytic, numeric));
    }
    // Input gradients.
    auto f_zv = [&](const Vec& x) {
      return vec_dot(g, fuse_forward(Embedding(x, Modality::Image, "zv"), zt, params, cfg).z_f);
    };
    reports.push_back(
        make_grad_report(tag + "zv", grads.zv, finite_diff_grad(f_zv, zv.vector, 1e-5)));
    auto f_zt = [&](const Vec& x) { return vec_dot(g, fuse_forward(zv, x, params, cfg).z_f); };
    reports.push_back(
        make_grad_report(tag + "zt_gated", grads.zt_gated, finite_diff_grad(f_zt, zt, 1e-5)));
  }
}

// LM blocks are large, so each (seed, block) samples a handful of
// coordinates and compares them against central differences.
void gradcheck_lm(const RunConfig& cfg, std::size_t n_seeds, std::vector<GradReport>& reports) {
  const std::size_t d_feat = 8;
  const std::size_t vocab_size = 12;
  const std::size_t coords_per_block = 6;

  for (std::size_t seed = 0; seed < n_seeds; ++seed) {
    Rng rng(2000 + seed);
    LMConfig lmc;
    lmc.feature_dim = d_feat;
    lmc.vocab_size = vocab_size;
    lmc.d_model = cfg.lm_d_model;
    lmc.n_layers = cfg.lm_n_layers;
    lmc.n_heads = cfg.lm_n_heads;
    lmc.d_ff = cfg.lm_d_ff;
    lmc.max_len = 32;
    LMParams params = LMParams::init(lmc, rng);
    // Random output head so its gradient path is exercised too.
    for (auto& x : params.out_w) x = rng.normal() * 0.02;

    Vec prefix(d_feat);
    for (auto& x : prefix) x = rng.normal();
    std::vector<int> tokens(6);
    for (auto& t : tokens) t = static_cast<int>(rng.below(vocab_size));

    const SftResult base = sft_loss(prefix, tokens, params);

    std::vector<std::pair<std::string, Vec*>> blocks;
    visit_param_blocks(params, [&](const std::string& name, Vec& v) {
      blocks.emplace_back(name, &v);
    });
    std::vector<const Vec*> grad_blocks;
    visit_param_blocks(base.grads.params,
                       [&](const std::string&, const Vec& v) { grad_blocks.push_back(&v); });

    for (std::size_t b = 0; b < blocks.size(); ++b) {
      Vec& block = *blocks[b].second;
      const Vec& analytic_full = *grad_blocks[b];
      const std::size_t n = std::min(coords_per_block, block.size());
      Vec analytic(n), numeric(n);
      for (std::size_t c = 0; c < n; ++c) {
        const std::size_t idx = rng.below(block.size());
        auto f = [&](const Vec& x) {
          const Vec saved = block;
          block = x;
          const double loss = sft_loss(prefix, tokens, params).loss;
          block = saved;
          return loss;
        };
        analytic[c] = analytic_full[idx];
        numeric[c] = finite_diff_at(f, block, idx, 1e-5);
      }
      reports.push_back(make_grad_report("lm." + blocks[b].first, analytic, numeric));
    }

    // Prefix input gradient, full.
    auto f_prefix = [&](const Vec& x) { return sft_loss(x, tokens, params).loss; };
    reports.push_back(make_grad_report("lm.prefix_input", base.grads.d_prefix,
                                       finite_diff_grad(f_prefix, prefix, 1e-5)));
  }
}

// Composed gate -> fusion -> lm path, gradients with respect to the fusion
// parameters; the gate runs unmasked fixed-threshold so the path stays
// differentiable.
void gradcheck_composed(const RunConfig& cfg, std::size_t n_seeds,
                        std::vector<GradReport>& reports) {
  const std::size_t d_feat = 8;
  const std::size_t vocab_size = 12;

  for (std::size_t seed = 0; seed < n_seeds; ++seed) {
    Rng rng(3000 + seed);
    FusionParams fusion = FusionParams::init(d_feat, rng, 0.5);
    LMConfig lmc;
    lmc.feature_dim = d_feat;
    lmc.vocab_size = vocab_size;
    lmc.d_model = cfg.lm_d_model;
    lmc.n_layers = cfg.lm_n_layers;
    lmc.n_heads = cfg.lm_n_heads;
    lmc.d_ff = cfg.lm_d_ff;
    lmc.max_len = 32;
    LMParams lm = LMParams::init(lmc, rng);
    for (auto& x : lm.out_w) x = rng.normal() * 0.3;

    const Embedding zt = toy_encode("t" + std::to_string(seed), Modality::Text, d_feat, seed);
    const Embedding zv = toy_encode("v" + std::to_string(seed), Modality::Image, d_feat, seed);
    // The probe sums losses over several token sequences; a single sequence
    // can leave individual fusion-gradient coordinates close to zero, where
    // the relative-error floor amplifies finite-difference noise.
    std::vector<std::vector<int>> sequences(3, std::vector<int>(5));
    for (auto& tokens : sequences) {
      for (auto& t : tokens) t = static_cast<int>(rng.below(vocab_size));
    }

    GateSettings gate;
    gate.enabled = true;
    gate.config.mode = GateMode::FixedThreshold;
    gate.config.fixed_tau = 1.0;  // sigma < 1 for distinct anchors: unmasked
    FusionConfig fcfg;
    fcfg.attention_tokens = 2;

    auto loss_of = [&](const FusionParams& p) {
      Rng r0(0);
      const Vec prefix = fused_prefix(zt, zv, p, fcfg, gate, r0);
      double total = 0.0;
      for (const auto& tokens : sequences) total += sft_loss(prefix, tokens, lm).loss;
      return total;
    };

    Rng r0(0);
    FusionCache cache;
    const Vec prefix = fused_prefix(zt, zv, fusion, fcfg, gate, r0, &cache);
    Vec d_prefix(d_feat, 0.0);
    for (const auto& tokens : sequences) {
      const SftResult base = sft_loss(prefix, tokens, lm);
      for (std::size_t i = 0; i < d_feat; ++i) d_prefix[i] += base.grads.d_prefix[i];
    }
    const FusionGrads fg = fuse_backward(d_prefix, cache);

    struct Block {
      const char* name;
      Vec FusionParams::*member;
      const Vec* analytic;
    };
    const Block blocks[] = {{"w_q", &FusionParams::w_q, &fg.w_q},
                            {"w_k", &FusionParams::w_k, &fg.w_k},
                            {"w_v", &FusionParams::w_v, &fg.w_v},
                            {"w_lambda", &FusionParams::w_lambda, &fg.w_lambda}};
    for (const auto& b : blocks) {
      auto f = [&](const Vec& x) {
        FusionParams p = fusion;
        p.*(b.member) = x;
        return loss_of(p);
      };
      const Vec numeric = finite_diff_grad(f, fusion.*(b.member), 1e-5);
      reports.push_back(make_grad_report("composed." + std::string(b.name), *b.analytic, numeric));
    }
  }
}

}  // namespace

GradCheckResult run_gradcheck(const RunConfig& cfg, std::size_t n_seeds, const Logger& log) {
  GradCheckResult res;
  gradcheck_fusion(1, n_seeds, res.reports);
  gradcheck_fusion(2, n_seeds, res.reports);
  gradcheck_lm(cfg, n_seeds, res.reports);
  gradcheck_composed(cfg, n_seeds, res.reports);

  for (const auto& r : res.reports) res.worst = std::max(res.worst, r.max_rel_err);
  res.passed = res.worst < 1e-3;
  if (log) {
    // One line per distinct block name, worst across seeds.
    std::map<std::string, double> per_block;
    for (const auto& r : res.reports) {
      auto [it, inserted] = per_block.emplace(r.param_name, r.max_rel_err);
      if (!inserted) it->second = std::max(it->second, r.max_rel_err);
    }
    for (const auto& [name, err] : per_block) {
      say(log, "gradcheck " + name + " max_rel_err " + std::to_string(err) +
                   (err < 1e-3 ? " ok" : " FAIL"));
    }
  }
  return res;
}

}  // namespace flexmuse
