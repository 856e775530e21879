#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "flexmuse/encoders.hpp"
#include "flexmuse/eval.hpp"
#include "flexmuse/fusion.hpp"
#include "flexmuse/lm.hpp"
#include "flexmuse/rng.hpp"

using namespace flexmuse;

namespace {

Vec random_vec(std::size_t n, Rng& rng) {
  Vec v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

void BM_fuse_forward(benchmark::State& state) {
  const std::size_t d = static_cast<std::size_t>(state.range(0));
  const std::size_t tokens = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  const FusionParams params = FusionParams::init(d, rng, 0.5);
  const Embedding zv(random_vec(d, rng), Modality::Image, "v");
  const Vec zt = random_vec(d, rng);
  FusionConfig cfg;
  cfg.attention_tokens = tokens;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fuse_forward(zv, zt, params, cfg));
  }
}
BENCHMARK(BM_fuse_forward)->Args({16, 1})->Args({16, 2})->Args({64, 4})->Args({256, 8});

void BM_fuse_backward(benchmark::State& state) {
  const std::size_t d = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const FusionParams params = FusionParams::init(d, rng, 0.5);
  const Embedding zv(random_vec(d, rng), Modality::Image, "v");
  const Vec zt = random_vec(d, rng);
  const Vec g = random_vec(d, rng);
  FusionConfig cfg;
  cfg.attention_tokens = 2;
  FusionCache cache;
  fuse_forward(zv, zt, params, cfg, &cache);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fuse_backward(g, cache));
  }
}
BENCHMARK(BM_fuse_backward)->Arg(16)->Arg(64)->Arg(256);

LMParams bench_lm(std::size_t d_model, Rng& rng) {
  LMConfig cfg;
  cfg.feature_dim = 16;
  cfg.vocab_size = 40;
  cfg.d_model = d_model;
  cfg.n_layers = 2;
  cfg.n_heads = 4;
  cfg.d_ff = 4 * d_model;
  cfg.max_len = 64;
  return LMParams::init(cfg, rng);
}

void BM_sft_loss(benchmark::State& state) {
  Rng rng(3);
  const LMParams params = bench_lm(static_cast<std::size_t>(state.range(0)), rng);
  const Vec prefix = random_vec(16, rng);
  std::vector<int> tokens(24);
  for (auto& t : tokens) t = static_cast<int>(rng.below(40));
  for (auto _ : state) {
    benchmark::DoNotOptimize(sft_loss(prefix, tokens, params).loss);
  }
}
BENCHMARK(BM_sft_loss)->Arg(32)->Arg(64);

void BM_sft_loss_accumulate(benchmark::State& state) {
  Rng rng(4);
  const LMParams params = bench_lm(64, rng);
  const Vec prefix = random_vec(16, rng);
  std::vector<int> tokens(24);
  for (auto& t : tokens) t = static_cast<int>(rng.below(40));
  LMGradients acc;
  acc.params = LMParams::zeros_like(params);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sft_loss_accumulate(prefix, tokens, params, acc));
  }
}
BENCHMARK(BM_sft_loss_accumulate);

void BM_rouge_l(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  std::vector<int> cand(n), ref(n);
  for (auto& t : cand) t = static_cast<int>(rng.below(30));
  for (auto& t : ref) t = static_cast<int>(rng.below(30));
  for (auto _ : state) {
    benchmark::DoNotOptimize(rouge_l(cand, ref));
  }
}
BENCHMARK(BM_rouge_l)->Arg(32)->Arg(256);

void BM_toy_encode(benchmark::State& state) {
  const std::size_t d = static_cast<std::size_t>(state.range(0));
  std::size_t salt = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        toy_encode("topic-" + std::to_string(salt++ & 15), Modality::Text, d, 1));
  }
}
BENCHMARK(BM_toy_encode)->Arg(16)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
