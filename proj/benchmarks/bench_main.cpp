// SPDX-License-Identifier: Apache-2.0
//
// Micro-benchmarks for the tensor kernels, both encoders and the tokenizer.

#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "seqcoder/heads.hpp"
#include "seqcoder/model.hpp"
#include "seqcoder/ops.hpp"
#include "seqcoder/synth.hpp"
#include "seqcoder/tokenizer.hpp"

using namespace seqcoder;

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng, bool grad) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = uniform(rng, -1.0, 1.0);
  return Tensor::from({rows, cols}, v, grad);
}

std::vector<int> random_ids(std::size_t n, std::size_t vocab, Rng& rng) {
  std::vector<int> ids(n);
  for (auto& id : ids) id = static_cast<int>(uniform_index(rng, vocab));
  return ids;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_matrix(n, n, rng, false);
  const Tensor b = random_matrix(n, n, rng, false);
  NoGradGuard guard;
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256);

static void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  Tensor a = random_matrix(n, n, rng, true);
  Tensor b = random_matrix(n, n, rng, true);
  for (auto _ : state) {
    a.zero_grad();
    b.zero_grad();
    backward(sum(matmul(a, b)));
  }
}
BENCHMARK(BM_MatmulBackward)->RangeMultiplier(2)->Range(16, 256);

static void BM_EncoderForwardBackward(benchmark::State& state) {
  const auto kind = state.range(0) == 0 ? EncoderKind::kLstm : EncoderKind::kTransformer;
  const auto T = static_cast<std::size_t>(state.range(1));
  const std::size_t V = 2000;
  ModelConfig config = kind == EncoderKind::kLstm ? ModelConfig::desk_lstm(V) : ModelConfig::desk_transformer(V);
  SequenceModel model(config, 3);
  Rng rng(4);
  const std::vector<int> ids = random_ids(T, V, rng);
  for (auto _ : state) {
    model.params().zero_grad();
    backward(lm_loss(model.lm_head(), model.encode(ids), ids));
  }
  state.SetLabel(to_string(kind));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(T));
}
BENCHMARK(BM_EncoderForwardBackward)
    ->ArgsProduct({{0, 1}, {32, 128, 256}})
    ->Unit(benchmark::kMillisecond);

static void BM_BpeEncode(benchmark::State& state) {
  SynthConfig config;
  config.a_notes = 400;
  config.b_notes = 1;
  config.b_unlabeled = 1;
  const SynthCorpora corpora = synth_generate(config);
  std::vector<std::vector<std::string>> corpus;
  std::size_t words = 0;
  for (const auto& r : corpora.hospital_a.records) {
    corpus.push_back(preprocess(r.text));
    words += corpus.back().size();
  }
  const BpeModel tokenizer = bpe_train(corpus, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    for (const auto& note : corpus) benchmark::DoNotOptimize(tokenizer.encode(note));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(words));
}
BENCHMARK(BM_BpeEncode)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
