// Copyright 2026 The Pale Attention Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <benchmark/benchmark.h>

#include "pale/attention.hpp"
#include "pale/complexity.hpp"
#include "pale/harness/oracles.hpp"

namespace {

using namespace pale;

template <AttentionMode Mode>
void BM_AttentionForward(benchmark::State& state) {
  const Index extent = state.range(0);
  const Index channels = state.range(1);
  const PartitionSpec spec{7, 7, true};
  Rng rng(1);
  const auto params = make_attention_params<float>(channels, 2, QkvKind::kSeparable, rng);
  const Var<float> x = constant(harness::uniform_tensor<float>({1, extent, extent, channels}, rng));
  const AttentionConfig config{Mode, spec, MaskPolicy::kApply};
  NoGradGuard no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(attention_forward(x, config, params, 0));
  }
  const auto ma = flops_attention(Mode, extent, extent, channels, spec, 0, QkvKind::kSeparable).total();
  state.counters["ma_count"] = static_cast<double>(ma);
  state.counters["ma_per_s"] = benchmark::Counter(static_cast<double>(ma), benchmark::Counter::kIsIterationInvariantRate);
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({14, 64})->Args({28, 64})->Args({56, 64})->Unit(benchmark::kMillisecond);
}

BENCHMARK(BM_AttentionForward<AttentionMode::kGlobal>)->Args({14, 64})->Args({28, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AttentionForward<AttentionMode::kAxial>)->Apply(shapes);
BENCHMARK(BM_AttentionForward<AttentionMode::kCrossShaped>)->Apply(shapes);
BENCHMARK(BM_AttentionForward<AttentionMode::kPaleVanilla>)->Apply(shapes);
BENCHMARK(BM_AttentionForward<AttentionMode::kPaleSequential>)->Apply(shapes);
BENCHMARK(BM_AttentionForward<AttentionMode::kPaleParallel>)->Apply(shapes);

void BM_GroupedAttention(benchmark::State& state) {
  const Index groups = state.range(0);
  const Index tokens = state.range(1);
  Rng rng(3);
  const auto q = constant(harness::uniform_tensor<float>({1, groups, tokens, 32}, rng));
  const auto k = constant(harness::uniform_tensor<float>({1, groups, tokens, 32}, rng));
  const auto v = constant(harness::uniform_tensor<float>({1, groups, tokens, 32}, rng));
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(grouped_attention(q, k, v, 2));
}
BENCHMARK(BM_GroupedAttention)->Args({8, 56})->Args({8, 392})->Args({1, 784})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
