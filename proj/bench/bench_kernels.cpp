// Copyright 2026 The Manatee AST Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Parallel kernels against their serial references, plus the two per-sample
// costs that dominate training: feature extraction and forward/backward.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "manatee/dsp.hpp"
#include "manatee/kernels.hpp"
#include "manatee/model.hpp"
#include "manatee/reference.hpp"

namespace {

using namespace manatee;

std::vector<float> random_vector(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

AudioClip random_clip() {
  AudioClip c;
  c.samples = random_vector(kClipSamples, 7);
  for (auto& s : c.samples) s *= 0.1f;
  return c;
}

void BM_LinearKernel(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t in = 64, out = 256;
  auto x = random_vector(rows * in, 1), w = random_vector(in * out, 2), b = random_vector(out, 3);
  std::vector<float> y(rows * out);
  for (auto _ : state) {
    kernels::linear<float>(x, w, b, y, rows, in, out);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(rows * in * out));
}
BENCHMARK(BM_LinearKernel)->Arg(61)->Arg(610);

void BM_LinearReference(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t in = 64, out = 256;
  auto x = random_vector(rows * in, 1), w = random_vector(in * out, 2), b = random_vector(out, 3);
  std::vector<float> y(rows * out);
  for (auto _ : state) {
    reference::linear<float>(x, w, b, y, rows, in, out);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(rows * in * out));
}
BENCHMARK(BM_LinearReference)->Arg(61)->Arg(610);

void BM_AttentionKernel(benchmark::State& state) {
  const auto tokens = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 16;
  auto q = random_vector(tokens * dim, 1), k = random_vector(tokens * dim, 2),
       v = random_vector(tokens * dim, 3);
  std::vector<float> probs(tokens * tokens), out(tokens * dim);
  for (auto _ : state) {
    kernels::attention<float>(q, k, v, probs, out, tokens, dim);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_AttentionKernel)->Arg(61)->Arg(601);

void BM_AttentionReference(benchmark::State& state) {
  const auto tokens = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 16;
  auto q = random_vector(tokens * dim, 1), k = random_vector(tokens * dim, 2),
       v = random_vector(tokens * dim, 3);
  std::vector<float> probs(tokens * tokens), out(tokens * dim);
  for (auto _ : state) {
    reference::attention<float>(q, k, v, probs, out, tokens, dim);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_AttentionReference)->Arg(61)->Arg(601);

void BM_StftFftw(benchmark::State& state) {
  const auto clip = random_clip();
  for (auto _ : state) benchmark::DoNotOptimize(stft_power(clip));
}
BENCHMARK(BM_StftFftw);

void BM_StftNaiveDft(benchmark::State& state) {
  const auto clip = random_clip();
  for (auto _ : state) benchmark::DoNotOptimize(reference::stft_power(clip));
}
BENCHMARK(BM_StftNaiveDft)->Unit(benchmark::kMillisecond)->Iterations(3);

void BM_ExtractFeatures(benchmark::State& state) {
  const std::vector<AudioClip> clips(static_cast<std::size_t>(state.range(0)), random_clip());
  for (auto _ : state) benchmark::DoNotOptimize(extract_features(clips));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ExtractFeatures)->Arg(32)->Unit(benchmark::kMillisecond);

FilterbankFeature random_feature() {
  FilterbankFeature f;
  const auto v = random_vector(f.values.size(), 11);
  std::copy(v.begin(), v.end(), f.values.begin());
  f.normalized = true;
  return f;
}

void BM_DeskForward(benchmark::State& state) {
  Model<float> model(ModelConfig::desk());
  model.initialize(1);
  Workspace<float> ws(model.config());
  model.load_input(random_feature(), ws);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(ws));
}
BENCHMARK(BM_DeskForward)->Unit(benchmark::kMicrosecond);

void BM_DeskForwardBackward(benchmark::State& state) {
  Model<float> model(ModelConfig::desk());
  model.initialize(1);
  Workspace<float> ws(model.config());
  std::vector<float> grad(model.parameters().size());
  const auto feature = random_feature();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        loss_and_gradient<float>(model, feature, 1, ClassWeights{}, ws, grad));
  }
}
BENCHMARK(BM_DeskForwardBackward)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
