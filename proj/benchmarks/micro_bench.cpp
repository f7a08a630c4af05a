// Copyright 2026 The beecurate Authors.
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

// Micro-benchmarks for the hot paths: fitting, filtering, sampling and the
// fusion forward/backward passes.

#include <set>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "beecurate/loss_stats.hpp"
#include "beecurate/rng.hpp"
#include "beecurate/sampling.hpp"
#include "beecurate/vit_fusion.hpp"

namespace {

using namespace beecurate;

std::vector<double> normal_losses(std::size_t n) {
  CounterRng rng(1);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(5.0, 1.0);
  return v;
}

void BM_FitNormal(benchmark::State& state) {
  const auto v = normal_losses(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fit_normal(v));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FitNormal)->Range(1 << 10, 1 << 20);

void BM_FilterDataset(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto v = normal_losses(n);
  std::vector<SampleRecord> samples(n);
  std::vector<LossRecord> losses(n);
  for (std::size_t i = 0; i < n; ++i) {
    samples[i].id = "s" + std::to_string(i);
    samples[i].answer = "-";
    losses[i] = {samples[i].id, v[i], "bench"};
  }
  for (auto _ : state) benchmark::DoNotOptimize(filter_dataset(samples, losses, {2.0, "bench"}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FilterDataset)->Range(1 << 10, 1 << 17);

void BM_SampleToken(benchmark::State& state) {
  CounterRng rng(2);
  std::vector<double> logits(static_cast<std::size_t>(state.range(0)));
  for (auto& l : logits) l = rng.normal();
  SamplingConfig config;
  config.temperature = 0.8;
  config.top_k = 50;
  config.top_p = 0.9;
  for (auto _ : state) {
    auto s = sample_token(logits, config, rng);
    rng = s.rng;
    benchmark::DoNotOptimize(s.token);
  }
}
BENCHMARK(BM_SampleToken)->Arg(256)->Arg(32000);

struct TrunkFixture {
  vit::TrunkConfig config;
  vit::TrunkParams trunk = vit::init_trunk(config);
  vit::Matrix embeddings;

  TrunkFixture() {
    CounterRng rng(3);
    vit::Matrix patches(config.num_patches, config.patch_dim);
    for (Eigen::Index i = 0; i < patches.size(); ++i) patches.data()[i] = rng.normal();
    embeddings = vit::embed_patches(trunk, patches);
  }
};

void BM_ForwardWithTaps(benchmark::State& state) {
  const TrunkFixture f;
  const std::set<int> taps = {4, 6};
  for (auto _ : state) benchmark::DoNotOptimize(vit::forward_with_taps(f.trunk, f.embeddings, taps));
}
BENCHMARK(BM_ForwardWithTaps);

void BM_ProbeGradients(benchmark::State& state) {
  const TrunkFixture f;
  const auto features = vit::forward_with_taps(f.trunk, f.embeddings, {4, 6});
  const auto params = vit::init_projector({}, 4);
  const auto strategy = vit::parse_fusion_strategy("mean:middle,deep combine=concat", f.config.depth);
  for (auto _ : state) benchmark::DoNotOptimize(vit::probe_gradients(features, strategy, params));
}
BENCHMARK(BM_ProbeGradients);

}  // namespace

BENCHMARK_MAIN();
