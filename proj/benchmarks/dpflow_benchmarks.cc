// Copyright 2026 The dpflow Authors
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

// Micro-benchmarks of the hot paths: density evaluation, per-example
// gradients, a full noisy step and the privacy accountants.

#include <vector>

#include <benchmark/benchmark.h>

#include "dpflow/accountant.h"
#include "dpflow/dp_optim.h"
#include "dpflow/flow_model.h"
#include "dpflow/generators.h"
#include "dpflow/random.h"

namespace dpflow {
namespace {

FlowModel BenchModel(int dim, int hidden) {
  MafConfig config;
  config.dim = dim;
  config.hidden = hidden;
  config.head_init_scale = 0.5;
  return FlowModel::MakeMaf(config, 1);
}

RowMatrix BenchData(int rows, int dim) {
  Rng rng = MakeRng(2);
  std::normal_distribution<double> normal;
  RowMatrix x(rows, dim);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  return x;
}

void BM_LogProb(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const FlowModel model = BenchModel(dim, static_cast<int>(state.range(1)));
  const RowMatrix x = BenchData(256, dim);
  Eigen::Index i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.LogProb(x.row(i).transpose()));
    i = (i + 1) % x.rows();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_LogProb)->Args({2, 64})->Args({10, 64})->Args({10, 128});

void BM_PerExampleGrad(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const FlowModel model = BenchModel(dim, static_cast<int>(state.range(1)));
  const RowMatrix x = BenchData(256, dim);
  Vector grad(model.ParameterCount());
  Eigen::Index i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.LossAndGrad(x.row(i).transpose(), grad));
    i = (i + 1) % x.rows();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PerExampleGrad)->Args({2, 64})->Args({10, 64})->Args({10, 128});

// Clipped gradient sum over one batch of 64, the bulk of a training step.
void BM_ClippedBatch(benchmark::State& state) {
  const FlowModel model = BenchModel(2, 64);
  const RowMatrix x = GenHalfMoons(1024, 0.1, 3).values;
  std::vector<Eigen::Index> rows(64);
  for (int i = 0; i < 64; ++i) rows[i] = i * 16;
  for (auto _ : state) {
    benchmark::DoNotOptimize(SumClippedGradients(model, x, rows, 300.0));
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_ClippedBatch);

void BM_RdpAccountantBuild(benchmark::State& state) {
  for (auto _ : state) {
    RdpAccountant accountant(64.0 / 27000, 0.8, 3.7e-5);
    benchmark::DoNotOptimize(accountant.Epsilon(10000));
  }
}
BENCHMARK(BM_RdpAccountantBuild);

void BM_RdpAccountantQuery(benchmark::State& state) {
  const RdpAccountant accountant(64.0 / 27000, 0.8, 3.7e-5);
  std::int64_t t = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(accountant.Epsilon(t));
    t = t % 100000 + 1;
  }
}
BENCHMARK(BM_RdpAccountantQuery);

void BM_GdpAccountantQuery(benchmark::State& state) {
  const GdpAccountant accountant(64.0 / 27000, 0.8, 3.7e-5);
  std::int64_t t = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(accountant.Epsilon(t));
    t = t % 100000 + 1;
  }
}
BENCHMARK(BM_GdpAccountantQuery);

}  // namespace
}  // namespace dpflow

BENCHMARK_MAIN();
