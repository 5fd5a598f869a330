// Copyright 2026 The Qsparse Authors. All Rights Reserved.
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
// =============================================================================

// Cost of whole training runs: serial versus threaded workers and the
// overhead of compression on the softmax objective.

#include <benchmark/benchmark.h>

#include <memory>

#include "qsparse/data_io.hpp"
#include "qsparse/engine.hpp"
#include "qsparse/schedule.hpp"

namespace qsparse {
namespace {

RunConfig SoftmaxRun(const OperatorSpec& op, std::size_t threads) {
  static const auto data =
      std::make_shared<const Dataset>(SyntheticClassification(2000, 64, 10, 3.0, 5));
  RunConfig c;
  c.R = 8;
  c.T = 200;
  c.b = 8;
  c.op = op;
  c.schedule = MakePeriodic(c.T, 4, c.R);
  c.lr = LrSchedule{FixedRate{0.05}};
  c.objective = Softmax{};
  c.data = data;
  c.shards = Shard(*data, c.R, ShardMode::kIidRandom, 6);
  c.seed = 7;
  c.diagnostics.record_every = c.T;
  c.diagnostics.track_virtual = false;
  c.threads = threads;
  return c;
}

void BM_SyncRun(benchmark::State& state) {
  const auto threads = static_cast<std::size_t>(state.range(0));
  const RunConfig identity = SoftmaxRun(OperatorSpec{Identity{}}, threads);
  const RunConfig compressed = SoftmaxRun(OperatorSpec{SignComp{TopK{65}, 1}}, threads);
  const RunConfig& c = state.range(1) ? compressed : identity;
  for (auto _ : state) {
    RunResult r = RunSync(c);
    benchmark::DoNotOptimize(r);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c.T * c.R));
}

void BM_AsyncRun(benchmark::State& state) {
  const RunConfig c = SoftmaxRun(OperatorSpec{SignComp{TopK{65}, 1}}, 0);
  for (auto _ : state) {
    RunResult r = RunAsync(c);
    benchmark::DoNotOptimize(r);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c.T * c.R));
}

BENCHMARK(BM_SyncRun)->ArgsProduct({{0, 4}, {0, 1}})->ArgNames({"threads", "compressed"})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AsyncRun)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace qsparse
