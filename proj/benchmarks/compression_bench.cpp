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

// Throughput of the compression operators at model sizes from 256 to 64k.

#include <benchmark/benchmark.h>

#include <random>

#include "qsparse/compression.hpp"

namespace qsparse {
namespace {

Vector RandomVector(std::size_t d) {
  Rng rng(7);
  std::normal_distribution<double> normal;
  Vector v(static_cast<Eigen::Index>(d));
  for (auto& x : v) x = normal(rng);
  return v;
}

void RunOperator(benchmark::State& state, const OperatorSpec& spec) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const Vector x = RandomVector(d);
  Rng rng(11);
  for (auto _ : state) {
    Compressed c = ApplyOperator(spec, x, rng);
    benchmark::DoNotOptimize(c);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Identity(benchmark::State& state) { RunOperator(state, OperatorSpec{Identity{}}); }

void BM_TopK(benchmark::State& state) {
  RunOperator(state, OperatorSpec{TopK{static_cast<std::size_t>(state.range(0) / 100 + 1)}});
}

void BM_RandK(benchmark::State& state) {
  RunOperator(state, OperatorSpec{RandK{static_cast<std::size_t>(state.range(0) / 100 + 1)}});
}

void BM_Qsgd(benchmark::State& state) { RunOperator(state, OperatorSpec{Qsgd{15}}); }

void BM_RotatedLevels(benchmark::State& state) {
  RunOperator(state, OperatorSpec{RotatedLevels{15}});
}

void BM_SignTopK(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0) / 100 + 1);
  RunOperator(state, OperatorSpec{SignComp{TopK{k}, 1}});
}

void BM_QsgdTopK(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0) / 100 + 1);
  RunOperator(state, OperatorSpec{Composed{Qsgd{15}, TopK{k}, true}});
}

void BM_FastWalshHadamard(benchmark::State& state) {
  Vector x = RandomVector(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    FastWalshHadamard(std::span<double>(x.data(), static_cast<std::size_t>(x.size())));
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

BENCHMARK(BM_Identity)->RangeMultiplier(16)->Range(256, 65536);
BENCHMARK(BM_TopK)->RangeMultiplier(16)->Range(256, 65536);
BENCHMARK(BM_RandK)->RangeMultiplier(16)->Range(256, 65536);
BENCHMARK(BM_Qsgd)->RangeMultiplier(16)->Range(256, 65536);
BENCHMARK(BM_RotatedLevels)->RangeMultiplier(16)->Range(256, 65536);
BENCHMARK(BM_SignTopK)->RangeMultiplier(16)->Range(256, 65536);
BENCHMARK(BM_QsgdTopK)->RangeMultiplier(16)->Range(256, 65536);
BENCHMARK(BM_FastWalshHadamard)->RangeMultiplier(16)->Range(256, 65536);

}  // namespace
}  // namespace qsparse
