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

#ifndef QSPARSE_ENGINE_HPP_
#define QSPARSE_ENGINE_HPP_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qsparse/common.hpp"
#include "qsparse/compression.hpp"
#include "qsparse/data_io.hpp"
#include "qsparse/metrics.hpp"
#include "qsparse/objectives.hpp"
#include "qsparse/schedule.hpp"

namespace qsparse {

// ---------------------------------------------------------------------------
// Learning rates
// ---------------------------------------------------------------------------

struct FixedRate {
  double eta;
};
/// eta_t = xi / (a + t)
struct InverseTime {
  double xi;
  double a;
};
/// eta_t = 8 / (mu (a + t))
struct StronglyConvex {
  double mu;
  double a;
};
/// eta_t = c / (lambda (a + t))
struct ExperimentConvex {
  double c;
  double lambda;
  double a;
};

struct LrSchedule {
  std::variant<FixedRate, InverseTime, StronglyConvex, ExperimentConvex> kind;

  double Rate(std::size_t t) const;
  /// Offset a of the averaging weights (a + t)^2; 1 for a fixed rate.
  double AveragingOffset() const;
  bool IsFixed() const { return std::holds_alternative<FixedRate>(kind); }
  std::string Describe() const;
};

std::vector<std::string> LrProblems(const LrSchedule& lr);

// ---------------------------------------------------------------------------
// Configuration and state
// ---------------------------------------------------------------------------

struct DiagnosticsOptions {
  /// Keep per-worker virtual sequences and report the virtual gap.
  bool track_virtual = true;
  std::size_t record_every = 1;
  /// Record the full-data gradient norm at the averaged local parameter.
  bool full_grad_norm = false;
  /// Replaces the measured G^2 in the theoretical ceilings.
  std::optional<double> g_hat_sq;
};

struct RunConfig {
  std::size_t R = 1;
  std::size_t T = 1;
  std::size_t b = 1;
  OperatorSpec op{Identity{}};
  SyncSchedule schedule;
  LrSchedule lr{FixedRate{0.1}};
  ObjectiveSpec objective;
  std::shared_ptr<const Dataset> data = std::make_shared<Dataset>();
  /// Per-worker sample indices; empty when the objective has no data.
  ShardPlan shards;
  std::uint64_t seed = 0;
  DiagnosticsOptions diagnostics;
  /// Worker threads; 0 runs serially.
  std::size_t threads = 0;
};

/// Every problem with the configuration, without running anything.
std::vector<std::string> ConfigProblems(const RunConfig& config);

struct WorkerState {
  std::size_t id = 0;
  Vector x_hat;
  Vector memory;
  /// Last global parameter received (x_t in the synchronous algorithm).
  Vector anchor;
  /// Virtual sequence; empty unless tracked.
  Vector x_tilde;
  Rng batch_rng;
  Rng compress_rng;
  const std::vector<std::size_t>* shard = nullptr;
};

/// Fresh worker at the origin with its streams derived from `seed`.
WorkerState MakeWorker(std::size_t id, std::size_t d, std::uint64_t seed,
                       const std::vector<std::size_t>* shard,
                       bool track_virtual);

/// One local SGD step: samples a batch from the worker's shard, moves x_hat
/// (and x_tilde when tracked) by -eta * gradient, returns the gradient.
Vector LocalStep(WorkerState& worker, const ObjectiveSpec& objective,
                 const Dataset& data, std::size_t b, double eta);

/// Compresses m + anchor - x_hat, keeps the residual in memory and returns
/// the compressed message.
Compressed SyncRound(WorkerState& worker, const OperatorSpec& op);

struct MasterState {
  Vector x_global;
  Vector weighted_sum;
  Vector weighted_sum_carry;  // Kahan compensation
  double weight_total = 0.0;
  double weight_carry = 0.0;
};

/// weighted_sum += (a + t)^2 x_hat_mean with compensated summation.
void WeightedAverageUpdate(MasterState& master, const Vector& x_hat_mean,
                           std::size_t t, double a);
Vector WeightedAverage(const MasterState& master);

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// One measured quantity next to its theoretical ceiling. Quantities are
/// stored divided by eta_t^2 so fixed and decaying rates compare alike.
struct DiagnosticCheck {
  std::string name;
  double measured = 0.0;
  std::optional<double> ceiling;
  std::string note;
  bool violated() const { return ceiling && measured > *ceiling; }
};

struct RunDiagnostics {
  /// max_t ||(x_hat - x_tilde) - mean memory||_inf / (1 + ||x_hat||_inf);
  /// synchronous runs with virtual tracking only.
  std::optional<double> memory_identity_max;
  /// Largest |memory - (argument - reconstruction)| over sync rounds.
  double memory_residual_max = 0.0;
  double memory_norm_sq_max = 0.0;
  double local_deviation_max = 0.0;
  std::optional<double> virtual_gap_max;
  /// G^2 used for ceilings: measured minibatch maximum or the override.
  double g_hat_sq = 0.0;
  std::optional<double> gamma;
  std::vector<DiagnosticCheck> checks;
  std::vector<std::string> warnings;
};

struct RunResult {
  Vector final_parameter;
  Vector weighted_average;
  std::vector<StepRecord> records;
  std::uint64_t uplink_bits = 0;
  std::uint64_t downlink_bits = 0;
  std::size_t sync_rounds = 0;
  bool synchronous = true;
  RunDiagnostics diagnostics;
};

/// Runs the synchronous algorithm; the schedule must be identical across
/// workers. Throws ValidationError listing every configuration problem.
RunResult RunSync(const RunConfig& config);

/// Runs the asynchronous algorithm on per-worker schedules.
RunResult RunAsync(const RunConfig& config);

/// Default worker-thread count: QSPARSE_THREADS if set, else 0.
std::size_t ThreadsFromEnvironment();

}  // namespace qsparse

#endif  // QSPARSE_ENGINE_HPP_
