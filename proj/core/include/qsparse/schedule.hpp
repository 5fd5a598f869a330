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

#ifndef QSPARSE_SCHEDULE_HPP_
#define QSPARSE_SCHEDULE_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qsparse/common.hpp"

namespace qsparse {

/// Per-worker synchronization indices. Index t means the exchange happens at
/// the end of step t - 1, so the worker holds the fresh global parameter at
/// time t. Every sequence is strictly increasing, lies in [1, T] and ends at T.
struct SyncSchedule {
  std::size_t T = 0;
  std::size_t H = 0;
  std::vector<std::vector<std::size_t>> per_worker;

  std::size_t num_workers() const { return per_worker.size(); }
  /// True when every worker has the same index set.
  bool IsSynchronous() const;
};

/// Largest difference between consecutive indices with an implicit leading 0.
std::size_t Gap(std::span<const std::size_t> indices);

/// {H, 2H, ...} u {T} for each of R workers.
SyncSchedule MakePeriodic(std::size_t T, std::size_t H, std::size_t R);

/// Each worker's next interval is uniform on {1, ..., H}; T is appended.
/// Workers draw from `rng` in ascending order.
SyncSchedule MakeRandomAsync(std::size_t T, std::size_t H, std::size_t R,
                             Rng& rng);

/// User-supplied index sets. T is appended when missing; validation happens
/// in ScheduleProblems / ValidateSchedule.
SyncSchedule MakeExplicit(std::size_t T, std::size_t H,
                          std::vector<std::vector<std::size_t>> per_worker);

std::vector<std::string> ScheduleProblems(const SyncSchedule& schedule);

/// Throws ParameterError with the first problem found.
void ValidateSchedule(const SyncSchedule& schedule);

}  // namespace qsparse

#endif  // QSPARSE_SCHEDULE_HPP_
