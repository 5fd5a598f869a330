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

#include "qsparse/schedule.hpp"

#include <algorithm>
#include <sstream>

namespace qsparse {

namespace {

void RequireHorizon(std::size_t T, std::size_t H) {
  if (H < 1 || H > T) {
    std::ostringstream out;
    out << "schedule: need 1 <= H <= T, got H=" << H << ", T=" << T;
    throw ParameterError(out.str());
  }
}

}  // namespace

bool SyncSchedule::IsSynchronous() const {
  for (std::size_t r = 1; r < per_worker.size(); ++r) {
    if (per_worker[r] != per_worker[0]) return false;
  }
  return true;
}

std::size_t Gap(std::span<const std::size_t> indices) {
  if (indices.empty()) throw ParameterError("gap: empty index sequence");
  std::size_t previous = 0;
  std::size_t widest = 0;
  for (std::size_t t : indices) {
    if (t <= previous) {
      throw ParameterError(
          "gap: indices must be positive and strictly increasing");
    }
    widest = std::max(widest, t - previous);
    previous = t;
  }
  return widest;
}

SyncSchedule MakePeriodic(std::size_t T, std::size_t H, std::size_t R) {
  RequireHorizon(T, H);
  if (R < 1) throw ParameterError("schedule: R must be >= 1");
  std::vector<std::size_t> indices;
  for (std::size_t t = H; t <= T; t += H) indices.push_back(t);
  if (indices.empty() || indices.back() != T) indices.push_back(T);
  SyncSchedule out;
  out.T = T;
  out.H = H;
  out.per_worker.assign(R, indices);
  return out;
}

SyncSchedule MakeRandomAsync(std::size_t T, std::size_t H, std::size_t R,
                             Rng& rng) {
  RequireHorizon(T, H);
  if (R < 1) throw ParameterError("schedule: R must be >= 1");
  SyncSchedule out;
  out.T = T;
  out.H = H;
  out.per_worker.resize(R);
  std::uniform_int_distribution<std::size_t> interval(1, H);
  for (auto& indices : out.per_worker) {
    std::size_t t = interval(rng);
    while (t < T) {
      indices.push_back(t);
      t += interval(rng);
    }
    indices.push_back(T);
  }
  return out;
}

SyncSchedule MakeExplicit(std::size_t T, std::size_t H,
                          std::vector<std::vector<std::size_t>> per_worker) {
  SyncSchedule out;
  out.T = T;
  out.H = H;
  out.per_worker = std::move(per_worker);
  for (auto& indices : out.per_worker) {
    if (indices.empty() || indices.back() != T) indices.push_back(T);
  }
  return out;
}

std::vector<std::string> ScheduleProblems(const SyncSchedule& schedule) {
  std::vector<std::string> problems;
  if (schedule.T < 1) problems.push_back("schedule: T must be >= 1");
  if (schedule.H < 1) problems.push_back("schedule: H must be >= 1");
  if (schedule.per_worker.empty()) {
    problems.push_back("schedule: no workers");
  }
  for (std::size_t r = 0; r < schedule.per_worker.size(); ++r) {
    const auto& indices = schedule.per_worker[r];
    std::ostringstream tag;
    tag << "schedule: worker " << r << ": ";
    if (indices.empty()) {
      problems.push_back(tag.str() + "no sync indices");
      continue;
    }
    if (!std::is_sorted(indices.begin(), indices.end()) ||
        std::adjacent_find(indices.begin(), indices.end()) != indices.end()) {
      problems.push_back(tag.str() + "indices must be strictly increasing");
      continue;
    }
    if (indices.front() < 1 || indices.back() != schedule.T) {
      std::ostringstream out;
      out << tag.str() << "indices must lie in [1, " << schedule.T
          << "] and end at T";
      problems.push_back(out.str());
      continue;
    }
    const std::size_t g = Gap(indices);
    if (g > schedule.H) {
      std::ostringstream out;
      out << tag.str() << "gap " << g << " exceeds H=" << schedule.H;
      problems.push_back(out.str());
    }
  }
  return problems;
}

void ValidateSchedule(const SyncSchedule& schedule) {
  auto problems = ScheduleProblems(schedule);
  if (!problems.empty()) throw ParameterError(problems.front());
}

}  // namespace qsparse
