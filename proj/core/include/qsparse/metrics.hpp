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

#ifndef QSPARSE_METRICS_HPP_
#define QSPARSE_METRICS_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qsparse/compression.hpp"

namespace qsparse {

// Fixed-width payload encoding. Indices cost ceil(log2 d) bits, raw values
// and norms 32 bits, quantization levels ceil(log2(s + 1)) bits plus one
// sign bit.
struct BitModel {
  static constexpr std::uint64_t kValueBits = 32;
  static constexpr std::uint64_t kNormBits = 32;
  static constexpr std::uint64_t kSignBits = 1;

  static std::uint64_t IndexBits(std::size_t d);
  static std::uint64_t LevelBits(unsigned s);
};

/// Uplink cost of one compressed message for an operator on dimension d.
std::uint64_t BitCost(const OperatorSpec& spec, const PayloadSummary& payload,
                      std::size_t d);

/// Cost of broadcasting a dense parameter to one worker.
inline std::uint64_t DenseBits(std::size_t d) {
  return BitModel::kValueBits * static_cast<std::uint64_t>(d);
}

struct StepRecord {
  std::size_t t = 0;
  double train_loss = 0.0;
  std::optional<double> grad_norm;
  std::uint64_t cumulative_uplink_bits = 0;
  std::vector<double> memory_norm_sq;  // per worker
  double local_deviation = 0.0;
  std::optional<double> virtual_gap;

  double MeanMemoryNormSq() const;
};

inline constexpr const char* kCsvHeader =
    "t,loss,grad_norm,bits,mem_norm_mean,local_dev,virtual_gap";

/// Writes records as CSV with 17 significant digits; absent optional fields
/// are left empty. Throws Error with the path on I/O failure.
void EmitCsv(std::span<const StepRecord> records,
             const std::filesystem::path& path);

/// Renders the same CSV into a string.
std::string RenderCsv(std::span<const StepRecord> records);

/// Cumulative uplink bits at the first record with loss <= target.
std::optional<std::uint64_t> BitsToTarget(std::span<const StepRecord> records,
                                          double target_loss);

struct RunResult;

/// Summary document: final/best loss, bit totals, bits-to-target table,
/// diagnostic maxima and the resolved configuration echo.
nlohmann::json SummaryJson(const RunResult& result,
                           const nlohmann::json& config_echo,
                           std::span<const double> targets);

void EmitSummaryJson(const RunResult& result, const nlohmann::json& config_echo,
                     std::span<const double> targets,
                     const std::filesystem::path& path);

/// Default targets: 50%, 90% and 99% of the way from the first recorded loss
/// to the best recorded loss.
std::vector<double> DefaultTargets(std::span<const StepRecord> records);

}  // namespace qsparse

#endif  // QSPARSE_METRICS_HPP_
