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

#include "qsparse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "qsparse/engine.hpp"

namespace qsparse {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string Number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

unsigned QuantizerLevels(const QuantizerSpec& q) {
  return std::visit([](const auto& v) { return v.s; }, q);
}

nlohmann::json OptionalNumber(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

std::uint64_t BitModel::IndexBits(std::size_t d) {
  std::uint64_t bits = 0;
  while ((std::uint64_t{1} << bits) < d) ++bits;
  return std::max<std::uint64_t>(bits, 1);
}

std::uint64_t BitModel::LevelBits(unsigned s) {
  return IndexBits(static_cast<std::size_t>(s) + 1);
}

std::uint64_t BitCost(const OperatorSpec& spec, const PayloadSummary& payload,
                      std::size_t d) {
  const std::uint64_t nnz = payload.nnz;
  const std::uint64_t idx = BitModel::IndexBits(d);
  auto dense_quantizer = [&](unsigned s, std::size_t length) -> std::uint64_t {
    if (nnz == 0) return 0;
    return BitModel::kNormBits +
           length * (BitModel::LevelBits(s) + BitModel::kSignBits);
  };
  return std::visit(
      Overloaded{
          [&](const Identity&) { return DenseBits(d); },
          [&](const TopK&) { return nnz * (idx + BitModel::kValueBits); },
          [&](const RandK&) { return nnz * (idx + BitModel::kValueBits); },
          [&](const Qsgd& p) { return dense_quantizer(p.s, d); },
          [&](const StochasticLevels& p) { return dense_quantizer(p.s, d); },
          [&](const RotatedLevels& p) {
            return dense_quantizer(p.s, NextPowerOfTwo(d));
          },
          [&](const Sign&) {
            return BitModel::kNormBits + d * BitModel::kSignBits;
          },
          [&](const Composed& p) -> std::uint64_t {
            if (nnz == 0) return 0;
            return BitModel::kNormBits +
                   nnz * (idx + BitModel::LevelBits(QuantizerLevels(p.quantizer)) +
                          BitModel::kSignBits);
          },
          [&](const SignComp&) {
            return nnz * (idx + BitModel::kSignBits) + BitModel::kNormBits;
          },
          [&](const Piecewise& p) {
            std::uint64_t total = 0;
            for (std::size_t i = 0; i < p.segments.size(); ++i) {
              const auto& seg = p.segments[i];
              const PayloadSummary empty;
              const PayloadSummary& part =
                  i < payload.segments.size() ? payload.segments[i] : empty;
              total += BitCost(seg.op, part, seg.end - seg.begin);
            }
            return total;
          },
      },
      spec.kind);
}

double StepRecord::MeanMemoryNormSq() const {
  if (memory_norm_sq.empty()) return 0.0;
  double total = 0.0;
  for (double v : memory_norm_sq) total += v;
  return total / static_cast<double>(memory_norm_sq.size());
}

std::string RenderCsv(std::span<const StepRecord> records) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const auto& r : records) {
    out << r.t << ',' << Number(r.train_loss) << ','
        << (r.grad_norm ? Number(*r.grad_norm) : "") << ','
        << r.cumulative_uplink_bits << ',' << Number(r.MeanMemoryNormSq()) << ','
        << Number(r.local_deviation) << ','
        << (r.virtual_gap ? Number(*r.virtual_gap) : "") << '\n';
  }
  return out.str();
}

void EmitCsv(std::span<const StepRecord> records,
             const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << RenderCsv(records);
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

std::optional<std::uint64_t> BitsToTarget(std::span<const StepRecord> records,
                                          double target_loss) {
  for (const auto& r : records) {
    if (r.train_loss <= target_loss) return r.cumulative_uplink_bits;
  }
  return std::nullopt;
}

std::vector<double> DefaultTargets(std::span<const StepRecord> records) {
  if (records.empty()) return {};
  const double first = records.front().train_loss;
  double best = first;
  for (const auto& r : records) best = std::min(best, r.train_loss);
  return {first + 0.5 * (best - first), first + 0.9 * (best - first),
          first + 0.99 * (best - first)};
}

nlohmann::json SummaryJson(const RunResult& result,
                           const nlohmann::json& config_echo,
                           std::span<const double> targets) {
  nlohmann::json doc;
  const auto& records = result.records;
  if (!records.empty()) {
    double best = records.front().train_loss;
    std::size_t best_t = records.front().t;
    for (const auto& r : records) {
      if (r.train_loss < best) {
        best = r.train_loss;
        best_t = r.t;
      }
    }
    doc["final_loss"] = records.back().train_loss;
    doc["best_loss"] = best;
    doc["best_t"] = best_t;
  } else {
    doc["final_loss"] = nullptr;
    doc["best_loss"] = nullptr;
  }
  doc["uplink_bits"] = result.uplink_bits;
  doc["downlink_bits"] = result.downlink_bits;
  doc["sync_rounds"] = result.sync_rounds;
  doc["synchronous"] = result.synchronous;

  nlohmann::json table = nlohmann::json::array();
  for (double target : targets) {
    const auto bits = BitsToTarget(records, target);
    table.push_back({{"target_loss", target},
                     {"bits", bits ? nlohmann::json(*bits) : nlohmann::json(nullptr)}});
  }
  doc["bits_to_target"] = table;

  const auto& diag = result.diagnostics;
  nlohmann::json d;
  d["memory_identity_max"] = OptionalNumber(diag.memory_identity_max);
  d["memory_residual_max"] = diag.memory_residual_max;
  d["memory_norm_sq_max"] = diag.memory_norm_sq_max;
  d["local_deviation_max"] = diag.local_deviation_max;
  d["virtual_gap_max"] = OptionalNumber(diag.virtual_gap_max);
  d["g_hat_sq"] = diag.g_hat_sq;
  d["gamma"] = OptionalNumber(diag.gamma);
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : diag.checks) {
    checks.push_back({{"name", c.name},
                      {"measured_over_eta_sq", c.measured},
                      {"ceiling_over_eta_sq", OptionalNumber(c.ceiling)},
                      {"violated", c.violated()},
                      {"note", c.note}});
  }
  d["checks"] = checks;
  d["warnings"] = diag.warnings;
  doc["diagnostics"] = d;
  doc["config"] = config_echo;
  return doc;
}

void EmitSummaryJson(const RunResult& result, const nlohmann::json& config_echo,
                     std::span<const double> targets,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << SummaryJson(result, config_echo, targets).dump(2) << '\n';
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace qsparse
