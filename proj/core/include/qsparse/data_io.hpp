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

#ifndef QSPARSE_DATA_IO_HPP_
#define QSPARSE_DATA_IO_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qsparse/common.hpp"

namespace qsparse {

/// n samples of d_in features with integer labels in [0, num_classes).
struct Dataset {
  FeatureMatrix features;
  std::vector<std::int32_t> labels;
  std::size_t num_classes = 0;

  std::size_t n() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t d_in() const { return static_cast<std::size_t>(features.cols()); }

  bool operator==(const Dataset& other) const;
};

/// Feature encodings understood by the IDX reader and writer.
enum class IdxPixelType {
  kUnsigned8,  // 0x08, scaled by 1/255 on load
  kFloat64,    // 0x0E, stored as is
};

/// Reads an IDX image file (u8 or f64 elements, 2 or 3 dimensions) and an
/// IDX u8 label file. num_classes is set to max(label) + 1.
Dataset LoadIdx(const std::filesystem::path& images,
                const std::filesystem::path& labels);

/// Writes features as an n x d_in IDX matrix and labels as an IDX vector.
/// kUnsigned8 requires features in [0, 1] and rounds to the nearest 1/255.
void WriteIdx(const Dataset& dataset, const std::filesystem::path& images,
              const std::filesystem::path& labels,
              IdxPixelType type = IdxPixelType::kFloat64);

/// L Gaussian clusters in d_in dimensions. Class means sit at
/// (margin / sqrt(2)) e_j so every pair of means is `margin` apart; noise is
/// N(0, I). Labels cycle through the classes and are shuffled.
Dataset SyntheticClassification(std::size_t n, std::size_t d_in,
                                std::size_t num_classes, double margin,
                                std::uint64_t seed);

/// Perturbation rows for a stochastic quadratic: n rows of N(0, scale^2 I) in
/// dimension d, re-centered so the rows average to exactly zero.
Dataset SyntheticQuadraticNoise(std::size_t n, std::size_t d, double scale,
                                std::uint64_t seed);

enum class ShardMode {
  kContiguous,
  kRoundRobin,
  kIidRandom,
  kLabelSorted,  // stable sort by label, then contiguous split
};

std::string ToString(ShardMode mode);
ShardMode ParseShardMode(const std::string& name);

struct ShardPlan {
  ShardMode mode = ShardMode::kIidRandom;
  std::vector<std::vector<std::size_t>> assignment;

  std::size_t num_workers() const { return assignment.size(); }
};

/// Partitions [0, n) into R shards. Contiguous splits give the first n mod R
/// shards one extra sample. Throws ParameterError if R > n or R == 0.
ShardPlan Shard(const Dataset& dataset, std::size_t R, ShardMode mode,
                std::uint64_t seed);

}  // namespace qsparse

#endif  // QSPARSE_DATA_IO_HPP_
