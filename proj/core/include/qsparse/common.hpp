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

#ifndef QSPARSE_COMMON_HPP_
#define QSPARSE_COMMON_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace qsparse {

/// Dense real vector used for parameters, gradients, memories and updates.
using Vector = Eigen::VectorXd;

/// Row-major feature matrix: one sample per row.
using FeatureMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Every random stream in the library is a 64-bit Mersenne twister; its output
/// sequence is fixed by the standard, so seeded runs are reproducible.
using Rng = std::mt19937_64;

// Error taxonomy. The CLI maps ValidationError to exit code 2 and every other
// Error to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Out-of-range or inconsistent parameter (k > d, empty subset, R > n, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or otherwise unusable numeric input.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (IDX magic, truncation, count mismatch).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Operation requested on an object that does not support it.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// One or more configuration problems, reported together.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Purposes used when deriving independent random streams from a master seed.
enum class StreamPurpose : std::uint64_t {
  kBatch = 1,
  kCompress = 2,
  kSchedule = 3,
  kData = 4,
  kShard = 5,
  kProbe = 6,
  kObjective = 7,
  kCheck = 8,
};

/// Mixes (master seed, stream id, purpose) into a child seed with splitmix64
/// finalizers. Distinct inputs give statistically independent streams.
std::uint64_t DeriveSeed(std::uint64_t master, std::uint64_t stream,
                         StreamPurpose purpose);

/// Convenience wrapper: a generator seeded with DeriveSeed(...).
Rng MakeStream(std::uint64_t master, std::uint64_t stream,
               StreamPurpose purpose);

/// Uniform double in [0, 1) built from the top 53 bits of one draw.
inline double UniformUnit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Throws DataError if any coordinate is NaN or infinite.
void RequireFinite(const Vector& x, const char* what);

}  // namespace qsparse

#endif  // QSPARSE_COMMON_HPP_
