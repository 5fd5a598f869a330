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

#ifndef QSPARSE_COMPRESSION_HPP_
#define QSPARSE_COMPRESSION_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "qsparse/common.hpp"

namespace qsparse {

// ---------------------------------------------------------------------------
// Sparse payloads
// ---------------------------------------------------------------------------

struct SparseEntry {
  std::size_t index;
  double value;
  bool operator==(const SparseEntry&) const = default;
};

/// Entries strictly increasing by index; zero-valued coordinates are omitted.
struct SparseUpdate {
  std::size_t dim = 0;
  std::vector<SparseEntry> entries;

  Vector Densify() const;
};

// ---------------------------------------------------------------------------
// Operator descriptions
// ---------------------------------------------------------------------------

struct Identity {};
struct TopK {
  std::size_t k;
};
struct RandK {
  std::size_t k;
};
/// Norm-scaled stochastic rounding onto {0, 1/s, ..., 1}.
struct Qsgd {
  unsigned s;
};
/// Stochastic rounding onto s equal intervals between min(x) and max(x).
struct StochasticLevels {
  unsigned s;
};
/// Randomized Hadamard rotation followed by StochasticLevels.
struct RotatedLevels {
  unsigned s;
};
/// Dense sign with mean-magnitude scale; equivalent to SignComp{TopK{d}, 1}.
struct Sign {};

using QuantizerSpec = std::variant<Qsgd, StochasticLevels, RotatedLevels>;
using SparsifierSpec = std::variant<TopK, RandK>;

/// Quantizer applied to the k retained values of a sparsifier. With
/// `scaled`, the reconstruction is divided by (1 + beta_{k,s}).
struct Composed {
  QuantizerSpec quantizer;
  SparsifierSpec sparsifier;
  bool scaled = true;
};

/// (||Comp_k(x)||_m / k) * sign on the selected support.
struct SignComp {
  SparsifierSpec sparsifier;
  unsigned norm_order = 1;
};

struct Segment;

/// Different operators on disjoint coordinate ranges covering [0, d).
struct Piecewise {
  std::vector<Segment> segments;
};

struct OperatorSpec {
  std::variant<Identity, TopK, RandK, Qsgd, StochasticLevels, RotatedLevels,
               Sign, Composed, SignComp, Piecewise>
      kind;
};

/// Half-open coordinate range [begin, end) handled by `op`.
struct Segment {
  std::size_t begin;
  std::size_t end;
  OperatorSpec op;
};

/// Short human-readable name, e.g. "Composed{Qsgd s=15, TopK k=40, scaled}".
std::string Describe(const OperatorSpec& spec);

/// Checks the spec against dimension d. Throws ParameterError naming the
/// offending field; an unscaled Composed operator with beta_{k,s} >= 1 is
/// rejected here with the computed beta.
void Validate(const OperatorSpec& spec, std::size_t d);

/// Stricter variant that collects every problem instead of stopping at the
/// first one.
std::vector<std::string> ValidationProblems(const OperatorSpec& spec,
                                            std::size_t d);

// ---------------------------------------------------------------------------
// Primitive operators
// ---------------------------------------------------------------------------

/// Exactly k indices of the largest |x_i|, ties to the lowest index, sorted.
std::vector<std::size_t> SelectTopK(const Vector& x, std::size_t k);

/// k distinct indices uniformly at random, sorted.
std::vector<std::size_t> SelectRandK(std::size_t d, std::size_t k, Rng& rng);

SparseUpdate TopKSparsify(const Vector& x, std::size_t k);
SparseUpdate RandKSparsify(const Vector& x, std::size_t k, Rng& rng);

/// Per-coordinate uniform draws in [0, 1). Coordinate i of a quantizer
/// consumes uniform(i); nothing else is random.
using UniformSource = std::function<double(std::size_t)>;

Vector QsgdQuantize(const Vector& x, unsigned s, Rng& rng);
Vector QsgdQuantize(const Vector& x, unsigned s, const UniformSource& uniform);

Vector StochasticLevelsQuantize(const Vector& x, unsigned s, Rng& rng);
Vector StochasticLevelsQuantize(const Vector& x, unsigned s,
                                const UniformSource& uniform);

/// Rotation is diag(signs) followed by the orthonormal Walsh-Hadamard
/// transform on the zero-padded power-of-two length.
Vector RotatedLevelsQuantize(const Vector& x, unsigned s, Rng& rng);
Vector RotatedLevelsQuantize(const Vector& x, unsigned s,
                             std::span<const double> rotation_signs,
                             const UniformSource& uniform);

/// +1 for x_i >= 0, -1 otherwise.
Vector SignQuantize(const Vector& x);

/// Applies diag(signs) then the orthonormal Walsh-Hadamard transform to x
/// zero-padded to signs.size() (a power of two >= x.size()).
Vector HadamardRotate(const Vector& x, std::span<const double> signs);
/// Inverse of HadamardRotate, truncated back to the first d coordinates.
Vector HadamardUnrotate(const Vector& y, std::span<const double> signs,
                        std::size_t d);

/// In-place orthonormal fast Walsh-Hadamard transform; size must be a power
/// of two. Self-inverse.
void FastWalshHadamard(std::span<double> data);

/// Smallest power of two >= n (n >= 1).
std::size_t NextPowerOfTwo(std::size_t n);

/// Numerically stable l_m norm; m >= 1.
double LpNorm(std::span<const double> v, unsigned m);

// ---------------------------------------------------------------------------
// Uniform interface
// ---------------------------------------------------------------------------

/// Shape of what was put on the wire, consumed by the bit model.
struct PayloadSummary {
  /// Coordinates carried explicitly (nonzero after compression for sparse
  /// formats, selected support for SignComp).
  std::size_t nnz = 0;
  std::vector<PayloadSummary> segments;
};

struct Compressed {
  Vector reconstruction;
  std::uint64_t bits = 0;
  PayloadSummary payload;
};

/// Compresses x and returns the vector the master would reconstruct together
/// with its uplink bit cost. The spec must have been validated for x.size().
Compressed ApplyOperator(const OperatorSpec& spec, const Vector& x, Rng& rng);

// ---------------------------------------------------------------------------
// Compression coefficients
// ---------------------------------------------------------------------------

/// Variance blow-up beta_{n,s} of a bare quantizer evaluated at dimension n.
double Beta(const QuantizerSpec& quantizer, std::size_t n);
/// Same, for an OperatorSpec that must hold a quantizer variant.
double Beta(const OperatorSpec& spec, std::size_t n);

/// Static compression coefficient gamma, or nullopt when none exists
/// (bare quantizer with beta > 1, unscaled Composed outside beta < 1,
/// SignComp with m = 1, Sign).
std::optional<double> TheoreticalGamma(const OperatorSpec& spec,
                                       std::size_t d);

/// A coefficient that is always valid: TheoreticalGamma when present, the
/// data-independent floor 1/d for SignComp m = 1 and Sign. nullopt only for
/// operators that are not compression operators at all.
std::optional<double> GammaFloor(const OperatorSpec& spec, std::size_t d);

/// Data-dependent coefficient of SignComp with m = 1 for input x:
/// max{1/d, (k/d) (||v||_1 / (sqrt(d) ||v||_2))^2}, v the selected values.
double SignCompL1Gamma(const Vector& x, std::size_t k,
                       std::span<const std::size_t> support);

// ---------------------------------------------------------------------------
// Empirical verification
// ---------------------------------------------------------------------------

enum class VectorDistribution { kNormal, kHeavyTailed, kSparse };

std::string ToString(VectorDistribution dist);
VectorDistribution ParseDistribution(const std::string& name);

/// Draws a test vector: standard normal, Student-t with 3 degrees of freedom,
/// or standard normal with 90% of coordinates zeroed (at least one kept).
Vector DrawVector(std::size_t d, VectorDistribution dist, Rng& rng);

struct CompressionReport {
  std::optional<double> gamma_theoretical;
  std::optional<double> beta;
  /// Mean over trial vectors of the estimated E||x - C(x)||^2 / ||x||^2.
  double empirical_ratio = 0.0;
  double max_ratio = 0.0;
  std::size_t trials = 0;
  /// Inner Monte-Carlo draws per vector (1 for deterministic operators).
  std::size_t draws_per_vector = 0;
  /// Standard error of empirical_ratio.
  double standard_error = 0.0;
  /// Coefficient the pass/fail decision uses (GammaFloor).
  std::optional<double> gamma_checked;
  /// SignComp m = 1 only: smallest data-dependent coefficient seen.
  std::optional<double> data_dependent_gamma_min;
  /// Largest per-vector excess over its own bound in standard errors.
  double worst_z = 0.0;
  /// Vectors that failed screening and were re-estimated.
  std::size_t confirmations = 0;
  bool pass = false;
};

struct CheckOptions {
  std::size_t trials = 1000;
  /// Inner draws for randomized operators.
  std::size_t draws_per_vector = 32;
  VectorDistribution distribution = VectorDistribution::kNormal;
  /// Per-vector tolerance in inner-sample standard errors.
  double per_vector_z = 5.0;
  /// Tolerance on the mean in standard errors.
  double mean_z = 3.0;
  /// A vector over its per-vector tolerance is re-estimated with this many
  /// times more draws; the second estimate decides.
  std::size_t confirm_factor = 32;
};

/// Monte-Carlo check of E||x - C(x)||^2 <= (1 - gamma) ||x||^2.
CompressionReport EmpiricalCompressionCheck(const OperatorSpec& spec,
                                            std::size_t d,
                                            const CheckOptions& options,
                                            Rng& rng);

/// True if any part of the operator consumes randomness.
bool IsRandomized(const OperatorSpec& spec);

}  // namespace qsparse

#endif  // QSPARSE_COMPRESSION_HPP_
