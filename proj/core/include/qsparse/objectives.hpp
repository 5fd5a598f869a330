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

#ifndef QSPARSE_OBJECTIVES_HPP_
#define QSPARSE_OBJECTIVES_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "qsparse/common.hpp"
#include "qsparse/data_io.hpp"

namespace qsparse {

/// f_i(w) = 0.5 w'Aw - (c + a_i)'w where a_i is row i of the dataset. The
/// rows are expected to average to zero, so the full objective is
/// 0.5 w'Aw - c'w. With an empty dataset the objective is deterministic.
struct Quadratic {
  Eigen::MatrixXd A;
  Vector c;
};

/// l2-regularized multinomial logistic regression. Parameters are the
/// num_classes weight columns (d_in each) followed by num_classes biases. The
/// penalty lambda/2 ||W||^2 skips the biases. lambda defaults to 1/n.
struct Softmax {
  std::optional<double> lambda;
  /// 0 means "take it from the dataset".
  std::size_t num_classes = 0;
};

/// Binary logistic loss with labels {0, 1} plus the smooth non-convex penalty
/// alpha * sum w_i^2 / (1 + w_i^2). Parameters have dimension d_in.
struct NonConvexLogistic {
  double alpha = 0.1;
};

using ObjectiveSpec = std::variant<Quadratic, Softmax, NonConvexLogistic>;

std::string Describe(const ObjectiveSpec& objective);

/// Parameter dimension for this objective on this dataset.
std::size_t ParamDim(const ObjectiveSpec& objective, const Dataset& data);

/// Everything that would make loss/grad ill-defined: non-SPD matrix, label
/// out of range, d_in mismatch, non-positive lambda or alpha.
std::vector<std::string> ObjectiveProblems(const ObjectiveSpec& objective,
                                           const Dataset& data);

/// Mean loss over `subset` (a multiset of row indices) plus regularizers.
/// Throws ParameterError for an empty subset unless the objective has no data.
double Loss(const ObjectiveSpec& objective, const Vector& w,
            const Dataset& data, std::span<const std::size_t> subset);

/// Analytic gradient of Loss.
Vector Grad(const ObjectiveSpec& objective, const Vector& w,
            const Dataset& data, std::span<const std::size_t> subset);

/// Loss and gradient over the whole dataset.
double FullLoss(const ObjectiveSpec& objective, const Vector& w,
                const Dataset& data);
Vector FullGrad(const ObjectiveSpec& objective, const Vector& w,
                const Dataset& data);

/// b indices drawn uniformly with replacement from [0, n).
std::vector<std::size_t> SampleBatch(Rng& rng, std::size_t n, std::size_t b);

struct Optimum {
  Vector w;
  double f = 0.0;
};

/// Minimizer of a Quadratic via Cholesky. Throws UnsupportedError otherwise.
Optimum QuadraticOptimum(const ObjectiveSpec& objective);

/// Random SPD quadratic: A = Q diag(linspace(mu, L)) Q' with Q a random
/// orthogonal matrix, c ~ N(0, I).
Quadratic RandomQuadratic(std::size_t d, double mu, double L,
                          std::uint64_t seed);

struct ObjectiveConstants {
  /// max ||grad f_i(w)||^2 over the probe points, running max.
  double g_hat_sq = 0.0;
  /// Per shard: sqrt of the largest per-sample gradient variance seen.
  std::vector<double> sigma_hat;
  /// Largest Hessian eigenvalue estimate at the first probe point.
  double l_hat = 0.0;
};

/// Probe points are the origin followed by N(0, I) draws from `seed`.
/// `shards` may be empty, in which case the whole dataset is one shard.
ObjectiveConstants EstimateConstants(
    const ObjectiveSpec& objective, const Dataset& data,
    const std::vector<std::vector<std::size_t>>& shards, std::size_t probes,
    std::uint64_t seed);

struct GradCheckReport {
  std::size_t points = 0;
  double max_relative_error = 0.0;
};

/// Central differences with step h at `points` random points drawn around
/// the origin with standard deviation `radius`. Relative error per
/// coordinate is |fd - analytic| / max(1, |fd|, |analytic|).
GradCheckReport GradientCheck(const ObjectiveSpec& objective,
                              const Dataset& data, std::size_t points,
                              std::uint64_t seed, double h = 1e-5,
                              double radius = 1.0);

}  // namespace qsparse

#endif  // QSPARSE_OBJECTIVES_HPP_
