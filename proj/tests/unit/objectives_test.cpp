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

#include "qsparse/objectives.hpp"

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace qsparse {
namespace {

Dataset ThreePoints() {
  Dataset data;
  data.features.resize(3, 2);
  data.features << 1.0, -0.5, 0.25, 2.0, -1.5, 0.75;
  data.labels = {0, 2, 1};
  data.num_classes = 3;
  return data;
}

std::vector<std::vector<double>> Rows(const Dataset& data) {
  std::vector<std::vector<double>> rows(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (std::size_t f = 0; f < data.d_in(); ++f) {
      rows[i].push_back(data.features(static_cast<Eigen::Index>(i),
                                      static_cast<Eigen::Index>(f)));
    }
  }
  return rows;
}

std::vector<int> Labels(const Dataset& data) {
  return {data.labels.begin(), data.labels.end()};
}

std::vector<std::size_t> All(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

Vector RandomVector(std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  Vector v(static_cast<Eigen::Index>(d));
  for (auto& x : v) x = normal(rng);
  return v;
}

TEST(Quadratic, IdentityAtOriginIsZero) {
  const ObjectiveSpec q = Quadratic{Eigen::MatrixXd::Identity(3, 3), Vector::Zero(3)};
  const Dataset empty;
  EXPECT_EQ(FullLoss(q, Vector::Zero(3), empty), 0.0);
  EXPECT_EQ(Loss(q, Vector::Zero(3), empty, {}), 0.0);
}

TEST(Quadratic, IdentityGradientIsThePoint) {
  const ObjectiveSpec q = Quadratic{Eigen::MatrixXd::Identity(4, 4), Vector::Zero(4)};
  const Vector w0 = RandomVector(4, 1);
  EXPECT_EQ(FullGrad(q, w0, Dataset{}), w0);
}

TEST(Quadratic, OptimumOfIdentityIsOrigin) {
  const auto opt = QuadraticOptimum(
      Quadratic{Eigen::MatrixXd::Identity(2, 2), Vector::Zero(2)});
  EXPECT_EQ(opt.w, Vector::Zero(2));
  EXPECT_EQ(opt.f, 0.0);
}

TEST(Quadratic, OptimumOfTwoByTwo) {
  // A = diag(1, 2), c = (1, 2): solve w_i = c_i / A_ii by hand.
  Quadratic q{Eigen::MatrixXd::Zero(2, 2), Vector(2)};
  q.A(0, 0) = 1.0;
  q.A(1, 1) = 2.0;
  q.c << 1.0, 2.0;
  const auto opt = QuadraticOptimum(q);
  EXPECT_NEAR(opt.w[0], 1.0, 1e-15);
  EXPECT_NEAR(opt.w[1], 1.0, 1e-15);
  EXPECT_NEAR(opt.f, -1.5, 1e-15);
  EXPECT_NEAR(FullLoss(q, opt.w, Dataset{}), -1.5, 1e-15);
}

TEST(Quadratic, OptimumRejectsOtherObjectives) {
  EXPECT_THROW(QuadraticOptimum(Softmax{}), UnsupportedError);
}

TEST(Quadratic, NoiseRowsShiftTheLinearTerm) {
  const Quadratic q = RandomQuadratic(5, 1.0, 3.0, 2);
  const Dataset noise = SyntheticQuadraticNoise(40, 5, 0.5, 3);
  const Vector w = RandomVector(5, 4);
  // The rows average to zero, so the full objective ignores them.
  EXPECT_NEAR(FullLoss(q, w, noise), FullLoss(q, w, Dataset{}), 1e-12);
  const std::vector<std::size_t> one{7};
  const Vector expected = q.A * w - q.c - noise.features.row(7).transpose();
  EXPECT_LT((Grad(q, w, noise, one) - expected).norm(), 1e-12);
}

TEST(RandomQuadratic, SpectrumSpansMuToL) {
  const Quadratic q = RandomQuadratic(20, 0.5, 7.0, 9);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q.A);
  EXPECT_NEAR(eig.eigenvalues().minCoeff(), 0.5, 1e-10);
  EXPECT_NEAR(eig.eigenvalues().maxCoeff(), 7.0, 1e-10);
  EXPECT_TRUE(ObjectiveProblems(q, Dataset{}).empty());
}

TEST(Softmax, UniformPredictionAtOrigin) {
  const Dataset data = SyntheticClassification(300, 6, 5, 2.0, 1);
  const ObjectiveSpec s = Softmax{1e-300, 0};
  const Vector w = Vector::Zero(static_cast<Eigen::Index>(ParamDim(s, data)));
  EXPECT_NEAR(FullLoss(s, w, data), std::log(5.0), 1e-12);
}

TEST(Softmax, MatchesScalarReference) {
  const Dataset data = ThreePoints();
  const ObjectiveSpec s = Softmax{0.3, 0};
  ASSERT_EQ(ParamDim(s, data), 9u);
  const Vector w = RandomVector(9, 5);
  const std::vector<double> wv(w.data(), w.data() + w.size());
  const double expected = testing::SoftmaxLossScalar(wv, Rows(data), Labels(data), 3, 0.3);
  EXPECT_NEAR(FullLoss(s, w, data), expected, 1e-13);
  EXPECT_NEAR(Loss(s, w, data, All(3)), expected, 1e-13);
}

TEST(Softmax, LambdaDefaultsToOneOverN) {
  const Dataset data = ThreePoints();
  const Vector w = RandomVector(9, 6);
  EXPECT_NEAR(FullLoss(Softmax{}, w, data), FullLoss(Softmax{1.0 / 3.0, 0}, w, data),
              1e-15);
}

TEST(Softmax, StableForLargeLogits) {
  const Dataset data = ThreePoints();
  const Vector w = 1e3 * RandomVector(9, 7);
  EXPECT_TRUE(std::isfinite(FullLoss(Softmax{}, w, data)));
  EXPECT_TRUE(FullGrad(Softmax{}, w, data).allFinite());
}

TEST(Softmax, LabelOutOfRangeIsAValidationProblem) {
  Dataset data = ThreePoints();
  data.labels[1] = 10;
  data.num_classes = 11;  // loaded as is
  EXPECT_FALSE(ObjectiveProblems(Softmax{std::nullopt, 10}, data).empty());
  EXPECT_TRUE(ObjectiveProblems(Softmax{std::nullopt, 11}, data).empty());
}

TEST(NonConvexLogistic, MatchesScalarReference) {
  Dataset data = SyntheticClassification(50, 4, 2, 2.0, 8);
  const ObjectiveSpec obj = NonConvexLogistic{0.1};
  const Vector w = RandomVector(4, 9);
  const std::vector<double> wv(w.data(), w.data() + w.size());
  EXPECT_NEAR(FullLoss(obj, w, data),
              testing::LogisticLossScalar(wv, Rows(data), Labels(data), 0.1), 1e-13);
}

TEST(Loss, EmptySubsetIsAParameterError) {
  const Dataset data = ThreePoints();
  EXPECT_THROW(Loss(Softmax{}, Vector::Zero(9), data, {}), ParameterError);
}

TEST(Loss, WrongDimensionIsAParameterError) {
  EXPECT_THROW(FullLoss(Softmax{}, Vector::Zero(4), ThreePoints()), ParameterError);
}

TEST(Grad, SubsetIsAMultiset) {
  const Dataset data = ThreePoints();
  const Vector w = RandomVector(9, 10);
  const std::vector<std::size_t> twice{1, 1};
  const std::vector<std::size_t> once{1};
  EXPECT_LT((Grad(Softmax{}, w, data, twice) - Grad(Softmax{}, w, data, once)).norm(),
            1e-15);
}

TEST(SampleBatch, SinglePointShardRepeats) {
  Rng rng(1);
  EXPECT_EQ(SampleBatch(rng, 1, 5), (std::vector<std::size_t>(5, 0)));
}

TEST(SampleBatch, SameSeedSameBatch) {
  Rng a(2), b(2);
  EXPECT_EQ(SampleBatch(a, 100, 16), SampleBatch(b, 100, 16));
}

TEST(SampleBatch, RejectsEmptyInputs) {
  Rng rng(3);
  EXPECT_THROW(SampleBatch(rng, 0, 2), ParameterError);
  EXPECT_THROW(SampleBatch(rng, 5, 0), ParameterError);
}

TEST(EstimateConstants, IdenticalPointsHaveNoVariance) {
  Dataset data;
  data.features = FeatureMatrix::Constant(20, 3, 0.7);
  data.labels.assign(20, 1);
  data.num_classes = 2;
  const auto c = EstimateConstants(NonConvexLogistic{}, data, {}, 5, 1);
  ASSERT_EQ(c.sigma_hat.size(), 1u);
  EXPECT_NEAR(c.sigma_hat[0], 0.0, 1e-12);
  EXPECT_GT(c.g_hat_sq, 0.0);
}

TEST(EstimateConstants, SmoothnessOfQuadraticIsTopEigenvalue) {
  const Quadratic q = RandomQuadratic(10, 0.5, 4.0, 3);
  const auto c = EstimateConstants(q, Dataset{}, {}, 3, 2);
  EXPECT_NEAR(c.l_hat, 4.0, 1e-3);
}

TEST(GradientCheck, AllObjectivesAgreeWithFiniteDifferences) {
  const Quadratic q = RandomQuadratic(20, 0.5, 5.0, 1);
  EXPECT_LE(GradientCheck(q, SyntheticQuadraticNoise(50, 20, 1.0, 2), 100, 3).max_relative_error,
            1e-8);
  const Dataset cls = SyntheticClassification(300, 10, 5, 2.0, 4);
  EXPECT_LE(GradientCheck(Softmax{}, cls, 100, 5).max_relative_error, 1e-5);
  const Dataset bin = SyntheticClassification(300, 10, 2, 2.0, 6);
  EXPECT_LE(GradientCheck(NonConvexLogistic{}, bin, 100, 7).max_relative_error, 1e-5);
}

}  // namespace
}  // namespace qsparse
