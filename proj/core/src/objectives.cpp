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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/QR>

namespace qsparse {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

using RowBlock = Eigen::Ref<const FeatureMatrix>;

std::size_t SoftmaxClasses(const Softmax& s, const Dataset& data) {
  return s.num_classes ? s.num_classes : data.num_classes;
}

double SoftmaxLambda(const Softmax& s, const Dataset& data) {
  if (s.lambda) return *s.lambda;
  return data.n() ? 1.0 / static_cast<double>(data.n()) : 0.0;
}

// log(1 + exp(z)) without overflow.
double Softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double Sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void RequireSubset(std::span<const std::size_t> subset, const Dataset& data) {
  if (subset.empty()) throw ParameterError("objective: empty subset");
  for (std::size_t i : subset) {
    if (i >= data.n()) {
      throw ParameterError("objective: subset index " + std::to_string(i) +
                           " out of range for n=" + std::to_string(data.n()));
    }
  }
}

// Rows and labels for an index multiset.
struct Gathered {
  FeatureMatrix rows;
  std::vector<std::int32_t> labels;
};

Gathered GatherRows(const Dataset& data, std::span<const std::size_t> subset) {
  Gathered g;
  g.rows.resize(static_cast<Eigen::Index>(subset.size()), data.features.cols());
  g.labels.resize(subset.size());
  for (std::size_t j = 0; j < subset.size(); ++j) {
    g.rows.row(static_cast<Eigen::Index>(j)) =
        data.features.row(static_cast<Eigen::Index>(subset[j]));
    g.labels[j] = data.labels[subset[j]];
  }
  return g;
}

// Mean softmax cross-entropy over rows X plus lambda/2 ||W||^2; writes the
// gradient when `grad` is non-null.
double SoftmaxEval(const Vector& w, std::size_t classes, double lambda,
                   const RowBlock& X, std::span<const std::int32_t> labels,
                   Vector* grad) {
  const auto d_in = X.cols();
  const auto L = static_cast<Eigen::Index>(classes);
  const Eigen::Map<const Eigen::MatrixXd> W(w.data(), d_in, L);
  const auto z = w.segment(d_in * L, L);
  Eigen::MatrixXd logits = X * W;
  logits.rowwise() += z.transpose();
  const auto m = static_cast<double>(X.rows());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double peak = logits.row(i).maxCoeff();
    const auto y = labels[static_cast<std::size_t>(i)];
    const double shifted_y = logits(i, y) - peak;
    double total = 0.0;
    for (Eigen::Index j = 0; j < L; ++j) {
      logits(i, j) = std::exp(logits(i, j) - peak);
      total += logits(i, j);
    }
    loss += std::log(total) - shifted_y;
    logits.row(i) /= total;  // now probabilities
    logits(i, y) -= 1.0;     // now dloss/dlogits
  }
  loss /= m;
  loss += 0.5 * lambda * W.squaredNorm();
  if (grad) {
    grad->resize(w.size());
    Eigen::Map<Eigen::MatrixXd> gW(grad->data(), d_in, L);
    gW.noalias() = X.transpose() * logits / m;
    gW += lambda * W;
    grad->segment(d_in * L, L) = logits.colwise().sum().transpose() / m;
  }
  return loss;
}

double LogisticEval(const Vector& w, double alpha, const RowBlock& X,
                    std::span<const std::int32_t> labels, Vector* grad) {
  const Vector margins = X * w;
  const auto m = static_cast<double>(X.rows());
  double loss = 0.0;
  Vector coeff(margins.size());
  for (Eigen::Index i = 0; i < margins.size(); ++i) {
    const double y = labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
    loss += Softplus(-y * margins[i]);
    coeff[i] = -y * Sigmoid(-y * margins[i]) / m;
  }
  loss /= m;
  const Eigen::ArrayXd sq = w.array().square();
  loss += alpha * (sq / (1.0 + sq)).sum();
  if (grad) {
    *grad = X.transpose() * coeff;
    *grad += (alpha * 2.0 * w.array() / (1.0 + sq).square()).matrix();
  }
  return loss;
}

double QuadraticEval(const Quadratic& q, const Vector& w, const Vector& shift,
                     Vector* grad) {
  const Vector Aw = q.A * w;
  if (grad) *grad = Aw - q.c - shift;
  return 0.5 * w.dot(Aw) - (q.c + shift).dot(w);
}

double Evaluate(const ObjectiveSpec& objective, const Vector& w,
                const Dataset& data, std::span<const std::size_t> subset,
                bool full, Vector* grad) {
  if (static_cast<std::size_t>(w.size()) != ParamDim(objective, data)) {
    throw ParameterError("objective: parameter has dimension " +
                         std::to_string(w.size()) + ", expected " +
                         std::to_string(ParamDim(objective, data)));
  }
  return std::visit(
      Overloaded{
          [&](const Quadratic& q) {
            Vector shift = Vector::Zero(w.size());
            if (data.n() > 0) {
              if (full) {
                shift = data.features.colwise().mean().transpose();
              } else {
                RequireSubset(subset, data);
                for (std::size_t i : subset) {
                  shift += data.features.row(static_cast<Eigen::Index>(i))
                               .transpose();
                }
                shift /= static_cast<double>(subset.size());
              }
            }
            return QuadraticEval(q, w, shift, grad);
          },
          [&](const Softmax& s) {
            const std::size_t L = SoftmaxClasses(s, data);
            const double lambda = SoftmaxLambda(s, data);
            if (full) {
              if (data.n() == 0) throw ParameterError("objective: empty data");
              return SoftmaxEval(w, L, lambda, data.features, data.labels, grad);
            }
            RequireSubset(subset, data);
            const Gathered g = GatherRows(data, subset);
            return SoftmaxEval(w, L, lambda, g.rows, g.labels, grad);
          },
          [&](const NonConvexLogistic& p) {
            if (full) {
              if (data.n() == 0) throw ParameterError("objective: empty data");
              return LogisticEval(w, p.alpha, data.features, data.labels, grad);
            }
            RequireSubset(subset, data);
            const Gathered g = GatherRows(data, subset);
            return LogisticEval(w, p.alpha, g.rows, g.labels, grad);
          },
      },
      objective);
}

}  // namespace

std::string Describe(const ObjectiveSpec& objective) {
  return std::visit(
      Overloaded{
          [](const Quadratic& q) {
            return "Quadratic d=" + std::to_string(q.c.size());
          },
          [](const Softmax& s) {
            std::ostringstream out;
            out << "Softmax lambda=";
            if (s.lambda) {
              out << *s.lambda;
            } else {
              out << "1/n";
            }
            return out.str();
          },
          [](const NonConvexLogistic& p) {
            std::ostringstream out;
            out << "NonConvexLogistic alpha=" << p.alpha;
            return out.str();
          },
      },
      objective);
}

std::size_t ParamDim(const ObjectiveSpec& objective, const Dataset& data) {
  return std::visit(
      Overloaded{
          [](const Quadratic& q) { return static_cast<std::size_t>(q.c.size()); },
          [&](const Softmax& s) {
            const std::size_t L = SoftmaxClasses(s, data);
            return data.d_in() * L + L;
          },
          [&](const NonConvexLogistic&) { return data.d_in(); },
      },
      objective);
}

std::vector<std::string> ObjectiveProblems(const ObjectiveSpec& objective,
                                           const Dataset& data) {
  std::vector<std::string> problems;
  for (Eigen::Index i = 0; i < data.features.size(); ++i) {
    if (!std::isfinite(data.features.data()[i])) {
      problems.push_back("data: non-finite feature value");
      break;
    }
  }
  if (data.labels.size() != data.n()) {
    problems.push_back("data: label count differs from sample count");
  }
  std::visit(
      Overloaded{
          [&](const Quadratic& q) {
            const auto d = q.c.size();
            if (d == 0) problems.push_back("objective: empty quadratic");
            if (q.A.rows() != d || q.A.cols() != d) {
              problems.push_back("objective: A must be " + std::to_string(d) +
                                 "x" + std::to_string(d));
              return;
            }
            if (!q.A.isApprox(q.A.transpose(), 1e-12)) {
              problems.push_back("objective: A is not symmetric");
            }
            Eigen::LLT<Eigen::MatrixXd> llt(q.A);
            if (llt.info() != Eigen::Success) {
              problems.push_back("objective: A is not positive definite");
            }
            if (data.n() > 0 && data.d_in() != static_cast<std::size_t>(d)) {
              problems.push_back("objective: quadratic noise rows have d_in=" +
                                 std::to_string(data.d_in()) + ", expected " +
                                 std::to_string(d));
            }
          },
          [&](const Softmax& s) {
            const std::size_t L = SoftmaxClasses(s, data);
            if (data.n() == 0) problems.push_back("objective: softmax needs data");
            if (L < 2) problems.push_back("objective: softmax needs >= 2 classes");
            if (s.lambda && !(*s.lambda > 0.0)) {
              problems.push_back("objective.lambda must be > 0");
            }
            for (auto label : data.labels) {
              if (label < 0 || static_cast<std::size_t>(label) >= L) {
                problems.push_back("data: label " + std::to_string(label) +
                                   " outside [0, " + std::to_string(L) + ")");
                break;
              }
            }
          },
          [&](const NonConvexLogistic& p) {
            if (data.n() == 0) {
              problems.push_back("objective: logistic needs data");
            }
            if (!(p.alpha > 0.0)) {
              problems.push_back("objective.alpha must be > 0");
            }
            for (auto label : data.labels) {
              if (label != 0 && label != 1) {
                problems.push_back("data: logistic labels must be 0 or 1, got " +
                                   std::to_string(label));
                break;
              }
            }
          },
      },
      objective);
  return problems;
}

double Loss(const ObjectiveSpec& objective, const Vector& w,
            const Dataset& data, std::span<const std::size_t> subset) {
  return Evaluate(objective, w, data, subset, false, nullptr);
}

Vector Grad(const ObjectiveSpec& objective, const Vector& w,
            const Dataset& data, std::span<const std::size_t> subset) {
  Vector g;
  Evaluate(objective, w, data, subset, false, &g);
  return g;
}

double FullLoss(const ObjectiveSpec& objective, const Vector& w,
                const Dataset& data) {
  return Evaluate(objective, w, data, {}, true, nullptr);
}

Vector FullGrad(const ObjectiveSpec& objective, const Vector& w,
                const Dataset& data) {
  Vector g;
  Evaluate(objective, w, data, {}, true, &g);
  return g;
}

std::vector<std::size_t> SampleBatch(Rng& rng, std::size_t n, std::size_t b) {
  if (b < 1) throw ParameterError("sample_batch: b must be >= 1");
  if (n < 1) throw ParameterError("sample_batch: empty shard");
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> out(b);
  for (auto& i : out) i = pick(rng);
  return out;
}

Optimum QuadraticOptimum(const ObjectiveSpec& objective) {
  const auto* q = std::get_if<Quadratic>(&objective);
  if (!q) throw UnsupportedError("optimum: only defined for Quadratic");
  Eigen::LLT<Eigen::MatrixXd> llt(q->A);
  if (llt.info() != Eigen::Success) {
    throw ParameterError("optimum: A is not positive definite");
  }
  Optimum out;
  out.w = llt.solve(q->c);
  out.f = QuadraticEval(*q, out.w, Vector::Zero(q->c.size()), nullptr);
  return out;
}

Quadratic RandomQuadratic(std::size_t d, double mu, double L,
                          std::uint64_t seed) {
  if (d < 1 || !(mu > 0.0) || !(L >= mu)) {
    throw ParameterError("random_quadratic: need d >= 1 and 0 < mu <= L");
  }
  Rng rng = MakeStream(seed, 0, StreamPurpose::kObjective);
  std::normal_distribution<double> normal;
  const auto n = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd G(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) G(i, j) = normal(rng);
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  const Eigen::MatrixXd Q = qr.householderQ();
  Vector eig(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    eig[i] = n == 1 ? mu
                    : mu + (L - mu) * static_cast<double>(i) /
                               static_cast<double>(n - 1);
  }
  Quadratic out;
  out.A = Q * eig.asDiagonal() * Q.transpose();
  out.A = 0.5 * (out.A + out.A.transpose()).eval();
  out.c.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) out.c[i] = normal(rng);
  return out;
}

ObjectiveConstants EstimateConstants(
    const ObjectiveSpec& objective, const Dataset& data,
    const std::vector<std::vector<std::size_t>>& shards, std::size_t probes,
    std::uint64_t seed) {
  if (probes < 1) throw ParameterError("estimate_constants: probes must be >= 1");
  const std::size_t d = ParamDim(objective, data);
  const auto dim = static_cast<Eigen::Index>(d);
  Rng rng = MakeStream(seed, 0, StreamPurpose::kProbe);
  std::normal_distribution<double> normal;

  std::vector<std::vector<std::size_t>> groups = shards;
  if (groups.empty() && data.n() > 0) {
    groups.emplace_back(data.n());
    std::iota(groups[0].begin(), groups[0].end(), std::size_t{0});
  }

  ObjectiveConstants out;
  out.sigma_hat.assign(std::max<std::size_t>(groups.size(), 1), 0.0);
  std::vector<double> max_var(out.sigma_hat.size(), 0.0);
  Vector first;
  for (std::size_t p = 0; p < probes; ++p) {
    Vector w = Vector::Zero(dim);
    if (p > 0) {
      for (Eigen::Index i = 0; i < dim; ++i) w[i] = normal(rng);
    }
    if (p == 0) first = w;
    if (data.n() == 0) {
      out.g_hat_sq = std::max(out.g_hat_sq, FullGrad(objective, w, data).squaredNorm());
      continue;
    }
    for (std::size_t s = 0; s < groups.size(); ++s) {
      const auto& group = groups[s];
      if (group.empty()) continue;
      Vector mean = Vector::Zero(dim);
      std::vector<Vector> grads;
      grads.reserve(group.size());
      for (std::size_t i : group) {
        const std::size_t one[1] = {i};
        grads.push_back(Grad(objective, w, data, one));
        out.g_hat_sq = std::max(out.g_hat_sq, grads.back().squaredNorm());
        mean += grads.back();
      }
      mean /= static_cast<double>(group.size());
      double var = 0.0;
      for (const auto& g : grads) var += (g - mean).squaredNorm();
      var /= static_cast<double>(group.size());
      max_var[s] = std::max(max_var[s], var);
    }
  }
  for (std::size_t s = 0; s < max_var.size(); ++s) {
    out.sigma_hat[s] = std::sqrt(max_var[s]);
  }

  // Power iteration on finite-difference Hessian-vector products.
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = normal(rng);
  v.normalize();
  const double eps = 1e-4 * std::max(1.0, first.norm());
  double lambda = 0.0;
  for (int iter = 0; iter < 100; ++iter) {
    const Vector hv = (FullGrad(objective, first + eps * v, data) -
                       FullGrad(objective, first - eps * v, data)) /
                      (2.0 * eps);
    const double norm = hv.norm();
    if (norm == 0.0) break;
    const double next = v.dot(hv);
    v = hv / norm;
    if (iter > 5 && std::abs(std::abs(next) - std::abs(lambda)) <=
                        1e-9 * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  out.l_hat = std::abs(lambda);
  return out;
}

GradCheckReport GradientCheck(const ObjectiveSpec& objective,
                              const Dataset& data, std::size_t points,
                              std::uint64_t seed, double h, double radius) {
  const std::size_t d = ParamDim(objective, data);
  const auto dim = static_cast<Eigen::Index>(d);
  Rng rng = MakeStream(seed, 1, StreamPurpose::kProbe);
  std::normal_distribution<double> normal(0.0, radius);
  GradCheckReport report;
  report.points = points;
  for (std::size_t p = 0; p < points; ++p) {
    Vector w(dim);
    for (Eigen::Index i = 0; i < dim; ++i) w[i] = normal(rng);
    std::vector<std::size_t> subset;
    if (data.n() > 0) subset = SampleBatch(rng, data.n(), std::min<std::size_t>(32, data.n()));
    const Vector analytic = Grad(objective, w, data, subset);
    for (Eigen::Index i = 0; i < dim; ++i) {
      Vector up = w;
      Vector down = w;
      up[i] += h;
      down[i] -= h;
      const double fd = (Loss(objective, up, data, subset) -
                         Loss(objective, down, data, subset)) /
                        (2.0 * h);
      const double scale =
          std::max({1.0, std::abs(fd), std::abs(analytic[i])});
      report.max_relative_error =
          std::max(report.max_relative_error, std::abs(fd - analytic[i]) / scale);
    }
  }
  return report;
}

}  // namespace qsparse
