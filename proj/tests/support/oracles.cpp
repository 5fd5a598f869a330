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

#include "oracles.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace qsparse::testing {

std::vector<std::vector<std::size_t>> EnumerateSubsets(std::size_t d,
                                                       std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> current;
  std::function<void(std::size_t)> extend = [&](std::size_t next) {
    if (current.size() == k) {
      out.push_back(current);
      return;
    }
    for (std::size_t i = next; i < d; ++i) {
      current.push_back(i);
      extend(i + 1);
      current.pop_back();
    }
  };
  extend(0);
  return out;
}

SubsetMoments RandKMomentsByEnumeration(const Vector& x, std::size_t k) {
  const auto d = static_cast<std::size_t>(x.size());
  const auto subsets = EnumerateSubsets(d, k);
  SubsetMoments m;
  for (const auto& subset : subsets) {
    std::vector<bool> kept(d, false);
    for (std::size_t i : subset) kept[i] = true;
    for (std::size_t i = 0; i < d; ++i) {
      const double v = x[static_cast<Eigen::Index>(i)];
      (kept[i] ? m.kept_sq : m.residual_sq) += v * v;
    }
  }
  m.residual_sq /= static_cast<double>(subsets.size());
  m.kept_sq /= static_cast<double>(subsets.size());
  return m;
}

ExactMoments ThresholdMapMoments(
    const std::function<Vector(const UniformSource&)>& map, std::size_t n) {
  // Largest double below one: the "never below the cut" end of [0, 1).
  const double top = std::nextafter(1.0, 0.0);
  auto with = [&](std::size_t j, double u) {
    return map([&](std::size_t i) { return i == j ? u : top; });
  };
  const Vector base = map([&](std::size_t) { return top; });
  ExactMoments out;
  out.mean = base;
  double variance = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const Vector low = with(j, 0.0);
    const Vector delta = low - base;
    if (delta.squaredNorm() == 0.0) continue;
    // Probability mass of the branch taken at u = 0: sup{u : map == low}.
    double lo = 0.0;
    double hi = top;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (with(j, mid) == low) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    const double p = hi;
    out.mean += p * delta;
    variance += p * (1.0 - p) * delta.squaredNorm();
  }
  out.second_moment = out.mean.squaredNorm() + variance;
  return out;
}

double SoftmaxLossScalar(const std::vector<double>& w,
                         const std::vector<std::vector<double>>& rows,
                         const std::vector<int>& labels, std::size_t classes,
                         double lambda) {
  const std::size_t d_in = rows.front().size();
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<double> logit(classes);
    for (std::size_t j = 0; j < classes; ++j) {
      double z = w[d_in * classes + j];
      for (std::size_t f = 0; f < d_in; ++f) z += w[j * d_in + f] * rows[i][f];
      logit[j] = z;
    }
    double denom = 0.0;
    for (double z : logit) denom += std::exp(z);
    total += std::log(denom) - logit[static_cast<std::size_t>(labels[i])];
  }
  double penalty = 0.0;
  for (std::size_t p = 0; p < d_in * classes; ++p) penalty += w[p] * w[p];
  return total / static_cast<double>(rows.size()) + 0.5 * lambda * penalty;
}

double LogisticLossScalar(const std::vector<double>& w,
                          const std::vector<std::vector<double>>& rows,
                          const std::vector<int>& labels, double alpha) {
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double margin = 0.0;
    for (std::size_t f = 0; f < w.size(); ++f) margin += w[f] * rows[i][f];
    const double y = labels[i] == 1 ? 1.0 : -1.0;
    total += std::log(1.0 + std::exp(-y * margin));
  }
  double penalty = 0.0;
  for (double v : w) penalty += v * v / (1.0 + v * v);
  return total / static_cast<double>(rows.size()) + alpha * penalty;
}

std::vector<Vector> ReferenceSgd(
    const ObjectiveSpec& objective, const Dataset& data,
    const std::vector<std::vector<std::size_t>>& shards, std::size_t b,
    std::size_t T, const std::function<double(std::size_t)>& rate,
    std::uint64_t seed) {
  std::vector<Rng> streams;
  for (std::size_t r = 0; r < shards.size(); ++r) {
    streams.push_back(MakeStream(seed, r, StreamPurpose::kBatch));
  }
  Vector x = Vector::Zero(static_cast<Eigen::Index>(ParamDim(objective, data)));
  std::vector<Vector> path{x};
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<std::size_t> batch;
    for (std::size_t r = 0; r < shards.size(); ++r) {
      std::uniform_int_distribution<std::size_t> pick(0, shards[r].size() - 1);
      for (std::size_t j = 0; j < b; ++j) {
        batch.push_back(shards[r][pick(streams[r])]);
      }
    }
    x -= rate(t) * Grad(objective, x, data, batch);
    path.push_back(x);
  }
  return path;
}

std::filesystem::path ScratchDir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("qsparse_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace qsparse::testing
