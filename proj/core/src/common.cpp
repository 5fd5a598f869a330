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

#include "qsparse/common.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace qsparse {

namespace {

std::string JoinProblems(const std::vector<std::string>& problems) {
  std::ostringstream out;
  out << "invalid configuration (" << problems.size() << " problem"
      << (problems.size() == 1 ? "" : "s") << ")";
  for (const auto& p : problems) out << "\n  - " << p;
  return out.str();
}

std::uint64_t SplitMix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> problems)
    : Error(JoinProblems(problems)), problems_(std::move(problems)) {}

std::uint64_t DeriveSeed(std::uint64_t master, std::uint64_t stream,
                         StreamPurpose purpose) {
  std::uint64_t h = SplitMix64(master);
  h = SplitMix64(h ^ stream);
  h = SplitMix64(h ^ static_cast<std::uint64_t>(purpose));
  return h;
}

Rng MakeStream(std::uint64_t master, std::uint64_t stream,
               StreamPurpose purpose) {
  return Rng(DeriveSeed(master, stream, purpose));
}

void RequireFinite(const Vector& x, const char* what) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) {
      std::ostringstream out;
      out << what << ": non-finite value at coordinate " << i;
      throw DataError(out.str());
    }
  }
}

}  // namespace qsparse
