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

#ifndef QSPARSE_TOOLS_COMMANDS_HPP_
#define QSPARSE_TOOLS_COMMANDS_HPP_

#include <cstdint>
#include <exception>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qsparse/common.hpp"

namespace qsparse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitValidation = 2;

struct RunOptions {
  std::optional<std::string> config_path;
  std::optional<std::string> preset;
  std::vector<std::string> overrides;
};

struct CheckOpsOptions {
  std::size_t d = 256;
  std::size_t trials = 1000;
  std::size_t draws = 32;
  std::uint64_t seed = 0;
  /// TOML inline table, e.g. {kind="top_k", k=8}; empty runs the catalog.
  std::string op;
  /// normal, heavy-tailed, sparse or all.
  std::string distribution = "all";
};

struct GradcheckOptions {
  /// quadratic, softmax, nonconvex-logistic or all.
  std::string objective = "all";
  std::uint64_t seed = 0;
  std::size_t points = 100;
};

struct GenDataOptions {
  /// classification or quadratic-noise.
  std::string kind = "classification";
  std::size_t n = 2000;
  std::size_t d_in = 20;
  std::size_t classes = 10;
  double margin = 3.0;
  double scale = 1.0;
  std::uint64_t seed = 0;
  /// Files are <out>-images.idx and <out>-labels.idx.
  std::string out = "data";
  /// f64 or u8.
  std::string format = "f64";
};

/// Built-in operator catalog used by check-ops, sized for dimension d >= 16.
std::vector<std::string> DefaultCatalog(std::size_t d);

// Each command reports on `out`/`err` and returns an exit code; exceptions
// are translated by Guard.
int CmdRun(const RunOptions& options, std::ostream& out, std::ostream& err);
int CmdCheckOps(const CheckOpsOptions& options, std::ostream& out, std::ostream& err);
int CmdGradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err);
int CmdGenData(const GenDataOptions& options, std::ostream& out, std::ostream& err);

/// Runs `body`, mapping ValidationError to 2 and any other error to 1.
template <class F>
int Guard(F&& body, std::ostream& err) {
  try {
    return body();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace qsparse::cli

#endif  // QSPARSE_TOOLS_COMMANDS_HPP_
