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

#ifndef QSPARSE_CONFIG_HPP_
#define QSPARSE_CONFIG_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qsparse/engine.hpp"

namespace qsparse {

/// A run description after defaults, data generation and schedule
/// construction. `resolved` is the fully explicit document: loading it again
/// reproduces the same RunConfig.
struct LoadedConfig {
  RunConfig run;
  nlohmann::json resolved;
  std::filesystem::path output_dir;
  std::vector<double> targets;
  bool asynchronous = false;
};

/// Parses TOML text (or JSON when `json` is set) into a document.
nlohmann::json ParseConfigText(const std::string& text, bool json = false);

/// Reads a .toml or .json file; the extension picks the parser.
nlohmann::json ParseConfigFile(const std::filesystem::path& path);

/// Named starting documents. "paper-convex" is the 15-worker softmax setup.
nlohmann::json PresetDocument(const std::string& name);

/// Applies "section.key=value"; the value is read as a TOML value and falls
/// back to a plain string. Throws ValidationError on a malformed override.
void ApplyOverride(nlohmann::json& doc, const std::string& assignment);

/// Builds a runnable configuration. All problems (unknown keys, missing
/// sections, bad values) are collected into one ValidationError.
LoadedConfig ResolveConfig(const nlohmann::json& doc);

/// Operator specs as inline documents, e.g. {kind="top_k", k=40}.
OperatorSpec ParseOperator(const nlohmann::json& node);
nlohmann::json OperatorToJson(const OperatorSpec& spec);

}  // namespace qsparse

#endif  // QSPARSE_CONFIG_HPP_
