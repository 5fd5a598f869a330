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

#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "qsparse/compression.hpp"
#include "qsparse/config.hpp"
#include "qsparse/data_io.hpp"
#include "qsparse/engine.hpp"
#include "qsparse/metrics.hpp"
#include "qsparse/objectives.hpp"

namespace qsparse::cli {

namespace {

std::string Fixed(double v, int digits = 6) {
  std::ostringstream out;
  out << std::setprecision(digits) << v;
  return out.str();
}

std::string Opt(const std::optional<double>& v) {
  return v ? Fixed(*v) : std::string("-");
}

OperatorSpec ParseInlineOperator(const std::string& text) {
  const nlohmann::json doc = ParseConfigText("op = " + text);
  return ParseOperator(doc.at("op"));
}

}  // namespace

std::vector<std::string> DefaultCatalog(std::size_t d) {
  const std::string k = std::to_string(std::max<std::size_t>(1, d / 8));
  const std::string half = std::to_string(d / 2);
  const std::string rest = std::to_string(d);
  const std::string hk = std::to_string(std::max<std::size_t>(1, d / 16));
  return {
      "{kind=\"identity\"}",
      "{kind=\"top_k\", k=" + k + "}",
      "{kind=\"rand_k\", k=" + k + "}",
      "{kind=\"qsgd\", s=32}",
      "{kind=\"stochastic_levels\", s=16}",
      "{kind=\"rotated_levels\", s=8}",
      "{kind=\"sign\"}",
      "{kind=\"composed\", quantizer=\"qsgd\", s=15, sparsifier=\"top_k\", k=" + k +
          ", scaled=false}",
      "{kind=\"composed\", quantizer=\"qsgd\", s=15, sparsifier=\"top_k\", k=" + k +
          ", scaled=true}",
      "{kind=\"composed\", quantizer=\"qsgd\", s=2, sparsifier=\"top_k\", k=" + k +
          ", scaled=true}",
      "{kind=\"composed\", quantizer=\"stochastic_levels\", s=4, sparsifier=\"rand_k\", k=" +
          k + ", scaled=true}",
      "{kind=\"composed\", quantizer=\"rotated_levels\", s=8, sparsifier=\"top_k\", k=" + k +
          ", scaled=false}",
      "{kind=\"sign_comp\", sparsifier=\"top_k\", k=" + k + ", norm_order=1}",
      "{kind=\"sign_comp\", sparsifier=\"top_k\", k=" + k + ", norm_order=2}",
      "{kind=\"sign_comp\", sparsifier=\"top_k\", k=" + k + ", norm_order=64}",
      "{kind=\"sign_comp\", sparsifier=\"rand_k\", k=" + k + ", norm_order=2}",
      "{kind=\"piecewise\", segments=[{begin=0, end=" + half + ", kind=\"top_k\", k=" + hk +
          "}, {begin=" + half + ", end=" + rest +
          ", kind=\"composed\", quantizer=\"qsgd\", s=4, sparsifier=\"top_k\", k=" + hk +
          ", scaled=true}]}",
  };
}

int CmdRun(const RunOptions& options, std::ostream& out, std::ostream& err) {
  return Guard(
      [&] {
        nlohmann::json doc = nlohmann::json::object();
        if (options.preset) doc = PresetDocument(*options.preset);
        if (options.config_path) {
          const nlohmann::json file = ParseConfigFile(*options.config_path);
          doc.merge_patch(file);
        }
        if (!options.preset && !options.config_path) {
          throw ValidationError({"run: give a config file or --preset"});
        }
        for (const auto& o : options.overrides) ApplyOverride(doc, o);
        LoadedConfig loaded = ResolveConfig(doc);
        loaded.run.threads = ThreadsFromEnvironment();

        const RunResult result =
            loaded.asynchronous ? RunAsync(loaded.run) : RunSync(loaded.run);

        std::filesystem::create_directories(loaded.output_dir);
        const auto csv = loaded.output_dir / "metrics.csv";
        const auto summary = loaded.output_dir / "summary.json";
        const auto echo = loaded.output_dir / "config.json";
        EmitCsv(result.records, csv);
        const std::vector<double> targets =
            loaded.targets.empty() ? DefaultTargets(result.records) : loaded.targets;
        EmitSummaryJson(result, loaded.resolved, targets, summary);
        {
          std::ofstream file(echo);
          if (!file) throw Error("cannot write '" + echo.string() + "'");
          file << loaded.resolved.dump(2) << '\n';
        }
        for (const auto& w : result.diagnostics.warnings) err << "warning: " << w << '\n';
        const double final_loss =
            result.records.empty() ? 0.0 : result.records.back().train_loss;
        out << "final_loss=" << Fixed(final_loss, 10)
            << " uplink_bits=" << result.uplink_bits << " records=" << result.records.size()
            << " out=" << loaded.output_dir.string() << '\n';
        return kExitOk;
      },
      err);
}

int CmdCheckOps(const CheckOpsOptions& options, std::ostream& out, std::ostream& err) {
  return Guard(
      [&] {
        std::vector<std::string> specs;
        if (options.op.empty()) {
          specs = DefaultCatalog(options.d);
        } else {
          specs.push_back(options.op);
        }
        std::vector<VectorDistribution> dists;
        if (options.distribution == "all") {
          dists = {VectorDistribution::kNormal, VectorDistribution::kHeavyTailed,
                   VectorDistribution::kSparse};
        } else {
          dists = {ParseDistribution(options.distribution)};
        }
        // Validate everything before spending time on Monte-Carlo.
        std::vector<OperatorSpec> ops;
        std::vector<std::string> problems;
        for (const auto& text : specs) {
          try {
            OperatorSpec op = ParseInlineOperator(text);
            for (const auto& p : ValidationProblems(op, options.d)) problems.push_back(p);
            ops.push_back(std::move(op));
          } catch (const ValidationError& e) {
            problems.insert(problems.end(), e.problems().begin(), e.problems().end());
          }
        }
        if (!problems.empty()) throw ValidationError(std::move(problems));

        out << std::left << std::setw(72) << "operator" << std::setw(14) << "dist"
            << std::setw(10) << "beta" << std::setw(12) << "gamma" << std::setw(12)
            << "1-gamma" << std::setw(12) << "mean" << std::setw(12) << "max"
            << "result\n";
        bool all_pass = true;
        std::size_t index = 0;
        for (const auto& op : ops) {
          for (auto dist : dists) {
            CheckOptions check;
            check.trials = options.trials;
            check.draws_per_vector = options.draws;
            check.distribution = dist;
            Rng rng = MakeStream(options.seed, index++, StreamPurpose::kCheck);
            const CompressionReport rep = EmpiricalCompressionCheck(op, options.d, check, rng);
            all_pass = all_pass && rep.pass;
            std::string gamma = Opt(rep.gamma_theoretical);
            std::string bound = "-";
            if (rep.gamma_checked) bound = Fixed(1.0 - *rep.gamma_checked);
            if (rep.data_dependent_gamma_min) {
              gamma = "x-dep>=" + Fixed(*rep.data_dependent_gamma_min, 3);
              bound = "per-x";
            }
            out << std::left << std::setw(72) << Describe(op) << std::setw(14) << ToString(dist)
                << std::setw(10) << Opt(rep.beta) << std::setw(12) << gamma << std::setw(12)
                << bound << std::setw(12)
                << Fixed(rep.empirical_ratio) << std::setw(12) << Fixed(rep.max_ratio)
                << (rep.pass ? "PASS" : "FAIL") << '\n';
          }
        }
        out << (all_pass ? "all operators PASS" : "some operators FAIL") << '\n';
        return all_pass ? kExitOk : kExitRuntime;
      },
      err);
}

int CmdGradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err) {
  return Guard(
      [&] {
        std::vector<std::string> names;
        if (options.objective == "all") {
          names = {"quadratic", "softmax", "nonconvex-logistic"};
        } else {
          names = {options.objective};
        }
        bool ok = true;
        for (const auto& name : names) {
          ObjectiveSpec objective;
          Dataset data;
          if (name == "quadratic") {
            objective = RandomQuadratic(20, 0.5, 5.0, options.seed);
            data = SyntheticQuadraticNoise(200, 20, 1.0, options.seed);
          } else if (name == "softmax") {
            objective = Softmax{};
            data = SyntheticClassification(300, 10, 5, 2.0, options.seed);
          } else if (name == "nonconvex-logistic") {
            objective = NonConvexLogistic{0.1};
            data = SyntheticClassification(300, 10, 2, 2.0, options.seed);
          } else {
            throw ValidationError({"gradcheck: unknown objective '" + name +
                                   "' (quadratic, softmax, nonconvex-logistic, all)"});
          }
          const GradCheckReport rep =
              GradientCheck(objective, data, options.points, options.seed);
          const bool pass = rep.max_relative_error <= 1e-5;
          ok = ok && pass;
          out << std::left << std::setw(22) << name << "points=" << rep.points
              << " max_relative_error=" << std::scientific << std::setprecision(3)
              << rep.max_relative_error << std::defaultfloat << ' '
              << (pass ? "PASS" : "FAIL") << '\n';
        }
        return ok ? kExitOk : kExitRuntime;
      },
      err);
}

int CmdGenData(const GenDataOptions& options, std::ostream& out, std::ostream& err) {
  return Guard(
      [&] {
        if (options.n == 0) throw ParameterError("gen-data: n must be >= 1");
        Dataset data;
        if (options.kind == "classification") {
          data = SyntheticClassification(options.n, options.d_in, options.classes,
                                         options.margin, options.seed);
        } else if (options.kind == "quadratic-noise") {
          data = SyntheticQuadraticNoise(options.n, options.d_in, options.scale, options.seed);
        } else {
          throw ValidationError({"gen-data: unknown kind '" + options.kind +
                                 "' (classification, quadratic-noise)"});
        }
        IdxPixelType type = IdxPixelType::kFloat64;
        if (options.format == "u8") {
          type = IdxPixelType::kUnsigned8;
        } else if (options.format != "f64") {
          throw ValidationError({"gen-data: format must be f64 or u8"});
        }
        const std::string images = options.out + "-images.idx";
        const std::string labels = options.out + "-labels.idx";
        const auto parent = std::filesystem::path(images).parent_path();
        if (!parent.empty()) std::filesystem::create_directories(parent);
        WriteIdx(data, images, labels, type);
        out << "wrote " << data.n() << " samples to " << images << " and " << labels << '\n';
        return kExitOk;
      },
      err);
}

}  // namespace qsparse::cli
