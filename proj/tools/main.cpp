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

#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace qsparse::cli;
  CLI::App app{"Distributed SGD with compressed, error-compensated local updates"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment from a config file or preset");
  run_cmd->add_option("config", run.config_path, "TOML or JSON config file");
  run_cmd->add_option("--preset", run.preset, "Start from a named preset (paper-convex)");
  run_cmd->add_option("--set", run.overrides, "Override section.key=value (repeatable)");

  CheckOpsOptions check;
  auto* check_cmd = app.add_subcommand("check-ops", "Monte-Carlo check of compression operators");
  check_cmd->add_option("--d", check.d, "Vector dimension")->capture_default_str();
  check_cmd->add_option("--trials", check.trials, "Vectors per operator")->capture_default_str();
  check_cmd->add_option("--draws", check.draws, "Operator draws per vector")->capture_default_str();
  check_cmd->add_option("--seed", check.seed, "Master seed")->capture_default_str();
  check_cmd->add_option("--op", check.op, "Single operator as a TOML inline table");
  check_cmd->add_option("--distribution", check.distribution,
                        "normal, heavy-tailed, sparse or all")
      ->capture_default_str();

  GradcheckOptions grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  grad_cmd->add_option("--objective", grad.objective,
                       "quadratic, softmax, nonconvex-logistic or all")
      ->capture_default_str();
  grad_cmd->add_option("--seed", grad.seed, "Seed")->capture_default_str();
  grad_cmd->add_option("--points", grad.points, "Random points")->capture_default_str();

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic dataset in IDX format");
  gen_cmd->add_option("--kind", gen.kind, "classification or quadratic-noise")
      ->capture_default_str();
  gen_cmd->add_option("--n", gen.n, "Samples")->capture_default_str();
  gen_cmd->add_option("--d-in", gen.d_in, "Features per sample")->capture_default_str();
  gen_cmd->add_option("--classes", gen.classes, "Classes")->capture_default_str();
  gen_cmd->add_option("--margin", gen.margin, "Distance between class means")
      ->capture_default_str();
  gen_cmd->add_option("--scale", gen.scale, "Noise scale for quadratic-noise")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output prefix")->capture_default_str();
  gen_cmd->add_option("--format", gen.format, "f64 or u8")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  if (*run_cmd) return CmdRun(run, std::cout, std::cerr);
  if (*check_cmd) return CmdCheckOps(check, std::cout, std::cerr);
  if (*grad_cmd) return CmdGradcheck(grad, std::cout, std::cerr);
  if (*gen_cmd) return CmdGenData(gen, std::cout, std::cerr);
  return kExitValidation;
}
