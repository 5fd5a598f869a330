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

// End-to-end acceptance run: one PASS/FAIL line per criterion. Runtime limits
// are part of each criterion. Exit status is nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "oracles.hpp"
#include "qsparse/compression.hpp"
#include "qsparse/config.hpp"
#include "qsparse/engine.hpp"
#include "qsparse/metrics.hpp"

namespace qsparse {
namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Accumulates sub-check results into one outcome.
class Verdict {
 public:
  void Check(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      if (failures_.tellp() > 0) failures_ << "; ";
      failures_ << what;
    }
  }
  void Note(const std::string& text) {
    if (notes_.tellp() > 0) notes_ << ", ";
    notes_ << text;
  }
  Outcome Done() const {
    std::string detail = notes_.str();
    if (!pass_) detail += (detail.empty() ? "" : " | failed: ") + failures_.str();
    return {pass_, detail};
  }

 private:
  bool pass_ = true;
  std::ostringstream notes_;
  std::ostringstream failures_;
};

std::string Fmt(const char* format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, value);
  return buf;
}

double Median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Vector Gaussian(std::size_t d, Rng& rng) {
  std::normal_distribution<double> normal;
  Vector v(static_cast<Eigen::Index>(d));
  for (auto& x : v) x = normal(rng);
  return v;
}

// ---------------------------------------------------------------------------
// 1. Sparsifier exactness
// ---------------------------------------------------------------------------

Outcome OperatorExactness() {
  Verdict v;
  Rng rng(101);
  double worst = 0.0;
  for (std::size_t d = 1; d <= 6; ++d) {
    for (std::size_t k = 1; k <= std::min<std::size_t>(3, d); ++k) {
      for (int trial = 0; trial < 50; ++trial) {
        const Vector x = Gaussian(d, rng);
        const auto m = testing::RandKMomentsByEnumeration(x, k);
        const double n2 = x.squaredNorm();
        const double frac = static_cast<double>(k) / static_cast<double>(d);
        worst = std::max({worst, std::abs(m.residual_sq - (1.0 - frac) * n2) / n2,
                          std::abs(m.kept_sq - frac * n2) / n2});
      }
    }
  }
  v.Check(worst <= 1e-12, "enumeration moments off by " + Fmt("%.2e", worst));
  v.Note("enumeration error " + Fmt("%.1e", worst));

  // The library's Rand_k draws every k-subset with equal probability and keeps
  // the selected coordinates unchanged.
  const auto subsets = testing::EnumerateSubsets(6, 3);
  std::map<std::vector<std::size_t>, int> counts;
  const int draws = 40000;
  const Vector x = Gaussian(6, rng);
  bool faithful = true;
  for (int i = 0; i < draws; ++i) {
    Rng a(static_cast<std::uint64_t>(i)), b(static_cast<std::uint64_t>(i));
    const auto support = SelectRandK(6, 3, a);
    ++counts[support];
    const Vector c = RandKSparsify(x, 3, b).Densify();
    for (std::size_t j = 0; j < 6; ++j) {
      const bool kept = std::find(support.begin(), support.end(), j) != support.end();
      const double expected = kept ? x[static_cast<Eigen::Index>(j)] : 0.0;
      faithful &= c[static_cast<Eigen::Index>(j)] == expected;
    }
  }
  const double expected = static_cast<double>(draws) / static_cast<double>(subsets.size());
  double chi2 = 0.0;
  for (const auto& s : subsets) chi2 += std::pow(counts[s] - expected, 2) / expected;
  // 0.999 quantile of chi-square with 19 degrees of freedom.
  v.Check(chi2 < 43.82 && counts.size() == subsets.size(), "rand_k subsets not uniform");
  v.Check(faithful, "rand_k changed a kept coordinate");
  v.Note("subset chi2 " + Fmt("%.1f", chi2));

  int top_violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 2 + rng() % 60;
    const std::size_t k = 1 + rng() % d;
    const Vector y = Gaussian(d, rng);
    const double residual = (y - TopKSparsify(y, k).Densify()).squaredNorm();
    const double bound = (1.0 - static_cast<double>(k) / static_cast<double>(d)) * y.squaredNorm();
    if (residual > bound * (1.0 + 1e-12)) ++top_violations;
  }
  v.Check(top_violations == 0, std::to_string(top_violations) + " top_k violations");
  v.Note("top_k violations 0/1000");
  return v.Done();
}

// ---------------------------------------------------------------------------
// 2. Quantizer unbiasedness and variance
// ---------------------------------------------------------------------------

std::function<Vector(const UniformSource&)> ThresholdMap(const QuantizerSpec& spec,
                                                         const Vector& x) {
  return [spec, x](const UniformSource& u) -> Vector {
    if (auto* q = std::get_if<Qsgd>(&spec)) return QsgdQuantize(x, q->s, u);
    if (auto* q = std::get_if<StochasticLevels>(&spec)) {
      return StochasticLevelsQuantize(x, q->s, u);
    }
    const std::size_t padded = NextPowerOfTwo(static_cast<std::size_t>(x.size()));
    std::vector<double> signs(padded);
    for (std::size_t i = 0; i < padded; ++i) signs[i] = i % 3 == 1 ? -1.0 : 1.0;
    return RotatedLevelsQuantize(x, std::get<RotatedLevels>(spec).s, signs, u);
  };
}

Outcome QuantizerMoments() {
  Verdict v;
  const std::vector<QuantizerSpec> quantizers{Qsgd{1}, Qsgd{4}, Qsgd{15},
                                              StochasticLevels{2}, StochasticLevels{8},
                                              RotatedLevels{2}, RotatedLevels{8}};
  auto uniforms = [](const QuantizerSpec& q, std::size_t d) {
    return std::holds_alternative<RotatedLevels>(q) ? NextPowerOfTwo(d) : d;
  };
  Rng rng(202);
  double worst_bias = 0.0;
  for (const auto& q : quantizers) {
    for (std::size_t d = 1; d <= 4; ++d) {
      for (int trial = 0; trial < 20; ++trial) {
        const Vector x = Gaussian(d, rng);
        const auto m = testing::ThresholdMapMoments(ThresholdMap(q, x), uniforms(q, d));
        worst_bias = std::max(worst_bias, (m.mean - x).lpNorm<Eigen::Infinity>());
      }
    }
  }
  v.Check(worst_bias <= 1e-12, "exact expectation off by " + Fmt("%.2e", worst_bias));
  v.Note("exact bias " + Fmt("%.1e", worst_bias));

  // Monte-Carlo check: each quantizer at s = 3 on a random vector with d = 8.
  double worst_z = 0.0;
  for (const QuantizerSpec& q : {QuantizerSpec{Qsgd{3}}, QuantizerSpec{StochasticLevels{3}},
                                 QuantizerSpec{RotatedLevels{3}}}) {
    const OperatorSpec spec = std::visit([](auto s) { return OperatorSpec{s}; }, q);
    const Vector x = Gaussian(8, rng);
    Rng draw(203);
    const int n = 100000;
    Vector sum = Vector::Zero(8), sum_sq = Vector::Zero(8);
    for (int i = 0; i < n; ++i) {
      const Vector c = ApplyOperator(spec, x, draw).reconstruction;
      sum += c;
      sum_sq += c.cwiseProduct(c);
    }
    for (Eigen::Index j = 0; j < 8; ++j) {
      const double mean = sum[j] / n;
      const double se = std::sqrt(std::max(0.0, sum_sq[j] / n - mean * mean) / n);
      // Deterministic coordinates carry only summation rounding.
      const double err = std::abs(mean - x[j]) - 1e-10 * std::abs(x[j]);
      if (err > 0.0) worst_z = std::max(worst_z, se > 0.0 ? err / se : 1e300);
    }
  }
  v.Check(worst_z <= 3.0, "Monte-Carlo mean " + Fmt("%.2f", worst_z) + " standard errors off");
  v.Note("Monte-Carlo worst z " + Fmt("%.2f", worst_z));

  int violations = 0;
  double tightest = 0.0;
  for (const auto& q : quantizers) {
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t d = 16;
      const Vector y = Gaussian(d, rng);
      const auto m = testing::ThresholdMapMoments(ThresholdMap(q, y), uniforms(q, d));
      const double ratio = m.second_moment / ((1.0 + Beta(q, d)) * y.squaredNorm());
      tightest = std::max(tightest, ratio);
      if (ratio > 1.0 + 1e-12) ++violations;
    }
  }
  v.Check(violations == 0, std::to_string(violations) + " variance bound violations");
  v.Note("largest E|Q|^2/((1+beta)|x|^2) " + Fmt("%.3f", tightest));
  return v.Done();
}

// ---------------------------------------------------------------------------
// 3. Operator catalog
// ---------------------------------------------------------------------------

Outcome CatalogCheck() {
  Verdict v;
  cli::CheckOpsOptions options;
  options.d = 256;
  options.trials = 1000;
  std::ostringstream out, err;
  const int code = cli::CmdCheckOps(options, out, err);
  std::size_t rows = 0, failed = 0;
  std::istringstream lines(out.str());
  for (std::string line; std::getline(lines, line);) {
    if (line.size() >= 4 && line.compare(line.size() - 4, 4, "PASS") == 0) ++rows;
    if (line.size() >= 4 && line.compare(line.size() - 4, 4, "FAIL") == 0) ++rows, ++failed;
  }
  v.Check(code == cli::kExitOk, "check-ops exit " + std::to_string(code) + ", " +
                                    std::to_string(failed) + " FAIL rows");
  v.Note(std::to_string(rows - failed) + "/" + std::to_string(rows) + " rows PASS");

  // The catalog must contain a scaled composition outside the unscaled regime
  // and SignComp at m = 1, 2 and a large m.
  bool scaled_high_beta = false;
  std::vector<unsigned> orders;
  for (const auto& text : cli::DefaultCatalog(256)) {
    const OperatorSpec spec = ParseOperator(ParseConfigText("v = " + text)["v"]);
    if (auto* c = std::get_if<Composed>(&spec.kind)) {
      const std::size_t k = std::visit([](auto s) { return s.k; }, c->sparsifier);
      if (c->scaled && Beta(c->quantizer, k) >= 1.0) scaled_high_beta = true;
    }
    if (auto* s = std::get_if<SignComp>(&spec.kind)) orders.push_back(s->norm_order);
  }
  const auto has = [&](auto pred) { return std::any_of(orders.begin(), orders.end(), pred); };
  v.Check(scaled_high_beta, "no scaled composition with beta >= 1");
  v.Check(has([](unsigned m) { return m == 1; }) && has([](unsigned m) { return m == 2; }) &&
              has([](unsigned m) { return m >= 16; }),
          "SignComp norm orders missing");

  cli::CheckOpsOptions bad = options;
  bad.op = "{kind=\"composed\", quantizer=\"qsgd\", s=1, sparsifier=\"top_k\", k=32, scaled=false}";
  std::ostringstream bad_out, bad_err;
  const int bad_code = cli::CmdCheckOps(bad, bad_out, bad_err);
  v.Check(bad_code == cli::kExitValidation &&
              bad_err.str().find("operating regime") != std::string::npos,
          "unscaled beta >= 1 composition was not rejected");
  v.Note("unscaled beta>=1 rejected");
  return v.Done();
}

// ---------------------------------------------------------------------------
// 4 and 5. Memory identity and boundedness
// ---------------------------------------------------------------------------

RunConfig MemoryRun(std::size_t H) {
  RunConfig c;
  c.R = 4;
  c.T = 500;
  c.b = 4;
  c.op = OperatorSpec{SignComp{TopK{1}, 1}};  // k = 1% of d = 100
  c.schedule = MakePeriodic(c.T, H, c.R);
  c.lr = LrSchedule{FixedRate{0.05}};
  c.objective = RandomQuadratic(100, 1.0, 4.0, 31);
  auto data = std::make_shared<Dataset>(SyntheticQuadraticNoise(400, 100, 1.0, 32));
  c.shards = Shard(*data, c.R, ShardMode::kIidRandom, 33);
  c.data = data;
  c.seed = 34;
  return c;
}

Outcome MemoryIdentity() {
  Verdict v;
  double worst = 0.0;
  for (std::size_t H : {2u, 4u, 8u}) {
    const RunResult r = RunSync(MemoryRun(H));
    const double e = r.diagnostics.memory_identity_max.value_or(1e300);
    worst = std::max(worst, e);
    v.Check(e <= 1e-9, "H=" + std::to_string(H) + " identity error " + Fmt("%.2e", e));
  }
  v.Note("max scaled identity error " + Fmt("%.1e", worst));
  return v.Done();
}

Outcome MemoryBoundedness() {
  Verdict v;
  for (std::size_t H : {2u, 4u, 8u}) {
    const RunConfig c = MemoryRun(H);
    const RunResult r = RunSync(c);
    const double eta = std::get<FixedRate>(c.lr.kind).eta;
    const double gamma = 1.0 / 100.0;
    const double h = static_cast<double>(H);
    const double ceiling = 4.0 * eta * eta * (1.0 - gamma * gamma) / (gamma * gamma) * h * h *
                           r.diagnostics.g_hat_sq;
    const double measured = r.diagnostics.memory_norm_sq_max;
    v.Check(measured <= ceiling, "H=" + std::to_string(H) + " memory " + Fmt("%.3e", measured) +
                                     " above " + Fmt("%.3e", ceiling));
    v.Note("H=" + std::to_string(H) + " max|m|^2/ceiling " + Fmt("%.2e", measured / ceiling));
  }
  return v.Done();
}

// ---------------------------------------------------------------------------
// 6. Reductions
// ---------------------------------------------------------------------------

Outcome Reductions() {
  Verdict v;
  RunConfig c;
  c.R = 1;
  c.T = 200;
  c.b = 8;
  c.op = OperatorSpec{Identity{}};
  c.schedule = MakePeriodic(c.T, 1, 1);
  c.lr = LrSchedule{InverseTime{1.0, 5.0}};
  c.objective = Softmax{};
  auto data = std::make_shared<Dataset>(SyntheticClassification(500, 10, 4, 2.0, 61));
  c.shards = Shard(*data, 1, ShardMode::kIidRandom, 62);
  c.data = data;
  c.seed = 63;
  const RunResult r = RunSync(c);
  const auto path = testing::ReferenceSgd(c.objective, *data, c.shards.assignment, c.b, c.T,
                                          [&](std::size_t t) { return c.lr.Rate(t); }, c.seed);
  const double sgd_gap = (r.final_parameter - path.back()).lpNorm<Eigen::Infinity>();
  v.Check(sgd_gap <= 1e-12, "vanilla SGD gap " + Fmt("%.2e", sgd_gap));
  v.Note("vanilla SGD gap " + Fmt("%.1e", sgd_gap));

  RunConfig a = c;
  a.R = 4;
  a.op = OperatorSpec{Composed{Qsgd{8}, TopK{10}, true}};
  a.schedule = MakePeriodic(a.T, 5, a.R);
  a.shards = Shard(*data, a.R, ShardMode::kIidRandom, 62);
  const RunResult sync = RunSync(a);
  const RunResult async = RunAsync(a);
  const double async_gap = (sync.final_parameter - async.final_parameter).lpNorm<Eigen::Infinity>();
  v.Check(async_gap <= 1e-12, "async vs sync gap " + Fmt("%.2e", async_gap));
  v.Note("async vs sync gap " + Fmt("%.1e", async_gap));
  return v.Done();
}

// ---------------------------------------------------------------------------
// 7 and 10. Strongly convex quadratic
// ---------------------------------------------------------------------------

struct QuadraticSetup {
  Quadratic q = RandomQuadratic(50, 1.0, 4.0, 71);
  double f_star = QuadraticOptimum(q).f;
  std::size_t R = 8;
  std::size_t b = 8;
};

// a = max(4H/gamma, 32 kappa, H) + 1 with the SignComp floor gamma = 1/d.
double StronglyConvexOffset(std::size_t H, std::size_t d, double kappa) {
  const double gamma = 1.0 / static_cast<double>(d);
  return std::max({4.0 * static_cast<double>(H) / gamma, 32.0 * kappa,
                   static_cast<double>(H)}) + 1.0;
}

double Suboptimality(const QuadraticSetup& s, std::size_t T, std::size_t H,
                     const OperatorSpec& op, bool async, std::uint64_t seed) {
  RunConfig c;
  c.R = s.R;
  c.T = T;
  c.b = s.b;
  c.op = op;
  if (async) {
    Rng rng = MakeStream(seed, 0, StreamPurpose::kSchedule);
    c.schedule = MakeRandomAsync(T, H, c.R, rng);
  } else {
    c.schedule = MakePeriodic(T, H, c.R);
  }
  c.lr = LrSchedule{StronglyConvex{1.0, StronglyConvexOffset(H, 50, 4.0)}};
  c.objective = s.q;
  auto data = std::make_shared<Dataset>(SyntheticQuadraticNoise(1000, 50, 1.0, seed));
  c.shards = Shard(*data, c.R, ShardMode::kIidRandom, seed);
  c.data = data;
  c.seed = seed;
  c.diagnostics.record_every = T;
  c.diagnostics.track_virtual = false;
  const RunResult r = async ? RunAsync(c) : RunSync(c);
  return FullLoss(s.q, r.weighted_average, *data) - s.f_star;
}

Outcome StronglyConvexRate() {
  Verdict v;
  const QuadraticSetup s;
  const OperatorSpec sign_top{SignComp{TopK{5}, 1}};
  std::vector<double> at2000, at4000, dense;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    at2000.push_back(Suboptimality(s, 2000, 4, sign_top, false, seed));
    at4000.push_back(Suboptimality(s, 4000, 4, sign_top, false, seed));
    dense.push_back(Suboptimality(s, 4000, 4, OperatorSpec{Identity{}}, false, seed));
  }
  const double halving = Median(at4000) / Median(at2000);
  const double vs_dense = Median(at4000) / Median(dense);
  v.Check(halving <= 0.6, "T=4000/T=2000 ratio " + Fmt("%.3f", halving));
  v.Check(vs_dense <= 2.0, "compressed/uncompressed ratio " + Fmt("%.3f", vs_dense));
  v.Note("median f-f* T=2000 " + Fmt("%.3e", Median(at2000)) + ", T=4000 " +
         Fmt("%.3e", Median(at4000)) + " (ratio " + Fmt("%.3f", halving) + ")");
  v.Note("uncompressed " + Fmt("%.3e", Median(dense)) + " (ratio " + Fmt("%.3f", vs_dense) + ")");
  return v.Done();
}

Outcome AsyncConvergence() {
  Verdict v;
  const QuadraticSetup s;
  const OperatorSpec sign_top{SignComp{TopK{5}, 1}};
  std::vector<double> sync, async;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    sync.push_back(Suboptimality(s, 4000, 8, sign_top, false, seed));
    async.push_back(Suboptimality(s, 4000, 8, sign_top, true, seed));
  }
  const double ratio = Median(async) / Median(sync);
  v.Check(ratio <= 1.5, "async/sync ratio " + Fmt("%.3f", ratio));
  v.Note("median f-f* sync " + Fmt("%.3e", Median(sync)) + ", async " +
         Fmt("%.3e", Median(async)) + " (ratio " + Fmt("%.3f", ratio) + ")");

  std::size_t bad = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng = MakeStream(seed, 0, StreamPurpose::kSchedule);
    const SyncSchedule sched = MakeRandomAsync(4000, 8, s.R, rng);
    bool ok = ScheduleProblems(sched).empty();
    for (const auto& w : sched.per_worker) ok &= Gap(w) <= 8;
    if (!ok) ++bad;
  }
  v.Check(bad == 0, std::to_string(bad) + " schedules break the gap bound");
  v.Note("gap <= 8 for 1000/1000 schedules");
  return v.Done();
}

// ---------------------------------------------------------------------------
// 8. Convex softmax experiment
// ---------------------------------------------------------------------------

LoadedConfig PresetRun(std::uint64_t seed, const std::vector<std::string>& overrides) {
  nlohmann::json doc = PresetDocument("paper-convex");
  const std::string s = std::to_string(seed);
  for (const auto& o : {"run.seed=" + s, "data.seed=" + s, "data.shard_seed=" + s,
                        std::string("output.record_every=10"),
                        std::string("output.track_virtual=false")}) {
    ApplyOverride(doc, o);
  }
  for (const auto& o : overrides) {
    // A whole operator table replaces the preset operator.
    if (o.rfind("operator=", 0) == 0) {
      doc["operator"] = ParseConfigText("v = " + o.substr(9))["v"];
    } else {
      ApplyOverride(doc, o);
    }
  }
  return ResolveConfig(doc);
}

Outcome ConvexExperiment() {
  Verdict v;
  std::vector<double> savings;
  std::vector<double> targets;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    // Dense baseline: every-step averaging of uncompressed updates with its
    // own best constant from a sweep over c.
    const LoadedConfig dense_cfg = PresetRun(
        seed, {"operator={kind=\"identity\"}", "schedule.H=1", "lr.c=0.005"});
    const RunResult dense = RunSync(dense_cfg.run);
    const double target = dense.records.back().train_loss;
    const auto dense_bits = BitsToTarget(dense.records, target);

    // Preset: SignComp Top_k with H = 8, run past T = 3000 so it can catch up.
    const LoadedConfig comp_cfg = PresetRun(seed, {"run.T=6000"});
    const RunResult comp = RunSync(comp_cfg.run);
    const auto comp_bits = BitsToTarget(comp.records, target);
    const double saving = comp_bits && *comp_bits > 0
                              ? static_cast<double>(*dense_bits) / static_cast<double>(*comp_bits)
                              : 0.0;
    savings.push_back(saving);
    targets.push_back(target);
  }
  const double median = Median(savings);
  v.Check(median >= 10.0, "median bit saving " + Fmt("%.1f", median) + "x");
  v.Note("median target loss " + Fmt("%.4f", Median(targets)));
  v.Note("median bit saving " + Fmt("%.0f", median) + "x (min " +
         Fmt("%.0f", *std::min_element(savings.begin(), savings.end())) + "x)");
  return v.Done();
}

// ---------------------------------------------------------------------------
// 9. Non-convex logistic regression
// ---------------------------------------------------------------------------

double MinGradNormSq(const OperatorSpec& op, std::uint64_t seed) {
  auto data = std::make_shared<Dataset>(SyntheticClassification(2000, 20, 2, 2.0, seed));
  const ObjectiveSpec objective = NonConvexLogistic{};
  const auto constants = EstimateConstants(objective, *data, {}, 4, seed);
  RunConfig c;
  c.R = 4;
  c.T = 5000;
  c.b = 8;
  c.op = op;
  c.schedule = MakePeriodic(c.T, 4, c.R);
  // eta = C / sqrt(T) with C = 1 / (2 L).
  c.lr = LrSchedule{FixedRate{1.0 / (2.0 * constants.l_hat) / std::sqrt(static_cast<double>(c.T))}};
  c.objective = objective;
  c.shards = Shard(*data, c.R, ShardMode::kIidRandom, seed);
  c.data = data;
  c.seed = seed;
  c.diagnostics.record_every = 10;
  c.diagnostics.full_grad_norm = true;
  c.diagnostics.track_virtual = false;
  const RunResult r = RunSync(c);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& rec : r.records) best = std::min(best, *rec.grad_norm * *rec.grad_norm);
  return best;
}

Outcome NonConvex() {
  Verdict v;
  std::vector<double> comp, dense;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    comp.push_back(MinGradNormSq(OperatorSpec{Composed{Qsgd{15}, TopK{5}, true}}, seed));
    dense.push_back(MinGradNormSq(OperatorSpec{Identity{}}, seed));
  }
  const double ratio = Median(comp) / Median(dense);
  v.Check(ratio <= 1.5, "compressed/uncompressed ratio " + Fmt("%.3f", ratio));
  v.Note("median min |grad|^2 compressed " + Fmt("%.3e", Median(comp)) + ", uncompressed " +
         Fmt("%.3e", Median(dense)) + " (ratio " + Fmt("%.3f", ratio) + ")");
  return v.Done();
}

// ---------------------------------------------------------------------------
// 11. Gradient correctness
// ---------------------------------------------------------------------------

Outcome Gradients() {
  Verdict v;
  cli::GradcheckOptions options;
  std::ostringstream out, err;
  const int code = cli::CmdGradcheck(options, out, err);
  v.Check(code == cli::kExitOk, "gradcheck exit " + std::to_string(code));
  std::istringstream lines(out.str());
  for (std::string line; std::getline(lines, line);) {
    const auto at = line.find("max_relative_error=");
    if (at == std::string::npos) continue;
    const std::string name = line.substr(0, line.find(' '));
    const double e = std::stod(line.substr(at + 19));
    const double limit = name == "quadratic" ? 1e-8 : 1e-5;
    v.Check(e <= limit, name + " error " + Fmt("%.2e", e));
    v.Note(name + " " + Fmt("%.1e", e));
  }
  return v.Done();
}

// ---------------------------------------------------------------------------
// 12. Determinism
// ---------------------------------------------------------------------------

Outcome Determinism() {
  Verdict v;
  std::vector<std::pair<std::string, LoadedConfig>> runs;
  runs.emplace_back("preset", PresetRun(3, {"run.T=400", "output.track_virtual=true"}));
  runs.emplace_back("async", PresetRun(3, {"run.T=400", "schedule.mode=\"random-async\"",
                                           "operator={kind=\"composed\", quantizer=\"qsgd\", "
                                           "s=4, sparsifier=\"rand_k\", k=20}"}));
  for (auto& [name, cfg] : runs) {
    auto execute = [&](std::size_t threads) {
      cfg.run.threads = threads;
      return RenderCsv(cfg.asynchronous ? RunAsync(cfg.run).records : RunSync(cfg.run).records);
    };
    const std::string serial = execute(0);
    const std::string again = execute(0);
    const std::string parallel = execute(4);
    v.Check(serial == again, name + " repeat differs");
    v.Check(serial == parallel, name + " serial and parallel differ");
  }
  v.Note("serial, repeat and 4-thread CSV identical for sync and async runs");
  return v.Done();
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  Outcome (*run)();
};

}  // namespace
}  // namespace qsparse

int main() {
  using namespace qsparse;
  const Criterion criteria[] = {
      {1, "operator exactness", 1.0, OperatorExactness},
      {2, "quantizer unbiasedness and variance", 10.0, QuantizerMoments},
      {3, "composed-operator compression", 30.0, CatalogCheck},
      {4, "memory identity", 5.0, MemoryIdentity},
      {5, "memory boundedness", 5.0, MemoryBoundedness},
      {6, "reduction equivalences", 2.0, Reductions},
      {7, "strongly convex convergence", 60.0, StronglyConvexRate},
      {8, "convex experiment bit savings", 180.0, ConvexExperiment},
      {9, "non-convex gradient norm", 120.0, NonConvex},
      {10, "asynchronous convergence", 90.0, AsyncConvergence},
      {11, "gradient correctness", 5.0, Gradients},
      {12, "determinism", 60.0, Determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (seconds > c.limit_seconds) {
      outcome.pass = false;
      outcome.detail += " | over time limit " + Fmt("%.0f s", c.limit_seconds);
    }
    if (!outcome.pass) ++failures;
    std::printf("criterion %2d %-38s %s  (%.2f s) %s\n", c.id, c.name,
                outcome.pass ? "PASS" : "FAIL", seconds, outcome.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/12 criteria passed\n", 12 - failures);
  return failures == 0 ? 0 : 1;
}
