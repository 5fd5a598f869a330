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

#include "qsparse/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

namespace qsparse {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Fixed-size pool running one indexed loop at a time. The calling thread
// joins the work, so a pool of size 1 already gives two executors.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t threads) {
    for (std::size_t i = 0; i < threads; ++i) {
      threads_.emplace_back([this] { Loop(); });
    }
  }

  ~WorkerPool() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      stop_ = true;
    }
    wake_.notify_all();
    for (auto& t : threads_) t.join();
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  void ParallelFor(std::size_t count, const std::function<void(std::size_t)>& fn) {
    if (threads_.empty() || count <= 1) {
      for (std::size_t i = 0; i < count; ++i) fn(i);
      return;
    }
    {
      std::lock_guard<std::mutex> lock(mu_);
      fn_ = &fn;
      count_ = count;
      next_.store(0);
      pending_ = threads_.size();
      error_ = nullptr;
      ++generation_;
    }
    wake_.notify_all();
    Drain();
    std::unique_lock<std::mutex> lock(mu_);
    done_.wait(lock, [this] { return pending_ == 0; });
    fn_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void Drain() {
    for (;;) {
      const std::size_t i = next_.fetch_add(1);
      if (i >= count_) return;
      try {
        (*fn_)(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu_);
        if (!error_) error_ = std::current_exception();
      }
    }
  }

  void Loop() {
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lock(mu_);
        wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      Drain();
      {
        std::lock_guard<std::mutex> lock(mu_);
        --pending_;
      }
      done_.notify_one();
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t)>* fn_ = nullptr;
  std::size_t count_ = 0;
  std::atomic<std::size_t> next_{0};
  std::size_t pending_ = 0;
  std::uint64_t generation_ = 0;
  std::exception_ptr error_;
  bool stop_ = false;
};

// Pairwise summation over vectors in the given order.
Vector PairwiseSum(const std::vector<const Vector*>& items, std::size_t begin,
                   std::size_t end) {
  if (end - begin == 1) return *items[begin];
  const std::size_t mid = begin + (end - begin) / 2;
  return PairwiseSum(items, begin, mid) + PairwiseSum(items, mid, end);
}

Vector PairwiseSum(const std::vector<const Vector*>& items) {
  return PairwiseSum(items, 0, items.size());
}

// Mean as first + mean offset, so identical inputs return exactly that input.
Vector MeanOf(const std::vector<const Vector*>& items) {
  const Vector& first = *items.front();
  std::vector<Vector> offsets;
  offsets.reserve(items.size());
  std::vector<const Vector*> ptrs;
  ptrs.reserve(items.size());
  for (const Vector* v : items) {
    offsets.push_back(*v - first);
    ptrs.push_back(&offsets.back());
  }
  return first + PairwiseSum(ptrs) / static_cast<double>(items.size());
}

double Square(double v) { return v * v; }

struct Ceilings {
  std::optional<double> memory;
  std::optional<double> local_deviation;
  std::optional<double> virtual_gap;
  std::string note;
};

// Ceilings on quantity / eta_t^2 for a known G^2.
Ceilings ComputeCeilings(const LrSchedule& lr, bool synchronous, double gamma,
                         double H, double g_sq) {
  Ceilings out;
  const double g2 = gamma * gamma;
  const double H2 = H * H;
  if (lr.IsFixed()) {
    out.memory = 4.0 * (1.0 - g2) / g2 * H2 * g_sq;
    if (synchronous) {
      out.local_deviation = H2 * g_sq;
      out.virtual_gap = out.memory;
    } else {
      const double c_dev = (16.0 / g2 - 12.0) * (4.0 - 2.0 * gamma);
      out.local_deviation = (2.0 + H2 * c_dev) * H2 * g_sq;
      const double c_gap = (4.0 - 2.0 * gamma) * (8.0 / g2 - 6.0);
      out.virtual_gap =
          6.0 * c_gap * H2 * H2 * g_sq + 12.0 * (1.0 - g2) / g2 * H2 * g_sq;
    }
    return out;
  }
  const double a = lr.AveragingOffset();
  if (!(a * gamma > 4.0 * H)) {
    std::ostringstream note;
    note << "decaying-rate ceilings need a > 4H/gamma (a=" << a
         << ", 4H/gamma=" << 4.0 * H / gamma << "); skipped";
    out.note = note.str();
    if (synchronous) out.local_deviation = 4.0 * H2 * g_sq;
    return out;
  }
  const double C = 4.0 * a * gamma * (1.0 - g2) / (a * gamma - 4.0 * H);
  out.memory = 4.0 * C * H2 * g_sq / g2;
  if (synchronous) {
    out.local_deviation = 4.0 * H2 * g_sq;
    out.virtual_gap = out.memory;
  } else {
    const double c_dev = 8.0 * (4.0 - 2.0 * gamma) * (1.0 + C / g2);
    out.local_deviation = 8.0 * (1.0 + c_dev * H2) * H2 * g_sq;
    const double c_gap = 192.0 * (4.0 - 2.0 * gamma) * (1.0 + C / g2);
    out.virtual_gap = c_gap * H2 * H2 * g_sq + 12.0 * C / g2 * H2 * g_sq;
  }
  return out;
}

RunResult Execute(const RunConfig& config, bool require_synchronous) {
  auto problems = ConfigProblems(config);
  const bool synchronous = config.schedule.IsSynchronous();
  if (require_synchronous && !synchronous) {
    problems.push_back(
        "schedule: synchronous run needs identical per-worker schedules");
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));

  const Dataset& data = *config.data;
  const std::size_t d = ParamDim(config.objective, data);
  const std::size_t R = config.R;
  const std::size_t T = config.T;
  const auto& diag_opts = config.diagnostics;
  const bool track_virtual = diag_opts.track_virtual;

  std::vector<WorkerState> workers;
  workers.reserve(R);
  for (std::size_t r = 0; r < R; ++r) {
    const std::vector<std::size_t>* shard =
        data.n() > 0 ? &config.shards.assignment[r] : nullptr;
    workers.push_back(MakeWorker(r, d, config.seed, shard, track_virtual));
  }

  MasterState master;
  master.x_global = Vector::Zero(static_cast<Eigen::Index>(d));
  master.weighted_sum = Vector::Zero(static_cast<Eigen::Index>(d));
  master.weighted_sum_carry = Vector::Zero(static_cast<Eigen::Index>(d));
  const double a_avg = config.lr.AveragingOffset();

  std::unique_ptr<WorkerPool> pool;
  if (config.threads > 0) pool = std::make_unique<WorkerPool>(config.threads);
  auto parallel = [&](std::size_t count,
                      const std::function<void(std::size_t)>& fn) {
    if (pool) {
      pool->ParallelFor(count, fn);
    } else {
      for (std::size_t i = 0; i < count; ++i) fn(i);
    }
  };

  RunResult result;
  result.synchronous = synchronous;
  RunDiagnostics& diag = result.diagnostics;
  diag.gamma = GammaFloor(config.op, d);

  std::vector<std::size_t> cursor(R, 0);
  std::vector<double> grad_sq_max(R, 0.0);
  double mem_scaled_max = 0.0;
  double dev_scaled_max = 0.0;
  double gap_scaled_max = 0.0;
  std::vector<const Vector*> ptrs(R);

  auto mean_x_hat = [&] {
    for (std::size_t r = 0; r < R; ++r) ptrs[r] = &workers[r].x_hat;
    return MeanOf(ptrs);
  };

  // Measures the state at time t (before step t runs) and records it when due.
  auto observe = [&](std::size_t t, const Vector& x_mean) {
    const double eta_sq = Square(config.lr.Rate(t));
    StepRecord rec;
    rec.t = t;
    rec.cumulative_uplink_bits = result.uplink_bits;
    rec.memory_norm_sq.resize(R);
    double dev = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
      rec.memory_norm_sq[r] = workers[r].memory.squaredNorm();
      dev += (x_mean - workers[r].x_hat).squaredNorm();
      diag.memory_norm_sq_max =
          std::max(diag.memory_norm_sq_max, rec.memory_norm_sq[r]);
      mem_scaled_max = std::max(mem_scaled_max, rec.memory_norm_sq[r] / eta_sq);
    }
    rec.local_deviation = dev / static_cast<double>(R);
    diag.local_deviation_max = std::max(diag.local_deviation_max, rec.local_deviation);
    dev_scaled_max = std::max(dev_scaled_max, rec.local_deviation / eta_sq);
    if (track_virtual) {
      for (std::size_t r = 0; r < R; ++r) ptrs[r] = &workers[r].x_tilde;
      const Vector tilde_mean = MeanOf(ptrs);
      const Vector diff = x_mean - tilde_mean;
      const double gap = diff.squaredNorm();
      rec.virtual_gap = gap;
      diag.virtual_gap_max = std::max(diag.virtual_gap_max.value_or(0.0), gap);
      gap_scaled_max = std::max(gap_scaled_max, gap / eta_sq);
      if (synchronous) {
        for (std::size_t r = 0; r < R; ++r) ptrs[r] = &workers[r].memory;
        const Vector mem_mean = MeanOf(ptrs);
        const double scale = 1.0 + x_mean.lpNorm<Eigen::Infinity>();
        const double err = (diff - mem_mean).lpNorm<Eigen::Infinity>() / scale;
        diag.memory_identity_max =
            std::max(diag.memory_identity_max.value_or(0.0), err);
      }
    }
    const bool due = t % diag_opts.record_every == 0 || t == T;
    if (!due) return;
    rec.train_loss = FullLoss(config.objective, x_mean, data);
    if (diag_opts.full_grad_norm) {
      rec.grad_norm = FullGrad(config.objective, x_mean, data).norm();
    }
    result.records.push_back(std::move(rec));
  };

  std::vector<Compressed> messages(R);
  std::vector<std::size_t> syncing;
  syncing.reserve(R);
  for (std::size_t t = 0; t < T; ++t) {
    const double eta = config.lr.Rate(t);
    const Vector x_mean = mean_x_hat();
    observe(t, x_mean);
    WeightedAverageUpdate(master, x_mean, t, a_avg);

    parallel(R, [&](std::size_t r) {
      const Vector g = LocalStep(workers[r], config.objective, data, config.b, eta);
      grad_sq_max[r] = std::max(grad_sq_max[r], g.squaredNorm());
    });

    syncing.clear();
    for (std::size_t r = 0; r < R; ++r) {
      const auto& indices = config.schedule.per_worker[r];
      if (cursor[r] < indices.size() && indices[cursor[r]] == t + 1) {
        syncing.push_back(r);
      }
    }
    if (syncing.empty()) continue;

    std::vector<double> residual(syncing.size(), 0.0);
    parallel(syncing.size(), [&](std::size_t j) {
      WorkerState& w = workers[syncing[j]];
      const Vector argument = w.memory + w.anchor - w.x_hat;
      messages[syncing[j]] = SyncRound(w, config.op);
      residual[j] = (w.memory - (argument - messages[syncing[j]].reconstruction))
                        .lpNorm<Eigen::Infinity>();
    });

    std::vector<const Vector*> updates;
    updates.reserve(syncing.size());
    for (std::size_t j = 0; j < syncing.size(); ++j) {
      const std::size_t r = syncing[j];
      updates.push_back(&messages[r].reconstruction);
      result.uplink_bits += messages[r].bits;
      result.downlink_bits += DenseBits(d);
      diag.memory_residual_max = std::max(diag.memory_residual_max, residual[j]);
    }
    master.x_global -= PairwiseSum(updates) / static_cast<double>(R);
    for (std::size_t r : syncing) {
      workers[r].x_hat = master.x_global;
      workers[r].anchor = master.x_global;
      ++cursor[r];
    }
    ++result.sync_rounds;
  }
  observe(T, mean_x_hat());

  result.final_parameter = master.x_global;
  result.weighted_average = WeightedAverage(master);

  double g_sq = 0.0;
  for (double v : grad_sq_max) g_sq = std::max(g_sq, v);
  diag.g_hat_sq = diag_opts.g_hat_sq.value_or(g_sq);

  std::size_t gap = 0;
  for (const auto& indices : config.schedule.per_worker) {
    gap = std::max(gap, Gap(indices));
  }
  const double H = static_cast<double>(std::max(gap, config.schedule.H));
  Ceilings ceilings;
  if (diag.gamma) {
    ceilings = ComputeCeilings(config.lr, synchronous, *diag.gamma, H, diag.g_hat_sq);
  } else {
    ceilings.note = "no compression coefficient; ceilings skipped";
  }
  diag.checks.push_back({"memory_norm_sq", mem_scaled_max, ceilings.memory, ceilings.note});
  diag.checks.push_back(
      {"local_deviation", dev_scaled_max, ceilings.local_deviation, ceilings.note});
  if (track_virtual) {
    diag.checks.push_back(
        {"virtual_gap", gap_scaled_max, ceilings.virtual_gap, ceilings.note});
  }
  for (const auto& check : diag.checks) {
    if (check.violated()) {
      std::ostringstream out;
      out << check.name << "/eta_t^2 reached " << check.measured
          << " above its ceiling " << *check.ceiling << " (measured G^2="
          << diag.g_hat_sq << ")";
      diag.warnings.push_back(out.str());
    }
  }
  if (!ceilings.note.empty()) diag.warnings.push_back(ceilings.note);
  return result;
}

}  // namespace

double LrSchedule::Rate(std::size_t t) const {
  const double tt = static_cast<double>(t);
  return std::visit(
      Overloaded{
          [](const FixedRate& p) { return p.eta; },
          [&](const InverseTime& p) { return p.xi / (p.a + tt); },
          [&](const StronglyConvex& p) { return 8.0 / (p.mu * (p.a + tt)); },
          [&](const ExperimentConvex& p) {
            return p.c / (p.lambda * (p.a + tt));
          },
      },
      kind);
}

double LrSchedule::AveragingOffset() const {
  return std::visit(Overloaded{
                        [](const FixedRate&) { return 1.0; },
                        [](const auto& p) { return p.a; },
                    },
                    kind);
}

std::string LrSchedule::Describe() const {
  std::ostringstream out;
  std::visit(Overloaded{
                 [&](const FixedRate& p) { out << "fixed eta=" << p.eta; },
                 [&](const InverseTime& p) {
                   out << "inverse-time xi=" << p.xi << " a=" << p.a;
                 },
                 [&](const StronglyConvex& p) {
                   out << "strongly-convex mu=" << p.mu << " a=" << p.a;
                 },
                 [&](const ExperimentConvex& p) {
                   out << "experiment-convex c=" << p.c << " lambda=" << p.lambda
                       << " a=" << p.a;
                 },
             },
             kind);
  return out.str();
}

std::vector<std::string> LrProblems(const LrSchedule& lr) {
  std::vector<std::string> problems;
  auto positive = [&](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      problems.push_back(std::string("lr.") + name + " must be positive");
    }
  };
  std::visit(Overloaded{
                 [&](const FixedRate& p) { positive(p.eta, "eta"); },
                 [&](const InverseTime& p) {
                   positive(p.xi, "xi");
                   positive(p.a, "a");
                 },
                 [&](const StronglyConvex& p) {
                   positive(p.mu, "mu");
                   positive(p.a, "a");
                 },
                 [&](const ExperimentConvex& p) {
                   positive(p.c, "c");
                   positive(p.lambda, "lambda");
                   positive(p.a, "a");
                 },
             },
             lr.kind);
  return problems;
}

std::vector<std::string> ConfigProblems(const RunConfig& config) {
  std::vector<std::string> problems;
  auto add = [&](const std::vector<std::string>& more) {
    problems.insert(problems.end(), more.begin(), more.end());
  };
  if (config.R < 1) problems.push_back("run.R must be >= 1");
  if (config.T < 1) problems.push_back("run.T must be >= 1");
  if (config.b < 1) problems.push_back("run.b must be >= 1");
  if (config.diagnostics.record_every < 1) {
    problems.push_back("output.record_every must be >= 1");
  }
  if (!config.data) {
    problems.push_back("data: missing dataset");
    return problems;
  }
  const Dataset& data = *config.data;
  add(ObjectiveProblems(config.objective, data));
  std::size_t d = 0;
  try {
    d = ParamDim(config.objective, data);
  } catch (const Error& e) {
    problems.push_back(e.what());
  }
  if (d > 0) {
    for (const auto& p : ValidationProblems(config.op, d)) {
      problems.push_back("operator: " + p);
    }
  } else {
    problems.push_back("objective: parameter dimension is zero");
  }
  add(LrProblems(config.lr));
  if (config.schedule.T != config.T) {
    problems.push_back("schedule: horizon " + std::to_string(config.schedule.T) +
                       " differs from run.T=" + std::to_string(config.T));
  }
  if (config.schedule.num_workers() != config.R) {
    problems.push_back("schedule: has " +
                       std::to_string(config.schedule.num_workers()) +
                       " workers, run.R=" + std::to_string(config.R));
  }
  add(ScheduleProblems(config.schedule));
  if (data.n() > 0) {
    if (config.shards.num_workers() != config.R) {
      problems.push_back("data: shard plan has " +
                         std::to_string(config.shards.num_workers()) +
                         " shards, run.R=" + std::to_string(config.R));
    } else {
      for (std::size_t r = 0; r < config.R; ++r) {
        const auto& shard = config.shards.assignment[r];
        if (shard.empty()) {
          problems.push_back("data: shard " + std::to_string(r) + " is empty");
        }
        for (std::size_t i : shard) {
          if (i >= data.n()) {
            problems.push_back("data: shard " + std::to_string(r) +
                               " holds out-of-range index " + std::to_string(i));
            break;
          }
        }
      }
    }
  }
  return problems;
}

WorkerState MakeWorker(std::size_t id, std::size_t d, std::uint64_t seed,
                       const std::vector<std::size_t>* shard,
                       bool track_virtual) {
  WorkerState w;
  w.id = id;
  const auto dim = static_cast<Eigen::Index>(d);
  w.x_hat = Vector::Zero(dim);
  w.memory = Vector::Zero(dim);
  w.anchor = Vector::Zero(dim);
  if (track_virtual) w.x_tilde = Vector::Zero(dim);
  w.batch_rng = MakeStream(seed, id, StreamPurpose::kBatch);
  w.compress_rng = MakeStream(seed, id, StreamPurpose::kCompress);
  w.shard = shard;
  return w;
}

Vector LocalStep(WorkerState& worker, const ObjectiveSpec& objective,
                 const Dataset& data, std::size_t b, double eta) {
  if (!(eta > 0.0)) throw ParameterError("local_step: eta must be positive");
  std::vector<std::size_t> batch;
  if (worker.shard && !worker.shard->empty()) {
    batch = SampleBatch(worker.batch_rng, worker.shard->size(), b);
    for (auto& i : batch) i = (*worker.shard)[i];
  }
  Vector g = Grad(objective, worker.x_hat, data, batch);
  worker.x_hat -= eta * g;
  if (worker.x_tilde.size() > 0) worker.x_tilde -= eta * g;
  return g;
}

Compressed SyncRound(WorkerState& worker, const OperatorSpec& op) {
  Vector argument = worker.memory + worker.anchor - worker.x_hat;
  Compressed out = ApplyOperator(op, argument, worker.compress_rng);
  worker.memory = argument - out.reconstruction;
  return out;
}

void WeightedAverageUpdate(MasterState& master, const Vector& x_hat_mean,
                           std::size_t t, double a) {
  const double w = Square(a + static_cast<double>(t));
  if (master.weighted_sum.size() == 0) {
    master.weighted_sum = Vector::Zero(x_hat_mean.size());
    master.weighted_sum_carry = Vector::Zero(x_hat_mean.size());
  }
  for (Eigen::Index i = 0; i < x_hat_mean.size(); ++i) {
    const double y = w * x_hat_mean[i] - master.weighted_sum_carry[i];
    const double s = master.weighted_sum[i] + y;
    master.weighted_sum_carry[i] = (s - master.weighted_sum[i]) - y;
    master.weighted_sum[i] = s;
  }
  const double y = w - master.weight_carry;
  const double s = master.weight_total + y;
  master.weight_carry = (s - master.weight_total) - y;
  master.weight_total = s;
}

Vector WeightedAverage(const MasterState& master) {
  if (master.weight_total <= 0.0) {
    throw ParameterError("weighted_average: no iterates accumulated");
  }
  return master.weighted_sum / master.weight_total;
}

RunResult RunSync(const RunConfig& config) { return Execute(config, true); }

RunResult RunAsync(const RunConfig& config) { return Execute(config, false); }

std::size_t ThreadsFromEnvironment() {
  const char* value = std::getenv("QSPARSE_THREADS");
  if (!value || !*value) return 0;
  char* end = nullptr;
  const unsigned long parsed = std::strtoul(value, &end, 10);
  if (*end != '\0') {
    throw ParameterError(std::string("QSPARSE_THREADS must be a non-negative "
                                     "integer, got '") +
                         value + "'");
  }
  return parsed;
}

}  // namespace qsparse
