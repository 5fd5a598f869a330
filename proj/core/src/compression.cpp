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

#include "qsparse/compression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "qsparse/metrics.hpp"

namespace qsparse {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t SparsifierK(const SparsifierSpec& sp) {
  return std::visit([](const auto& v) { return v.k; }, sp);
}

std::string DescribeQuantizer(const QuantizerSpec& q) {
  return std::visit(
      Overloaded{
          [](const Qsgd& v) { return "Qsgd s=" + std::to_string(v.s); },
          [](const StochasticLevels& v) {
            return "StochasticLevels s=" + std::to_string(v.s);
          },
          [](const RotatedLevels& v) {
            return "RotatedLevels s=" + std::to_string(v.s);
          },
      },
      q);
}

std::string DescribeSparsifier(const SparsifierSpec& sp) {
  return std::visit(
      Overloaded{
          [](const TopK& v) { return "TopK k=" + std::to_string(v.k); },
          [](const RandK& v) { return "RandK k=" + std::to_string(v.k); },
      },
      sp);
}

std::vector<std::size_t> Select(const SparsifierSpec& sp, const Vector& x,
                                Rng& rng) {
  return std::visit(
      Overloaded{
          [&](const TopK& v) { return SelectTopK(x, v.k); },
          [&](const RandK& v) {
            return SelectRandK(static_cast<std::size_t>(x.size()), v.k, rng);
          },
      },
      sp);
}

Vector Gather(const Vector& x, std::span<const std::size_t> support) {
  Vector v(static_cast<Eigen::Index>(support.size()));
  for (std::size_t j = 0; j < support.size(); ++j) {
    v[static_cast<Eigen::Index>(j)] = x[static_cast<Eigen::Index>(support[j])];
  }
  return v;
}

SparseUpdate SparseFromSupport(const Vector& x,
                               std::span<const std::size_t> support) {
  SparseUpdate out;
  out.dim = static_cast<std::size_t>(x.size());
  out.entries.reserve(support.size());
  for (std::size_t i : support) {
    const double value = x[static_cast<Eigen::Index>(i)];
    if (value != 0.0) out.entries.push_back({i, value});
  }
  return out;
}

Vector QuantizeWithRng(const QuantizerSpec& q, const Vector& v, Rng& rng) {
  return std::visit(
      Overloaded{
          [&](const Qsgd& p) { return QsgdQuantize(v, p.s, rng); },
          [&](const StochasticLevels& p) {
            return StochasticLevelsQuantize(v, p.s, rng);
          },
          [&](const RotatedLevels& p) {
            return RotatedLevelsQuantize(v, p.s, rng);
          },
      },
      q);
}

// One stochastic rounding step between grid points `lower` and `lower + 1`
// with fractional position `frac`.
inline double RoundLevel(double lower, double frac, double u) {
  return u < frac ? lower + 1.0 : lower;
}

void CollectProblems(const OperatorSpec& spec, std::size_t d,
                     const std::string& where,
                     std::vector<std::string>& problems) {
  auto check_k = [&](std::size_t k, const char* name) {
    if (k < 1 || k > d) {
      std::ostringstream out;
      out << where << name << ".k=" << k << " out of range [1, " << d << "]";
      problems.push_back(out.str());
    }
  };
  auto check_s = [&](unsigned s, unsigned min_s, const char* name) {
    if (s < min_s) {
      std::ostringstream out;
      out << where << name << ".s=" << s << " must be >= " << min_s;
      problems.push_back(out.str());
    }
  };
  auto check_quantizer = [&](const QuantizerSpec& q) {
    std::visit(Overloaded{
                   [&](const Qsgd& p) { check_s(p.s, 1, "Qsgd"); },
                   [&](const StochasticLevels& p) {
                     check_s(p.s, 2, "StochasticLevels");
                   },
                   [&](const RotatedLevels& p) {
                     check_s(p.s, 2, "RotatedLevels");
                   },
               },
               q);
  };
  auto check_sparsifier = [&](const SparsifierSpec& sp) {
    std::visit(Overloaded{
                   [&](const TopK& p) { check_k(p.k, "TopK"); },
                   [&](const RandK& p) { check_k(p.k, "RandK"); },
               },
               sp);
  };

  if (d == 0) {
    problems.push_back(where + "dimension must be positive");
    return;
  }
  std::visit(
      Overloaded{
          [&](const Identity&) {},
          [&](const Sign&) {},
          [&](const TopK& p) { check_k(p.k, "TopK"); },
          [&](const RandK& p) { check_k(p.k, "RandK"); },
          [&](const Qsgd& p) { check_s(p.s, 1, "Qsgd"); },
          [&](const StochasticLevels& p) {
            check_s(p.s, 2, "StochasticLevels");
          },
          [&](const RotatedLevels& p) { check_s(p.s, 2, "RotatedLevels"); },
          [&](const Composed& p) {
            const std::size_t before = problems.size();
            check_quantizer(p.quantizer);
            check_sparsifier(p.sparsifier);
            if (problems.size() == before && !p.scaled) {
              const double beta = Beta(p.quantizer, SparsifierK(p.sparsifier));
              if (!(beta < 1.0)) {
                std::ostringstream out;
                out << where << "unscaled Composed{"
                    << DescribeQuantizer(p.quantizer) << ", "
                    << DescribeSparsifier(p.sparsifier)
                    << "} has beta_{k,s}=" << beta
                    << " >= 1; outside the operating regime beta_{k,s} < 1 "
                       "(use scaled=true)";
                problems.push_back(out.str());
              }
            }
          },
          [&](const SignComp& p) {
            check_sparsifier(p.sparsifier);
            if (p.norm_order < 1) {
              problems.push_back(where + "SignComp.norm_order must be >= 1");
            }
          },
          [&](const Piecewise& p) {
            if (p.segments.empty()) {
              problems.push_back(where + "Piecewise has no segments");
              return;
            }
            std::vector<const Segment*> sorted;
            for (const auto& seg : p.segments) sorted.push_back(&seg);
            std::sort(sorted.begin(), sorted.end(),
                      [](const Segment* a, const Segment* b) {
                        return a->begin < b->begin;
                      });
            std::size_t cursor = 0;
            for (const Segment* seg : sorted) {
              std::ostringstream tag;
              tag << where << "segment [" << seg->begin << ", " << seg->end
                  << "): ";
              if (seg->begin != cursor) {
                std::ostringstream out;
                out << tag.str() << "segments must partition [0, " << d
                    << ") disjointly; expected begin=" << cursor;
                problems.push_back(out.str());
              }
              if (seg->end <= seg->begin) {
                problems.push_back(tag.str() + "empty or reversed range");
                cursor = std::max(cursor, seg->end);
                continue;
              }
              if (std::holds_alternative<Piecewise>(seg->op.kind)) {
                problems.push_back(tag.str() + "nested Piecewise unsupported");
              } else {
                CollectProblems(seg->op, seg->end - seg->begin, tag.str(),
                                problems);
              }
              cursor = seg->end;
            }
            if (cursor != d) {
              std::ostringstream out;
              out << where << "segments end at " << cursor
                  << " but must cover [0, " << d << ")";
              problems.push_back(out.str());
            }
          },
      },
      spec.kind);
}

}  // namespace

Vector SparseUpdate::Densify() const {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(dim));
  for (const auto& e : entries) out[static_cast<Eigen::Index>(e.index)] = e.value;
  return out;
}

std::string Describe(const OperatorSpec& spec) {
  return std::visit(
      Overloaded{
          [](const Identity&) { return std::string("Identity"); },
          [](const Sign&) { return std::string("Sign"); },
          [](const TopK& p) { return "TopK k=" + std::to_string(p.k); },
          [](const RandK& p) { return "RandK k=" + std::to_string(p.k); },
          [](const Qsgd& p) { return "Qsgd s=" + std::to_string(p.s); },
          [](const StochasticLevels& p) {
            return "StochasticLevels s=" + std::to_string(p.s);
          },
          [](const RotatedLevels& p) {
            return "RotatedLevels s=" + std::to_string(p.s);
          },
          [](const Composed& p) {
            return "Composed{" + DescribeQuantizer(p.quantizer) + ", " +
                   DescribeSparsifier(p.sparsifier) +
                   (p.scaled ? ", scaled}" : ", unscaled}");
          },
          [](const SignComp& p) {
            return "SignComp{" + DescribeSparsifier(p.sparsifier) +
                   ", m=" + std::to_string(p.norm_order) + "}";
          },
          [](const Piecewise& p) {
            std::string out = "Piecewise{";
            for (std::size_t i = 0; i < p.segments.size(); ++i) {
              const auto& seg = p.segments[i];
              if (i) out += "; ";
              out += "[" + std::to_string(seg.begin) + "," +
                     std::to_string(seg.end) + ") " + Describe(seg.op);
            }
            return out + "}";
          },
      },
      spec.kind);
}

std::vector<std::string> ValidationProblems(const OperatorSpec& spec,
                                            std::size_t d) {
  std::vector<std::string> problems;
  CollectProblems(spec, d, "", problems);
  return problems;
}

void Validate(const OperatorSpec& spec, std::size_t d) {
  auto problems = ValidationProblems(spec, d);
  if (!problems.empty()) throw ParameterError("operator: " + problems.front());
}

// ---------------------------------------------------------------------------
// Sparsifiers
// ---------------------------------------------------------------------------

std::vector<std::size_t> SelectTopK(const Vector& x, std::size_t k) {
  const auto d = static_cast<std::size_t>(x.size());
  if (k < 1 || k > d) {
    throw ParameterError("top_k: k=" + std::to_string(k) +
                         " out of range [1, " + std::to_string(d) + "]");
  }
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (k < d) {
    auto larger = [&x](std::size_t a, std::size_t b) {
      const double fa = std::abs(x[static_cast<Eigen::Index>(a)]);
      const double fb = std::abs(x[static_cast<Eigen::Index>(b)]);
      return fa > fb || (fa == fb && a < b);
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k),
                     idx.end(), larger);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

std::vector<std::size_t> SelectRandK(std::size_t d, std::size_t k, Rng& rng) {
  if (k < 1 || k > d) {
    throw ParameterError("rand_k: k=" + std::to_string(k) +
                         " out of range [1, " + std::to_string(d) + "]");
  }
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, d - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

SparseUpdate TopKSparsify(const Vector& x, std::size_t k) {
  const auto support = SelectTopK(x, k);
  return SparseFromSupport(x, support);
}

SparseUpdate RandKSparsify(const Vector& x, std::size_t k, Rng& rng) {
  const auto support =
      SelectRandK(static_cast<std::size_t>(x.size()), k, rng);
  return SparseFromSupport(x, support);
}

// ---------------------------------------------------------------------------
// Quantizers
// ---------------------------------------------------------------------------

Vector QsgdQuantize(const Vector& x, unsigned s, const UniformSource& uniform) {
  if (s < 1) throw ParameterError("qsgd: s must be >= 1");
  RequireFinite(x, "qsgd");
  const double norm = x.norm();
  Vector out = Vector::Zero(x.size());
  if (norm == 0.0) return out;
  const double levels = static_cast<double>(s);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double scaled = std::abs(x[i]) / norm * levels;
    double lower = std::floor(scaled);
    double frac = scaled - lower;
    if (lower >= levels) {
      lower = levels;
      frac = 0.0;
    }
    const double level =
        RoundLevel(lower, frac, uniform(static_cast<std::size_t>(i)));
    if (level == 0.0) continue;
    const double magnitude = norm * level / levels;
    out[i] = x[i] < 0.0 ? -magnitude : magnitude;
  }
  return out;
}

Vector QsgdQuantize(const Vector& x, unsigned s, Rng& rng) {
  std::vector<double> u(static_cast<std::size_t>(x.size()));
  for (auto& v : u) v = UniformUnit(rng);
  return QsgdQuantize(x, s, [&u](std::size_t i) { return u[i]; });
}

Vector StochasticLevelsQuantize(const Vector& x, unsigned s,
                                const UniformSource& uniform) {
  if (s < 2) throw ParameterError("stochastic_levels: s must be >= 2");
  RequireFinite(x, "stochastic_levels");
  if (x.size() == 0) return x;
  const double lo = x.minCoeff();
  const double hi = x.maxCoeff();
  if (lo == hi) return x;
  const double levels = static_cast<double>(s);
  const double step = (hi - lo) / levels;
  Vector out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double u = uniform(static_cast<std::size_t>(i));
    if (x[i] == lo) {
      out[i] = lo;
      continue;
    }
    if (x[i] == hi) {
      out[i] = hi;
      continue;
    }
    const double pos = (x[i] - lo) / step;
    const double lower = std::clamp(std::floor(pos), 0.0, levels - 1.0);
    const double frac = std::clamp(pos - lower, 0.0, 1.0);
    const double level = RoundLevel(lower, frac, u);
    out[i] = level >= levels ? hi : lo + level * step;
  }
  return out;
}

Vector StochasticLevelsQuantize(const Vector& x, unsigned s, Rng& rng) {
  std::vector<double> u(static_cast<std::size_t>(x.size()));
  for (auto& v : u) v = UniformUnit(rng);
  return StochasticLevelsQuantize(x, s, [&u](std::size_t i) { return u[i]; });
}

std::size_t NextPowerOfTwo(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void FastWalshHadamard(std::span<double> data) {
  const std::size_t n = data.size();
  if (n == 0 || (n & (n - 1)) != 0) {
    throw ParameterError("walsh_hadamard: length must be a power of two");
  }
  for (std::size_t h = 1; h < n; h <<= 1) {
    for (std::size_t i = 0; i < n; i += h << 1) {
      for (std::size_t j = i; j < i + h; ++j) {
        const double a = data[j];
        const double b = data[j + h];
        data[j] = a + b;
        data[j + h] = a - b;
      }
    }
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (auto& v : data) v *= scale;
}

Vector HadamardRotate(const Vector& x, std::span<const double> signs) {
  const std::size_t padded = signs.size();
  if (padded < static_cast<std::size_t>(x.size()) ||
      NextPowerOfTwo(padded) != padded) {
    throw ParameterError("hadamard_rotate: bad sign vector length");
  }
  Vector y = Vector::Zero(static_cast<Eigen::Index>(padded));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    y[i] = x[i] * signs[static_cast<std::size_t>(i)];
  }
  FastWalshHadamard(std::span<double>(y.data(), padded));
  return y;
}

Vector HadamardUnrotate(const Vector& y, std::span<const double> signs,
                        std::size_t d) {
  Vector z = y;
  FastWalshHadamard(std::span<double>(z.data(), static_cast<std::size_t>(z.size())));
  Vector out(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i) {
    out[static_cast<Eigen::Index>(i)] =
        z[static_cast<Eigen::Index>(i)] * signs[i];
  }
  return out;
}

Vector RotatedLevelsQuantize(const Vector& x, unsigned s,
                             std::span<const double> rotation_signs,
                             const UniformSource& uniform) {
  if (s < 2) throw ParameterError("rotated_levels: s must be >= 2");
  RequireFinite(x, "rotated_levels");
  const Vector rotated = HadamardRotate(x, rotation_signs);
  const Vector quantized = StochasticLevelsQuantize(rotated, s, uniform);
  return HadamardUnrotate(quantized, rotation_signs,
                          static_cast<std::size_t>(x.size()));
}

Vector RotatedLevelsQuantize(const Vector& x, unsigned s, Rng& rng) {
  const std::size_t padded =
      NextPowerOfTwo(std::max<std::size_t>(1, static_cast<std::size_t>(x.size())));
  std::vector<double> signs(padded);
  for (auto& v : signs) v = (rng() >> 63) ? -1.0 : 1.0;
  std::vector<double> u(padded);
  for (auto& v : u) v = UniformUnit(rng);
  return RotatedLevelsQuantize(x, s, signs,
                               [&u](std::size_t i) { return u[i]; });
}

Vector SignQuantize(const Vector& x) {
  Vector out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out[i] = (x[i] >= 0.0 ? 1.0 : 0.0) - (x[i] < 0.0 ? 1.0 : 0.0);
  }
  return out;
}

double LpNorm(std::span<const double> v, unsigned m) {
  if (m < 1) throw ParameterError("lp_norm: order must be >= 1");
  double peak = 0.0;
  for (double a : v) peak = std::max(peak, std::abs(a));
  if (peak == 0.0) return 0.0;
  double acc = 0.0;
  if (m == 1) {
    for (double a : v) acc += std::abs(a);
    return acc;
  }
  if (m == 2) {
    for (double a : v) acc += (a / peak) * (a / peak);
    return peak * std::sqrt(acc);
  }
  const double order = static_cast<double>(m);
  for (double a : v) acc += std::pow(std::abs(a) / peak, order);
  return peak * std::pow(acc, 1.0 / order);
}

// ---------------------------------------------------------------------------
// Uniform interface
// ---------------------------------------------------------------------------

namespace {

Compressed ApplyFlat(const OperatorSpec& spec, const Vector& x, Rng& rng) {
  const auto d = static_cast<std::size_t>(x.size());
  Compressed out;
  std::visit(
      Overloaded{
          [&](const Identity&) {
            out.reconstruction = x;
            out.payload.nnz = d;
          },
          [&](const TopK& p) {
            const auto support = SelectTopK(x, p.k);
            out.reconstruction = Vector::Zero(x.size());
            for (std::size_t i : support) {
              const auto j = static_cast<Eigen::Index>(i);
              out.reconstruction[j] = x[j];
              if (x[j] != 0.0) ++out.payload.nnz;
            }
          },
          [&](const RandK& p) {
            const auto support = SelectRandK(d, p.k, rng);
            out.reconstruction = Vector::Zero(x.size());
            for (std::size_t i : support) {
              const auto j = static_cast<Eigen::Index>(i);
              out.reconstruction[j] = x[j];
              if (x[j] != 0.0) ++out.payload.nnz;
            }
          },
          [&](const Qsgd& p) {
            out.reconstruction = QsgdQuantize(x, p.s, rng);
            out.payload.nnz = x.isZero(0.0) ? 0 : d;
          },
          [&](const StochasticLevels& p) {
            out.reconstruction = StochasticLevelsQuantize(x, p.s, rng);
            out.payload.nnz = x.isZero(0.0) ? 0 : d;
          },
          [&](const RotatedLevels& p) {
            out.reconstruction = RotatedLevelsQuantize(x, p.s, rng);
            out.payload.nnz = x.isZero(0.0) ? 0 : d;
          },
          [&](const Sign&) {
            const double scale =
                LpNorm(std::span<const double>(x.data(), d), 1) /
                static_cast<double>(d);
            out.reconstruction = scale * SignQuantize(x);
            out.payload.nnz = d;
          },
          [&](const Composed& p) {
            const auto support = Select(p.sparsifier, x, rng);
            const Vector kept = Gather(x, support);
            Vector q = QuantizeWithRng(p.quantizer, kept, rng);
            if (p.scaled) q /= 1.0 + Beta(p.quantizer, support.size());
            out.reconstruction = Vector::Zero(x.size());
            for (std::size_t j = 0; j < support.size(); ++j) {
              const double v = q[static_cast<Eigen::Index>(j)];
              out.reconstruction[static_cast<Eigen::Index>(support[j])] = v;
              if (v != 0.0) ++out.payload.nnz;
            }
          },
          [&](const SignComp& p) {
            const auto support = Select(p.sparsifier, x, rng);
            const Vector kept = Gather(x, support);
            const double scale =
                LpNorm(std::span<const double>(kept.data(), support.size()),
                       p.norm_order) /
                static_cast<double>(support.size());
            out.reconstruction = Vector::Zero(x.size());
            for (std::size_t i : support) {
              const auto j = static_cast<Eigen::Index>(i);
              out.reconstruction[j] = x[j] >= 0.0 ? scale : -scale;
            }
            out.payload.nnz = support.size();
          },
          [&](const Piecewise& p) {
            out.reconstruction = Vector::Zero(x.size());
            for (const auto& seg : p.segments) {
              const auto begin = static_cast<Eigen::Index>(seg.begin);
              const auto len = static_cast<Eigen::Index>(seg.end - seg.begin);
              const Vector slice = x.segment(begin, len);
              Compressed part = ApplyFlat(seg.op, slice, rng);
              out.reconstruction.segment(begin, len) = part.reconstruction;
              out.payload.nnz += part.payload.nnz;
              out.payload.segments.push_back(std::move(part.payload));
            }
          },
      },
      spec.kind);
  out.bits = BitCost(spec, out.payload, d);
  return out;
}

}  // namespace

Compressed ApplyOperator(const OperatorSpec& spec, const Vector& x, Rng& rng) {
  RequireFinite(x, "apply_operator");
  return ApplyFlat(spec, x, rng);
}

// ---------------------------------------------------------------------------
// Coefficients
// ---------------------------------------------------------------------------

double Beta(const QuantizerSpec& quantizer, std::size_t n) {
  const double dim = static_cast<double>(n);
  return std::visit(
      Overloaded{
          [&](const Qsgd& p) {
            const double s = p.s;
            return std::min(dim / (s * s), std::sqrt(dim) / s);
          },
          [&](const StochasticLevels& p) {
            const double s = p.s;
            return dim / (2.0 * s * s);
          },
          [&](const RotatedLevels& p) {
            const double s = p.s;
            const double padded =
                static_cast<double>(NextPowerOfTwo(std::max<std::size_t>(n, 1)));
            return 2.0 * std::log2(2.0 * padded) / (s * s);
          },
      },
      quantizer);
}

double Beta(const OperatorSpec& spec, std::size_t n) {
  return std::visit(
      Overloaded{
          [&](const Qsgd& p) { return Beta(QuantizerSpec{p}, n); },
          [&](const StochasticLevels& p) { return Beta(QuantizerSpec{p}, n); },
          [&](const RotatedLevels& p) { return Beta(QuantizerSpec{p}, n); },
          [&](const auto&) -> double {
            throw ParameterError("beta: operator " + Describe(spec) +
                                 " is not a stochastic quantizer");
          },
      },
      spec.kind);
}

namespace {

std::optional<double> GammaImpl(const OperatorSpec& spec, std::size_t d,
                                bool floor_for_sign) {
  const double dim = static_cast<double>(d);
  auto bare_quantizer = [&](const QuantizerSpec& q) -> std::optional<double> {
    const double beta = Beta(q, d);
    if (beta < 1.0) return 1.0 - beta;
    return std::nullopt;
  };
  return std::visit(
      Overloaded{
          [&](const Identity&) -> std::optional<double> { return 1.0; },
          [&](const TopK& p) -> std::optional<double> {
            return static_cast<double>(p.k) / dim;
          },
          [&](const RandK& p) -> std::optional<double> {
            return static_cast<double>(p.k) / dim;
          },
          [&](const Qsgd& p) { return bare_quantizer(p); },
          [&](const StochasticLevels& p) { return bare_quantizer(p); },
          [&](const RotatedLevels& p) { return bare_quantizer(p); },
          [&](const Sign&) -> std::optional<double> {
            if (floor_for_sign) return 1.0 / dim;
            return std::nullopt;
          },
          [&](const Composed& p) -> std::optional<double> {
            const std::size_t k = SparsifierK(p.sparsifier);
            const double beta = Beta(p.quantizer, k);
            const double kd = static_cast<double>(k) / dim;
            if (p.scaled) return kd / (1.0 + beta);
            if (beta < 1.0) return (1.0 - beta) * kd;
            return std::nullopt;
          },
          [&](const SignComp& p) -> std::optional<double> {
            const double k = static_cast<double>(SparsifierK(p.sparsifier));
            if (p.norm_order >= 2) {
              return std::pow(k, 2.0 / p.norm_order - 1.0) / dim;
            }
            if (floor_for_sign) return 1.0 / dim;
            return std::nullopt;
          },
          [&](const Piecewise& p) -> std::optional<double> {
            std::optional<double> smallest;
            for (const auto& seg : p.segments) {
              auto g = GammaImpl(seg.op, seg.end - seg.begin, floor_for_sign);
              if (!g) return std::nullopt;
              smallest = smallest ? std::min(*smallest, *g) : *g;
            }
            return smallest;
          },
      },
      spec.kind);
}

}  // namespace

std::optional<double> TheoreticalGamma(const OperatorSpec& spec,
                                       std::size_t d) {
  return GammaImpl(spec, d, false);
}

std::optional<double> GammaFloor(const OperatorSpec& spec, std::size_t d) {
  return GammaImpl(spec, d, true);
}

double SignCompL1Gamma(const Vector& x, std::size_t k,
                       std::span<const std::size_t> support) {
  const double dim = static_cast<double>(x.size());
  const Vector kept = Gather(x, support);
  const double l2 = kept.norm();
  const double floor = 1.0 / dim;
  if (l2 == 0.0) return floor;
  const double l1 = kept.lpNorm<1>();
  const double ratio = l1 / (std::sqrt(dim) * l2);
  return std::max(floor, static_cast<double>(k) / dim * ratio * ratio);
}

// ---------------------------------------------------------------------------
// Empirical verification
// ---------------------------------------------------------------------------

std::string ToString(VectorDistribution dist) {
  switch (dist) {
    case VectorDistribution::kNormal:
      return "normal";
    case VectorDistribution::kHeavyTailed:
      return "heavy-tailed";
    case VectorDistribution::kSparse:
      return "sparse";
  }
  return "normal";
}

VectorDistribution ParseDistribution(const std::string& name) {
  if (name == "normal") return VectorDistribution::kNormal;
  if (name == "heavy-tailed" || name == "student-t") {
    return VectorDistribution::kHeavyTailed;
  }
  if (name == "sparse") return VectorDistribution::kSparse;
  throw ParameterError("unknown distribution '" + name +
                       "' (expected normal, heavy-tailed or sparse)");
}

Vector DrawVector(std::size_t d, VectorDistribution dist, Rng& rng) {
  Vector x(static_cast<Eigen::Index>(d));
  switch (dist) {
    case VectorDistribution::kNormal: {
      std::normal_distribution<double> normal;
      for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = normal(rng);
      break;
    }
    case VectorDistribution::kHeavyTailed: {
      std::student_t_distribution<double> student(3.0);
      for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = student(rng);
      break;
    }
    case VectorDistribution::kSparse: {
      std::normal_distribution<double> normal;
      bool any = false;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const bool keep = UniformUnit(rng) < 0.1;
        const double v = normal(rng);
        x[i] = keep ? v : 0.0;
        any = any || (keep && v != 0.0);
      }
      if (!any && d > 0) {
        std::uniform_int_distribution<std::size_t> pick(0, d - 1);
        x[static_cast<Eigen::Index>(pick(rng))] = 1.0 + std::abs(normal(rng));
      }
      break;
    }
  }
  return x;
}

bool IsRandomized(const OperatorSpec& spec) {
  return std::visit(
      Overloaded{
          [](const Identity&) { return false; },
          [](const Sign&) { return false; },
          [](const TopK&) { return false; },
          [](const RandK&) { return true; },
          [](const Qsgd&) { return true; },
          [](const StochasticLevels&) { return true; },
          [](const RotatedLevels&) { return true; },
          [](const Composed&) { return true; },
          [](const SignComp& p) {
            return std::holds_alternative<RandK>(p.sparsifier);
          },
          [](const Piecewise& p) {
            return std::any_of(p.segments.begin(), p.segments.end(),
                               [](const Segment& s) { return IsRandomized(s.op); });
          },
      },
      spec.kind);
}

CompressionReport EmpiricalCompressionCheck(const OperatorSpec& spec,
                                            std::size_t d,
                                            const CheckOptions& options,
                                            Rng& rng) {
  if (options.trials < 1) throw ParameterError("check: trials must be >= 1");
  Validate(spec, d);

  CompressionReport report;
  report.trials = options.trials;
  report.gamma_theoretical = TheoreticalGamma(spec, d);
  report.gamma_checked = GammaFloor(spec, d);
  if (const auto* c = std::get_if<Composed>(&spec.kind)) {
    report.beta = Beta(c->quantizer, SparsifierK(c->sparsifier));
  } else if (std::holds_alternative<Qsgd>(spec.kind) ||
             std::holds_alternative<StochasticLevels>(spec.kind) ||
             std::holds_alternative<RotatedLevels>(spec.kind)) {
    report.beta = Beta(spec, d);
  }

  // SignComp{TopK, m=1}: the bound depends on x through the selected values.
  const auto* sign_comp = std::get_if<SignComp>(&spec.kind);
  const bool data_dependent = sign_comp != nullptr &&
                              sign_comp->norm_order == 1 &&
                              std::holds_alternative<TopK>(sign_comp->sparsifier);

  const std::size_t draws =
      IsRandomized(spec) ? std::max<std::size_t>(2, options.draws_per_vector) : 1;
  report.draws_per_vector = draws;

  double sum_ratio = 0.0;
  double sum_sq_ratio = 0.0;
  double sum_bound = 0.0;
  double max_ratio = 0.0;
  double worst_z = -std::numeric_limits<double>::infinity();
  bool per_vector_ok = true;

  struct Estimate {
    double mean = 0.0;
    double se = 0.0;
  };
  auto estimate = [&](const Vector& x, std::size_t count) {
    const double norm_sq = x.squaredNorm();
    double mean = 0.0;
    double m2 = 0.0;
    for (std::size_t j = 0; j < count; ++j) {
      const Vector c = ApplyOperator(spec, x, rng).reconstruction;
      const double ratio = (x - c).squaredNorm() / norm_sq;
      const double delta = ratio - mean;
      mean += delta / static_cast<double>(j + 1);
      m2 += delta * (ratio - mean);
    }
    Estimate e;
    e.mean = mean;
    if (count > 1) {
      e.se = std::sqrt(m2 / static_cast<double>(count - 1) /
                       static_cast<double>(count));
    }
    return e;
  };

  for (std::size_t trial = 0; trial < options.trials; ++trial) {
    const Vector x = DrawVector(d, options.distribution, rng);
    const Estimate screen = estimate(x, draws);

    std::optional<double> gamma = report.gamma_checked;
    if (data_dependent) {
      const auto support = SelectTopK(x, SparsifierK(sign_comp->sparsifier));
      const double g = SignCompL1Gamma(x, support.size(), support);
      gamma = g;
      report.data_dependent_gamma_min =
          report.data_dependent_gamma_min
              ? std::min(*report.data_dependent_gamma_min, g)
              : g;
    }

    sum_ratio += screen.mean;
    sum_sq_ratio += screen.mean * screen.mean;
    max_ratio = std::max(max_ratio, screen.mean);
    if (!gamma) continue;
    const double bound = 1.0 - *gamma;
    sum_bound += bound;
    auto z_of = [&](const Estimate& e) {
      const double excess = e.mean - bound;
      if (excess <= 1e-12) return std::min(0.0, e.se > 0.0 ? excess / e.se : 0.0);
      return e.se > 0.0 ? excess / e.se : 1e300;
    };
    double z = z_of(screen);
    // Few draws can badly underestimate the spread when one coordinate
    // dominates; a failing vector gets a fresh, much larger sample.
    if (z > options.per_vector_z && draws > 1 && options.confirm_factor > 1) {
      ++report.confirmations;
      z = z_of(estimate(x, draws * options.confirm_factor));
    }
    if (z > options.per_vector_z) per_vector_ok = false;
    worst_z = std::max(worst_z, z);
  }

  const double n = static_cast<double>(options.trials);
  report.empirical_ratio = sum_ratio / n;
  report.max_ratio = max_ratio;
  const double var =
      options.trials > 1
          ? std::max(0.0, (sum_sq_ratio - n * report.empirical_ratio *
                                              report.empirical_ratio) /
                              (n - 1.0))
          : 0.0;
  report.standard_error = std::sqrt(var / n);
  report.worst_z = std::isfinite(worst_z) ? worst_z : 0.0;

  if (report.gamma_checked) {
    const double mean_bound = sum_bound / n;
    const double mean_ok = report.empirical_ratio <=
                           mean_bound + 1e-12 +
                               options.mean_z * report.standard_error;
    report.pass = per_vector_ok && mean_ok;
  } else {
    report.pass = false;
  }
  return report;
}

}  // namespace qsparse
