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

#include "qsparse/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

namespace qsparse {

namespace {

constexpr std::uint32_t kImagesU8 = 0x00000803;
constexpr std::uint32_t kMatrixF64 = 0x00000E02;
constexpr std::uint32_t kImagesF64 = 0x00000E03;
constexpr std::uint32_t kLabelsU8 = 0x00000801;

std::string Hex(std::uint32_t v) {
  std::ostringstream out;
  out << "0x" << std::hex;
  out.width(8);
  out.fill('0');
  out << v;
  return out.str();
}

std::vector<unsigned char> ReadAll(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& bytes, std::string file)
      : bytes_(bytes), file_(std::move(file)) {}

  std::uint32_t U32(const char* field) {
    Need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_++];
    return v;
  }

  double F64(const char* field) {
    Need(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | bytes_[pos_++];
    return std::bit_cast<double>(v);
  }

  unsigned char U8(const char* field) {
    Need(1, field);
    return bytes_[pos_++];
  }

  void Need(std::size_t count, const char* field) const {
    if (bytes_.size() - pos_ < count) {
      throw FormatError(file_ + ": truncated while reading " + field);
    }
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<unsigned char>& bytes_;
  std::string file_;
  std::size_t pos_ = 0;
};

void PutU32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes, 4);
}

void PutF64(std::ostream& out, double value) {
  const auto v = std::bit_cast<std::uint64_t>(value);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>(v >> (56 - 8 * i));
  out.write(bytes, 8);
}

std::vector<std::vector<std::size_t>> SplitContiguous(
    const std::vector<std::size_t>& order, std::size_t R) {
  std::vector<std::vector<std::size_t>> out(R);
  const std::size_t n = order.size();
  const std::size_t base = n / R;
  const std::size_t extra = n % R;
  std::size_t cursor = 0;
  for (std::size_t r = 0; r < R; ++r) {
    const std::size_t size = base + (r < extra ? 1 : 0);
    out[r].assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                  order.begin() + static_cast<std::ptrdiff_t>(cursor + size));
    cursor += size;
  }
  return out;
}

}  // namespace

bool Dataset::operator==(const Dataset& other) const {
  return num_classes == other.num_classes && labels == other.labels &&
         features.rows() == other.features.rows() &&
         features.cols() == other.features.cols() && features == other.features;
}

Dataset LoadIdx(const std::filesystem::path& images,
                const std::filesystem::path& labels) {
  const auto image_bytes = ReadAll(images);
  ByteReader img(image_bytes, images.string());
  const std::uint32_t magic = img.U32("images magic");
  if (magic != kImagesU8 && magic != kImagesF64 && magic != kMatrixF64) {
    throw FormatError(images.string() + ": unexpected magic " + Hex(magic) +
                      " in images file (expected 0x00000803)");
  }
  const std::size_t count = img.U32("images count");
  std::size_t width = img.U32(magic == kMatrixF64 ? "columns" : "rows");
  if (magic != kMatrixF64) width *= img.U32("columns");
  const bool u8 = magic == kImagesU8;
  const std::size_t payload = count * width * (u8 ? 1 : 8);
  if (img.remaining() != payload) {
    std::ostringstream out;
    out << images.string() << ": pixel payload has " << img.remaining()
        << " bytes, header implies " << payload;
    throw FormatError(out.str());
  }

  const auto label_bytes = ReadAll(labels);
  ByteReader lab(label_bytes, labels.string());
  const std::uint32_t label_magic = lab.U32("labels magic");
  if (label_magic != kLabelsU8) {
    throw FormatError(labels.string() + ": unexpected magic " +
                      Hex(label_magic) + " in labels file (expected 0x00000801)");
  }
  const std::size_t label_count = lab.U32("labels count");
  if (label_count != count) {
    std::ostringstream out;
    out << "count mismatch: " << images.string() << " has " << count
        << " images, " << labels.string() << " has " << label_count
        << " labels";
    throw FormatError(out.str());
  }
  if (lab.remaining() != label_count) {
    std::ostringstream out;
    out << labels.string() << ": label payload has " << lab.remaining()
        << " bytes, header implies " << label_count;
    throw FormatError(out.str());
  }

  Dataset data;
  data.features.resize(static_cast<Eigen::Index>(count),
                       static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      const auto row = static_cast<Eigen::Index>(i);
      const auto col = static_cast<Eigen::Index>(j);
      data.features(row, col) =
          u8 ? img.U8("pixels") / 255.0 : img.F64("pixels");
    }
  }
  data.labels.resize(count);
  std::int32_t top = -1;
  for (auto& label : data.labels) {
    label = lab.U8("labels");
    top = std::max(top, label);
  }
  data.num_classes = static_cast<std::size_t>(top + 1);
  for (Eigen::Index i = 0; i < data.features.size(); ++i) {
    if (!std::isfinite(data.features.data()[i])) {
      throw DataError(images.string() + ": non-finite feature value");
    }
  }
  return data;
}

void WriteIdx(const Dataset& dataset, const std::filesystem::path& images,
              const std::filesystem::path& labels, IdxPixelType type) {
  for (auto label : dataset.labels) {
    if (label < 0 || label > 255) {
      throw ParameterError("write_idx: labels must fit in one byte");
    }
  }
  if (dataset.labels.size() != dataset.n()) {
    throw ParameterError("write_idx: label count differs from sample count");
  }
  {
    std::ofstream out(images, std::ios::binary);
    if (!out) throw Error("cannot write '" + images.string() + "'");
    const bool u8 = type == IdxPixelType::kUnsigned8;
    PutU32(out, u8 ? kImagesU8 : kImagesF64);
    PutU32(out, static_cast<std::uint32_t>(dataset.n()));
    PutU32(out, 1);
    PutU32(out, static_cast<std::uint32_t>(dataset.d_in()));
    for (Eigen::Index i = 0; i < dataset.features.rows(); ++i) {
      for (Eigen::Index j = 0; j < dataset.features.cols(); ++j) {
        const double v = dataset.features(i, j);
        if (u8) {
          if (!(v >= 0.0 && v <= 1.0)) {
            throw ParameterError("write_idx: u8 pixels need features in [0, 1]");
          }
          out.put(static_cast<char>(std::lround(v * 255.0)));
        } else {
          PutF64(out, v);
        }
      }
    }
    if (!out) throw Error("write failed for '" + images.string() + "'");
  }
  std::ofstream out(labels, std::ios::binary);
  if (!out) throw Error("cannot write '" + labels.string() + "'");
  PutU32(out, kLabelsU8);
  PutU32(out, static_cast<std::uint32_t>(dataset.labels.size()));
  for (auto label : dataset.labels) out.put(static_cast<char>(label));
  if (!out) throw Error("write failed for '" + labels.string() + "'");
}

Dataset SyntheticClassification(std::size_t n, std::size_t d_in,
                                std::size_t num_classes, double margin,
                                std::uint64_t seed) {
  if (num_classes < 2 || n < num_classes) {
    throw ParameterError("synthetic_classification: need n >= L >= 2");
  }
  if (d_in < num_classes) {
    throw ParameterError(
        "synthetic_classification: d_in must be >= L for equidistant means");
  }
  if (!(margin >= 0.0) || !std::isfinite(margin)) {
    throw ParameterError("synthetic_classification: margin must be >= 0");
  }
  Rng rng = MakeStream(seed, 0, StreamPurpose::kData);
  Dataset data;
  data.num_classes = num_classes;
  data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    data.labels[i] = static_cast<std::int32_t>(i % num_classes);
  }
  std::shuffle(data.labels.begin(), data.labels.end(), rng);
  data.features.resize(static_cast<Eigen::Index>(n),
                       static_cast<Eigen::Index>(d_in));
  std::normal_distribution<double> normal;
  const double offset = margin / std::sqrt(2.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < data.features.cols(); ++j) {
      data.features(row, j) = normal(rng);
    }
    data.features(row, data.labels[i]) += offset;
  }
  return data;
}

Dataset SyntheticQuadraticNoise(std::size_t n, std::size_t d, double scale,
                                std::uint64_t seed) {
  if (n < 1 || d < 1) {
    throw ParameterError("synthetic_quadratic_noise: need n >= 1 and d >= 1");
  }
  Rng rng = MakeStream(seed, 1, StreamPurpose::kData);
  std::normal_distribution<double> normal(0.0, scale);
  Dataset data;
  data.num_classes = 1;
  data.labels.assign(n, 0);
  data.features.resize(static_cast<Eigen::Index>(n),
                       static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.features.cols(); ++j) {
      data.features(i, j) = normal(rng);
    }
  }
  const Eigen::RowVectorXd mean = data.features.colwise().mean();
  data.features.rowwise() -= mean;
  return data;
}

std::string ToString(ShardMode mode) {
  switch (mode) {
    case ShardMode::kContiguous:
      return "contiguous";
    case ShardMode::kRoundRobin:
      return "round-robin";
    case ShardMode::kIidRandom:
      return "iid-random";
    case ShardMode::kLabelSorted:
      return "label-sorted";
  }
  return "iid-random";
}

ShardMode ParseShardMode(const std::string& name) {
  if (name == "contiguous") return ShardMode::kContiguous;
  if (name == "round-robin") return ShardMode::kRoundRobin;
  if (name == "iid-random") return ShardMode::kIidRandom;
  if (name == "label-sorted") return ShardMode::kLabelSorted;
  throw ParameterError("unknown shard mode '" + name +
                       "' (expected contiguous, round-robin, iid-random or "
                       "label-sorted)");
}

ShardPlan Shard(const Dataset& dataset, std::size_t R, ShardMode mode,
                std::uint64_t seed) {
  const std::size_t n = dataset.n();
  if (R < 1) throw ParameterError("shard: R must be >= 1");
  if (R > n) {
    throw ParameterError("shard: R=" + std::to_string(R) +
                         " exceeds the number of samples n=" +
                         std::to_string(n));
  }
  ShardPlan plan;
  plan.mode = mode;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  switch (mode) {
    case ShardMode::kContiguous:
      plan.assignment = SplitContiguous(order, R);
      break;
    case ShardMode::kRoundRobin:
      plan.assignment.resize(R);
      for (std::size_t i = 0; i < n; ++i) plan.assignment[i % R].push_back(i);
      break;
    case ShardMode::kIidRandom: {
      Rng rng = MakeStream(seed, 0, StreamPurpose::kShard);
      std::shuffle(order.begin(), order.end(), rng);
      plan.assignment = SplitContiguous(order, R);
      for (auto& shard : plan.assignment) std::sort(shard.begin(), shard.end());
      break;
    }
    case ShardMode::kLabelSorted:
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) {
                         return dataset.labels[a] < dataset.labels[b];
                       });
      plan.assignment = SplitContiguous(order, R);
      break;
  }
  return plan;
}

}  // namespace qsparse
