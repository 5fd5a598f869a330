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

#include "qsparse/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

namespace qsparse {

namespace {

using nlohmann::json;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

json TomlToJson(const toml::node& node) {
  if (const auto* table = node.as_table()) {
    json out = json::object();
    for (const auto& [key, value] : *table) {
      out[std::string(key.str())] = TomlToJson(value);
    }
    return out;
  }
  if (const auto* array = node.as_array()) {
    json out = json::array();
    for (const auto& value : *array) out.push_back(TomlToJson(value));
    return out;
  }
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  if (const auto* v = node.as_string()) return v->get();
  // Dates and times are kept as their TOML spelling.
  std::ostringstream out;
  node.visit([&out](const auto& v) { out << v; });
  return out.str();
}

// Typed access to one table with unknown-key detection.
class Section {
 public:
  Section(const json* node, std::string name, std::vector<std::string>& problems)
      : node_(node), name_(std::move(name)), problems_(problems) {
    if (node_ && !node_->is_object()) {
      problems_.push_back("[" + name_ + "] must be a table");
      node_ = nullptr;
    }
  }

  bool present() const { return node_ != nullptr; }
  bool Has(const std::string& key) const {
    return node_ && node_->contains(key);
  }

  std::optional<std::int64_t> Int(const std::string& key) {
    const json* v = Find(key);
    if (!v) return std::nullopt;
    if (v->is_number_integer()) return v->get<std::int64_t>();
    if (v->is_number_float()) {
      const double d = v->get<double>();
      if (std::floor(d) == d) return static_cast<std::int64_t>(d);
    }
    Bad(key, "an integer");
    return std::nullopt;
  }

  std::optional<std::size_t> Count(const std::string& key) {
    auto v = Int(key);
    if (!v) return std::nullopt;
    if (*v < 0) {
      Bad(key, "a non-negative integer");
      return std::nullopt;
    }
    return static_cast<std::size_t>(*v);
  }

  std::optional<double> Real(const std::string& key) {
    const json* v = Find(key);
    if (!v) return std::nullopt;
    if (v->is_number()) return v->get<double>();
    Bad(key, "a number");
    return std::nullopt;
  }

  std::optional<bool> Bool(const std::string& key) {
    const json* v = Find(key);
    if (!v) return std::nullopt;
    if (v->is_boolean()) return v->get<bool>();
    Bad(key, "a boolean");
    return std::nullopt;
  }

  std::optional<std::string> String(const std::string& key) {
    const json* v = Find(key);
    if (!v) return std::nullopt;
    if (v->is_string()) return v->get<std::string>();
    Bad(key, "a string");
    return std::nullopt;
  }

  const json* Raw(const std::string& key) { return Find(key); }

  template <class T>
  T Require(std::optional<T> v, const std::string& key, T fallback) {
    if (!v) {
      if (node_ && !Has(key)) problems_.push_back(name_ + "." + key + " is required");
      return fallback;
    }
    return *v;
  }

  void Finish() {
    if (!node_) return;
    for (const auto& item : node_->items()) {
      if (!used_.count(item.key())) {
        problems_.push_back("unknown key " + name_ + "." + item.key());
      }
    }
  }

  const std::string& name() const { return name_; }
  std::vector<std::string>& problems() { return problems_; }

 private:
  const json* Find(const std::string& key) {
    used_.insert(key);
    if (!node_) return nullptr;
    auto it = node_->find(key);
    return it == node_->end() ? nullptr : &*it;
  }

  void Bad(const std::string& key, const char* what) {
    problems_.push_back(name_ + "." + key + " must be " + what);
  }

  const json* node_;
  std::string name_;
  std::vector<std::string>& problems_;
  std::set<std::string> used_;
};

std::optional<QuantizerSpec> QuantizerByName(const std::string& name, unsigned s) {
  if (name == "qsgd") return Qsgd{s};
  if (name == "stochastic_levels") return StochasticLevels{s};
  if (name == "rotated_levels") return RotatedLevels{s};
  return std::nullopt;
}

std::optional<SparsifierSpec> SparsifierByName(const std::string& name,
                                               std::size_t k) {
  if (name == "top_k") return TopK{k};
  if (name == "rand_k") return RandK{k};
  return std::nullopt;
}

OperatorSpec ReadOperator(const json* node, const std::string& where,
                          std::vector<std::string>& problems) {
  Section sec(node, where, problems);
  const std::string kind = sec.Require(sec.String("kind"), "kind", std::string());
  auto need_k = [&] { return sec.Require(sec.Count("k"), "k", std::size_t{1}); };
  auto need_s = [&] {
    return static_cast<unsigned>(sec.Require(sec.Count("s"), "s", std::size_t{2}));
  };
  OperatorSpec spec{Identity{}};
  if (kind == "identity") {
    spec.kind = Identity{};
  } else if (kind == "top_k") {
    spec.kind = TopK{need_k()};
  } else if (kind == "rand_k") {
    spec.kind = RandK{need_k()};
  } else if (kind == "qsgd") {
    spec.kind = Qsgd{need_s()};
  } else if (kind == "stochastic_levels") {
    spec.kind = StochasticLevels{need_s()};
  } else if (kind == "rotated_levels") {
    spec.kind = RotatedLevels{need_s()};
  } else if (kind == "sign") {
    spec.kind = Sign{};
  } else if (kind == "composed") {
    const std::string qname = sec.Require(sec.String("quantizer"), "quantizer", std::string("qsgd"));
    const std::string sname = sec.Require(sec.String("sparsifier"), "sparsifier", std::string("top_k"));
    const auto q = QuantizerByName(qname, need_s());
    const auto sp = SparsifierByName(sname, need_k());
    if (!q) problems.push_back(where + ".quantizer '" + qname + "' is not qsgd, stochastic_levels or rotated_levels");
    if (!sp) problems.push_back(where + ".sparsifier '" + sname + "' is not top_k or rand_k");
    Composed c{q.value_or(Qsgd{1}), sp.value_or(TopK{1}), sec.Bool("scaled").value_or(true)};
    spec.kind = c;
  } else if (kind == "sign_comp") {
    const std::string sname = sec.Require(sec.String("sparsifier"), "sparsifier", std::string("top_k"));
    const auto sp = SparsifierByName(sname, need_k());
    if (!sp) problems.push_back(where + ".sparsifier '" + sname + "' is not top_k or rand_k");
    const auto m = sec.Count("norm_order").value_or(1);
    spec.kind = SignComp{sp.value_or(TopK{1}), static_cast<unsigned>(m)};
  } else if (kind == "piecewise") {
    const json* segs = sec.Raw("segments");
    Piecewise p;
    if (!segs || !segs->is_array()) {
      problems.push_back(where + ".segments must be an array of tables");
    } else {
      for (std::size_t i = 0; i < segs->size(); ++i) {
        const json& seg = (*segs)[i];
        const std::string tag = where + ".segments[" + std::to_string(i) + "]";
        if (!seg.is_object()) {
          problems.push_back(tag + " must be a table");
          continue;
        }
        json inner = seg;
        std::size_t begin = 0, end = 0;
        if (inner.contains("begin") && inner["begin"].is_number_integer() &&
            inner["begin"].get<std::int64_t>() >= 0) {
          begin = inner["begin"].get<std::size_t>();
        } else {
          problems.push_back(tag + ".begin must be a non-negative integer");
        }
        if (inner.contains("end") && inner["end"].is_number_integer() &&
            inner["end"].get<std::int64_t>() >= 0) {
          end = inner["end"].get<std::size_t>();
        } else {
          problems.push_back(tag + ".end must be a non-negative integer");
        }
        inner.erase("begin");
        inner.erase("end");
        p.segments.push_back({begin, end, ReadOperator(&inner, tag, problems)});
      }
    }
    spec.kind = std::move(p);
  } else if (!kind.empty()) {
    problems.push_back(where + ".kind '" + kind + "' is unknown (identity, top_k, rand_k, qsgd, stochastic_levels, rotated_levels, sign, composed, sign_comp, piecewise)");
  }
  // Only keys read for this kind count as known.
  sec.Finish();
  return spec;
}

json SparsifierJson(const SparsifierSpec& sp) {
  return std::visit(Overloaded{
                        [](const TopK& v) { return json{{"sparsifier", "top_k"}, {"k", v.k}}; },
                        [](const RandK& v) { return json{{"sparsifier", "rand_k"}, {"k", v.k}}; },
                    },
                    sp);
}

std::size_t OperatorK(const OperatorSpec& op, std::size_t d) {
  return std::visit(
      Overloaded{
          [&](const TopK& p) { return p.k; },
          [&](const RandK& p) { return p.k; },
          [&](const Composed& p) {
            return std::visit([](const auto& v) { return v.k; }, p.sparsifier);
          },
          [&](const SignComp& p) {
            return std::visit([](const auto& v) { return v.k; }, p.sparsifier);
          },
          [&](const Piecewise& p) {
            std::size_t total = 0;
            for (const auto& seg : p.segments) {
              total += OperatorK(seg.op, seg.end - seg.begin);
            }
            return total;
          },
          [&](const auto&) { return d; },
      },
      op.kind);
}

json MatrixJson(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(row);
  }
  return out;
}

}  // namespace

json ParseConfigText(const std::string& text, bool as_json) {
  if (as_json) {
    try {
      return json::parse(text);
    } catch (const json::parse_error& e) {
      throw ValidationError({std::string("config: JSON parse error: ") + e.what()});
    }
  }
  try {
    return TomlToJson(toml::parse(text));
  } catch (const toml::parse_error& e) {
    std::ostringstream out;
    out << "config: TOML parse error at line " << e.source().begin.line
        << ": " << e.description();
    throw ValidationError({out.str()});
  }
}

json ParseConfigFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError({"config: cannot open '" + path.string() + "'"});
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseConfigText(buffer.str(), path.extension() == ".json");
}

json PresetDocument(const std::string& name) {
  if (name == "paper-convex") {
    return json{
        {"run", {{"R", 15}, {"T", 3000}, {"b", 8}, {"seed", 1}}},
        {"operator",
         {{"kind", "sign_comp"}, {"sparsifier", "top_k"}, {"k", 40}, {"norm_order", 1}}},
        {"schedule", {{"mode", "periodic"}, {"H", 8}}},
        {"lr", {{"kind", "experiment-convex"}, {"c", 0.01}}},
        {"objective", {{"kind", "softmax"}}},
        {"data",
         {{"source", "synthetic"},
          {"n", 2000},
          {"d_in", 20},
          {"classes", 10},
          {"margin", 3.0},
          {"shard", "iid-random"}}},
        {"output", {{"dir", "out/paper-convex"}, {"record_every", 10}}},
    };
  }
  throw ValidationError({"unknown preset '" + name + "' (available: paper-convex)"});
}

void ApplyOverride(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ValidationError({"override '" + assignment + "' must look like section.key=value"});
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  if (parts.size() < 2 || std::any_of(parts.begin(), parts.end(),
                                      [](const std::string& p) { return p.empty(); })) {
    throw ValidationError({"override '" + assignment + "' must name section.key"});
  }
  json value;
  try {
    const auto table = toml::parse("v = " + text);
    value = TomlToJson(*table.get("v"));
  } catch (const toml::parse_error&) {
    value = text;
  }
  json* node = &doc;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object()) {
      (*node)[parts[i]] = json::object();
    }
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = value;
}

OperatorSpec ParseOperator(const json& node) {
  std::vector<std::string> problems;
  OperatorSpec spec = ReadOperator(&node, "operator", problems);
  if (!problems.empty()) throw ValidationError(std::move(problems));
  return spec;
}

json OperatorToJson(const OperatorSpec& spec) {
  return std::visit(
      Overloaded{
          [](const Identity&) { return json{{"kind", "identity"}}; },
          [](const TopK& p) { return json{{"kind", "top_k"}, {"k", p.k}}; },
          [](const RandK& p) { return json{{"kind", "rand_k"}, {"k", p.k}}; },
          [](const Qsgd& p) { return json{{"kind", "qsgd"}, {"s", p.s}}; },
          [](const StochasticLevels& p) {
            return json{{"kind", "stochastic_levels"}, {"s", p.s}};
          },
          [](const RotatedLevels& p) {
            return json{{"kind", "rotated_levels"}, {"s", p.s}};
          },
          [](const Sign&) { return json{{"kind", "sign"}}; },
          [](const Composed& p) {
            json out = SparsifierJson(p.sparsifier);
            out["kind"] = "composed";
            std::visit(Overloaded{
                           [&](const Qsgd& q) { out["quantizer"] = "qsgd"; out["s"] = q.s; },
                           [&](const StochasticLevels& q) {
                             out["quantizer"] = "stochastic_levels";
                             out["s"] = q.s;
                           },
                           [&](const RotatedLevels& q) {
                             out["quantizer"] = "rotated_levels";
                             out["s"] = q.s;
                           },
                       },
                       p.quantizer);
            out["scaled"] = p.scaled;
            return out;
          },
          [](const SignComp& p) {
            json out = SparsifierJson(p.sparsifier);
            out["kind"] = "sign_comp";
            out["norm_order"] = p.norm_order;
            return out;
          },
          [](const Piecewise& p) {
            json segs = json::array();
            for (const auto& seg : p.segments) {
              json item = OperatorToJson(seg.op);
              item["begin"] = seg.begin;
              item["end"] = seg.end;
              segs.push_back(item);
            }
            return json{{"kind", "piecewise"}, {"segments", segs}};
          },
      },
      spec.kind);
}

LoadedConfig ResolveConfig(const json& doc) {
  std::vector<std::string> problems;
  if (!doc.is_object()) throw ValidationError({"config: top level must be a table"});
  static const std::set<std::string> kSections = {"run",       "operator", "schedule", "lr",
                                                   "objective", "data",     "output"};
  for (const auto& item : doc.items()) {
    if (!kSections.count(item.key())) problems.push_back("unknown section [" + item.key() + "]");
  }
  auto section_ptr = [&](const char* name, bool required) -> const json* {
    auto it = doc.find(name);
    if (it == doc.end()) {
      if (required) problems.push_back(std::string("missing section [") + name + "]");
      return nullptr;
    }
    return &*it;
  };

  LoadedConfig out;
  RunConfig& cfg = out.run;
  json& echo = out.resolved;

  // [run]
  Section run(section_ptr("run", true), "run", problems);
  cfg.R = run.Require(run.Count("R"), "R", std::size_t{1});
  cfg.T = run.Require(run.Count("T"), "T", std::size_t{1});
  cfg.b = run.Count("b").value_or(1);
  const auto seed_value = run.Int("seed").value_or(0);
  cfg.seed = static_cast<std::uint64_t>(seed_value);
  run.Finish();
  echo["run"] = {{"R", cfg.R}, {"T", cfg.T}, {"b", cfg.b}, {"seed", seed_value}};

  // [objective]
  Section obj(section_ptr("objective", true), "objective", problems);
  const std::string obj_kind = obj.Require(obj.String("kind"), "kind", std::string());
  json obj_echo = {{"kind", obj_kind}};
  std::shared_ptr<Dataset> data = std::make_shared<Dataset>();
  std::optional<double> quad_mu, quad_L;
  bool needs_data = false;
  std::size_t default_classes = 10;
  if (obj_kind == "quadratic") {
    Quadratic q;
    const json* A = obj.Raw("A");
    const json* c = obj.Raw("c");
    if (A || c) {
      try {
        if (!A || !c) throw std::runtime_error("both A and c are needed");
        const auto n = static_cast<Eigen::Index>(c->size());
        q.A.resize(n, n);
        q.c.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          q.c[i] = (*c)[static_cast<std::size_t>(i)].get<double>();
          const json& row = (*A)[static_cast<std::size_t>(i)];
          if (static_cast<Eigen::Index>(row.size()) != n) throw std::runtime_error("A must be square");
          for (Eigen::Index j = 0; j < n; ++j) q.A(i, j) = row[static_cast<std::size_t>(j)].get<double>();
        }
      } catch (const std::exception& e) {
        problems.push_back(std::string("objective: explicit A/c unusable: ") + e.what());
        q = Quadratic{Eigen::MatrixXd::Identity(1, 1), Vector::Zero(1)};
      }
      obj_echo["A"] = MatrixJson(q.A);
      obj_echo["c"] = MatrixJson(q.c);
      obj.Count("d");
      obj.Real("mu");
      obj.Real("L");
      obj.Int("seed");
    } else {
      const std::size_t d = obj.Require(obj.Count("d"), "d", std::size_t{1});
      const double mu = obj.Real("mu").value_or(1.0);
      const double L = obj.Real("L").value_or(10.0);
      const auto qseed = obj.Int("seed").value_or(seed_value);
      try {
        q = RandomQuadratic(std::max<std::size_t>(d, 1), mu, L, static_cast<std::uint64_t>(qseed));
        quad_mu = mu;
        quad_L = L;
      } catch (const Error& e) {
        problems.push_back(std::string("objective: ") + e.what());
        q = Quadratic{Eigen::MatrixXd::Identity(1, 1), Vector::Zero(1)};
      }
      obj_echo["d"] = d;
      obj_echo["mu"] = mu;
      obj_echo["L"] = L;
      obj_echo["seed"] = qseed;
    }
    if (!quad_mu && q.A.rows() > 0 && q.A.isApprox(q.A.transpose())) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q.A, Eigen::EigenvaluesOnly);
      quad_mu = eig.eigenvalues().minCoeff();
      quad_L = eig.eigenvalues().maxCoeff();
    }
    const double noise = obj.Real("noise").value_or(0.0);
    const std::size_t samples = obj.Count("samples").value_or(1000);
    obj_echo["noise"] = noise;
    obj_echo["samples"] = samples;
    if (noise < 0.0) problems.push_back("objective.noise must be >= 0");
    if (noise > 0.0) {
      try {
        *data = SyntheticQuadraticNoise(samples, static_cast<std::size_t>(q.c.size()), noise,
                                        static_cast<std::uint64_t>(obj_echo.value("seed", seed_value)));
      } catch (const Error& e) {
        problems.push_back(std::string("objective: ") + e.what());
      }
    }
    cfg.objective = std::move(q);
  } else if (obj_kind == "softmax") {
    Softmax s;
    s.lambda = obj.Real("lambda");
    s.num_classes = obj.Count("num_classes").value_or(0);
    cfg.objective = s;
    needs_data = true;
  } else if (obj_kind == "nonconvex-logistic") {
    cfg.objective = NonConvexLogistic{obj.Real("alpha").value_or(0.1)};
    obj_echo["alpha"] = std::get<NonConvexLogistic>(cfg.objective).alpha;
    needs_data = true;
    default_classes = 2;
  } else if (!obj_kind.empty()) {
    problems.push_back("objective.kind '" + obj_kind +
                       "' is unknown (quadratic, softmax, nonconvex-logistic)");
  }
  obj.Finish();

  // [data]
  Section dat(section_ptr("data", needs_data), "data", problems);
  const std::string source =
      dat.String("source").value_or(needs_data ? "synthetic" : "none");
  json data_echo = {{"source", source}};
  if (source == "synthetic") {
    const std::size_t n = dat.Count("n").value_or(2000);
    const std::size_t d_in = dat.Count("d_in").value_or(20);
    const std::size_t classes = dat.Count("classes").value_or(default_classes);
    const double margin = dat.Real("margin").value_or(3.0);
    const auto dseed = dat.Int("seed").value_or(seed_value);
    data_echo.update({{"n", n}, {"d_in", d_in}, {"classes", classes}, {"margin", margin}, {"seed", dseed}});
    if (!needs_data) {
      problems.push_back("data.source=synthetic only applies to softmax and nonconvex-logistic");
    } else {
      try {
        *data = SyntheticClassification(n, d_in, classes, margin, static_cast<std::uint64_t>(dseed));
      } catch (const Error& e) {
        problems.push_back(std::string("data: ") + e.what());
      }
    }
  } else if (source == "idx") {
    const std::string images = dat.Require(dat.String("images"), "images", std::string());
    const std::string labels = dat.Require(dat.String("labels"), "labels", std::string());
    data_echo.update({{"images", images}, {"labels", labels}});
    if (!images.empty() && !labels.empty()) {
      try {
        *data = LoadIdx(images, labels);
      } catch (const Error& e) {
        problems.push_back(std::string("data: ") + e.what());
      }
    }
  } else if (source != "none") {
    problems.push_back("data.source '" + source + "' is unknown (synthetic, idx, none)");
  } else if (needs_data) {
    problems.push_back("data.source=none but objective " + obj_kind + " needs data");
  }
  const std::string shard_name = dat.String("shard").value_or("iid-random");
  const auto shard_seed = dat.Int("shard_seed").value_or(seed_value);
  data_echo["shard"] = shard_name;
  data_echo["shard_seed"] = shard_seed;
  dat.Finish();
  if (auto* s = std::get_if<Softmax>(&cfg.objective)) {
    if (!s->lambda && data->n() > 0) s->lambda = 1.0 / static_cast<double>(data->n());
    obj_echo["lambda"] = s->lambda ? json(*s->lambda) : json(nullptr);
    obj_echo["num_classes"] = s->num_classes;
  }
  echo["objective"] = obj_echo;
  echo["data"] = data_echo;
  cfg.data = data;
  if (data->n() > 0 && cfg.R >= 1) {
    try {
      cfg.shards = Shard(*data, cfg.R, ParseShardMode(shard_name),
                         static_cast<std::uint64_t>(shard_seed));
    } catch (const Error& e) {
      problems.push_back(std::string("data: ") + e.what());
    }
  }

  std::size_t d = 0;
  try {
    d = ParamDim(cfg.objective, *data);
  } catch (const std::exception&) {
  }

  // [operator]
  const json* op_node = section_ptr("operator", true);
  if (op_node) {
    cfg.op = ReadOperator(op_node, "operator", problems);
  }
  echo["operator"] = OperatorToJson(cfg.op);

  // [schedule]
  Section sch(section_ptr("schedule", true), "schedule", problems);
  const std::string mode = sch.Require(sch.String("mode"), "mode", std::string("periodic"));
  const std::size_t H = sch.Count("H").value_or(mode == "explicit" ? cfg.T : 1);
  const auto sched_seed = sch.Int("seed").value_or(seed_value);
  const json* indices = sch.Raw("indices");
  json sched_echo = {{"mode", mode}, {"H", H}};
  if ((mode == "periodic" || mode == "random-async") && !sch.Has("H")) {
    problems.push_back("schedule.H is required");
  }
  try {
    if (mode == "periodic") {
      cfg.schedule = MakePeriodic(cfg.T, H, cfg.R);
    } else if (mode == "random-async") {
      Rng rng = MakeStream(static_cast<std::uint64_t>(sched_seed), 0, StreamPurpose::kSchedule);
      cfg.schedule = MakeRandomAsync(cfg.T, H, cfg.R, rng);
      sched_echo["seed"] = sched_seed;
      out.asynchronous = true;
    } else if (mode == "explicit") {
      std::vector<std::vector<std::size_t>> per_worker;
      if (!indices || !indices->is_array()) {
        problems.push_back("schedule.indices must be an array of index arrays");
      } else {
        per_worker = indices->get<std::vector<std::vector<std::size_t>>>();
      }
      if (per_worker.size() == 1 && cfg.R > 1) per_worker.assign(cfg.R, per_worker[0]);
      cfg.schedule = MakeExplicit(cfg.T, H, per_worker);
      sched_echo["indices"] = cfg.schedule.per_worker;
      out.asynchronous = !cfg.schedule.IsSynchronous();
    } else {
      problems.push_back("schedule.mode '" + mode + "' is unknown (periodic, random-async, explicit)");
    }
  } catch (const std::exception& e) {
    problems.push_back(e.what());
  }
  sch.Finish();
  echo["schedule"] = sched_echo;

  // [lr]
  Section lr(section_ptr("lr", true), "lr", problems);
  const std::string lr_kind = lr.Require(lr.String("kind"), "kind", std::string());
  json lr_echo = {{"kind", lr_kind}};
  const std::optional<double> gamma = d > 0 && ValidationProblems(cfg.op, d).empty()
                                          ? GammaFloor(cfg.op, d)
                                          : std::nullopt;
  auto smoothness = [&]() -> double {
    if (quad_L) return *quad_L;
    try {
      return EstimateConstants(cfg.objective, *data, {}, 1, cfg.seed).l_hat;
    } catch (const std::exception& e) {
      problems.push_back(std::string("lr: cannot estimate smoothness: ") + e.what());
      return 1.0;
    }
  };
  if (lr_kind == "fixed") {
    const double eta = lr.Require(lr.Real("eta"), "eta", 0.1);
    cfg.lr.kind = FixedRate{eta};
    lr_echo["eta"] = eta;
  } else if (lr_kind == "sqrt-horizon") {
    double c_hat = 0.0;
    if (auto v = lr.Real("c_hat")) {
      c_hat = *v;
    } else if (d > 0 && problems.empty()) {
      c_hat = 1.0 / (2.0 * smoothness());
    }
    lr_echo["c_hat"] = c_hat;
    cfg.lr.kind = FixedRate{c_hat / std::sqrt(static_cast<double>(std::max<std::size_t>(cfg.T, 1)))};
  } else if (lr_kind == "inverse-time") {
    const double xi = lr.Require(lr.Real("xi"), "xi", 1.0);
    const double a = lr.Require(lr.Real("a"), "a", 1.0);
    cfg.lr.kind = InverseTime{xi, a};
    lr_echo.update({{"xi", xi}, {"a", a}});
  } else if (lr_kind == "strongly-convex") {
    std::optional<double> mu = lr.Real("mu");
    if (!mu) {
      if (quad_mu) {
        mu = quad_mu;
      } else if (const auto* s = std::get_if<Softmax>(&cfg.objective); s && s->lambda) {
        mu = s->lambda;
      } else {
        problems.push_back("lr.mu is required for this objective");
        mu = 1.0;
      }
    }
    double a = 0.0;
    if (auto v = lr.Real("a")) {
      a = *v;
    } else if (gamma && problems.empty()) {
      const double kappa = smoothness() / *mu;
      a = std::max({4.0 * static_cast<double>(H) / *gamma, 32.0 * kappa,
                    static_cast<double>(H)}) + 1.0;
    }
    cfg.lr.kind = StronglyConvex{*mu, a};
    lr_echo.update({{"mu", *mu}, {"a", a}});
  } else if (lr_kind == "experiment-convex") {
    const double c = lr.Require(lr.Real("c"), "c", 1.0);
    std::optional<double> lambda = lr.Real("lambda");
    if (!lambda) {
      if (const auto* s = std::get_if<Softmax>(&cfg.objective); s && s->lambda) {
        lambda = s->lambda;
      } else {
        problems.push_back("lr.lambda is required unless the objective is softmax");
        lambda = 1.0;
      }
    }
    double a = 0.0;
    if (auto v = lr.Real("a")) {
      a = *v;
    } else if (d > 0) {
      a = static_cast<double>(d) * static_cast<double>(H) /
          static_cast<double>(std::max<std::size_t>(OperatorK(cfg.op, d), 1));
    }
    cfg.lr.kind = ExperimentConvex{c, *lambda, a};
    lr_echo.update({{"c", c}, {"lambda", *lambda}, {"a", a}});
  } else if (!lr_kind.empty()) {
    problems.push_back("lr.kind '" + lr_kind +
                       "' is unknown (fixed, sqrt-horizon, inverse-time, strongly-convex, "
                       "experiment-convex)");
  }
  lr.Finish();
  echo["lr"] = lr_echo;

  // [output]
  Section outp(section_ptr("output", false), "output", problems);
  out.output_dir = outp.String("dir").value_or("out");
  cfg.diagnostics.record_every = outp.Count("record_every").value_or(1);
  cfg.diagnostics.track_virtual = outp.Bool("track_virtual").value_or(true);
  cfg.diagnostics.full_grad_norm = outp.Bool("full_grad_norm").value_or(false);
  cfg.diagnostics.g_hat_sq = outp.Real("g_hat_sq");
  if (const json* t = outp.Raw("targets")) {
    if (t->is_array() && std::all_of(t->begin(), t->end(), [](const json& v) { return v.is_number(); })) {
      out.targets = t->get<std::vector<double>>();
    } else {
      problems.push_back("output.targets must be an array of numbers");
    }
  }
  outp.Finish();
  json out_echo = {{"dir", out.output_dir.string()},
                   {"record_every", cfg.diagnostics.record_every},
                   {"track_virtual", cfg.diagnostics.track_virtual},
                   {"full_grad_norm", cfg.diagnostics.full_grad_norm}};
  if (cfg.diagnostics.g_hat_sq) out_echo["g_hat_sq"] = *cfg.diagnostics.g_hat_sq;
  if (!out.targets.empty()) out_echo["targets"] = out.targets;
  echo["output"] = out_echo;

  // Cheap checks that do not need a consistent run, so they are reported
  // alongside section errors instead of after them.
  if (cfg.R < 1) problems.push_back("run.R must be >= 1");
  if (cfg.T < 1) problems.push_back("run.T must be >= 1");
  if (cfg.b < 1) problems.push_back("run.b must be >= 1");
  if (d > 0) {
    for (const auto& p : ValidationProblems(cfg.op, d)) problems.push_back("operator: " + p);
  }
  if (problems.empty()) {
    auto more = ConfigProblems(cfg);
    problems.insert(problems.end(), more.begin(), more.end());
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));
  return out;
}

}  // namespace qsparse
