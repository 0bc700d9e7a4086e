/* Copyright 2026 The DPC Search Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef DPC_SEARCH_SPACE_HPP_
#define DPC_SEARCH_SPACE_HPP_

// Genotypes of the recursive Dense Prediction Cell search space.
//
// A cell has B branches. Branch i (1-based) reads either the backbone
// feature map (input 0) or the output of an earlier branch j < i, and applies
// one of 81 operators: a 1x1 conv, a 3x3 atrous separable conv with rate
// (rh, rw) drawn from kRates, or an average pyramid pool with grid (gh, gw)
// drawn from kGrids.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "dpc/errors.hpp"
#include "json.hpp"

namespace dpc {

using Rng = std::mt19937_64;

inline constexpr std::array<int, 8> kRates = {1, 3, 6, 9, 12, 15, 18, 21};
inline constexpr std::array<int, 4> kGrids = {1, 2, 4, 8};
inline constexpr int kNumOperators = 1 + 8 * 8 + 4 * 4;

struct Conv1x1 {
  friend bool operator==(const Conv1x1&, const Conv1x1&) = default;
};
struct AtrousSepConv {
  int rate_h = 1;
  int rate_w = 1;
  friend bool operator==(const AtrousSepConv&, const AtrousSepConv&) = default;
};
struct AvgPyramidPool {
  int grid_h = 1;
  int grid_w = 1;
  friend bool operator==(const AvgPyramidPool&, const AvgPyramidPool&) = default;
};

using Operator = std::variant<Conv1x1, AtrousSepConv, AvgPyramidPool>;

struct BranchSpec {
  int input = 0;  // 0 = backbone features; j >= 1 = output of branch j
  Operator op;
  friend bool operator==(const BranchSpec&, const BranchSpec&) = default;
};

struct Genotype {
  std::vector<BranchSpec> branches;
  int num_branches() const { return static_cast<int>(branches.size()); }
  friend bool operator==(const Genotype&, const Genotype&) = default;
};

struct SearchSpaceConfig {
  int num_branches = 5;
  int filters = 32;
};

inline int rate_index(int rate) {
  for (std::size_t i = 0; i < kRates.size(); ++i)
    if (kRates[i] == rate) return static_cast<int>(i);
  return -1;
}

inline int grid_index(int grid) {
  for (std::size_t i = 0; i < kGrids.size(); ++i)
    if (kGrids[i] == grid) return static_cast<int>(i);
  return -1;
}

inline bool is_legal_rate(int rate) { return rate_index(rate) >= 0; }
inline bool is_legal_grid(int grid) { return grid_index(grid) >= 0; }

// Canonical enumeration: 0 is Conv1x1, 1..64 are atrous rates row-major over
// (rate_h, rate_w), 65..80 are pool grids row-major over (grid_h, grid_w).
inline Operator operator_from_index(int idx) {
  if (idx < 0 || idx >= kNumOperators)
    throw RangeError("operator index " + std::to_string(idx) +
                     " outside [0, 80]");
  if (idx == 0) return Conv1x1{};
  if (idx <= 64) {
    const int k = idx - 1;
    return AtrousSepConv{kRates[k / 8], kRates[k % 8]};
  }
  const int k = idx - 65;
  return AvgPyramidPool{kGrids[k / 4], kGrids[k % 4]};
}

inline int operator_to_index(const Operator& op) {
  struct Visitor {
    int operator()(const Conv1x1&) const { return 0; }
    int operator()(const AtrousSepConv& a) const {
      const int h = rate_index(a.rate_h), w = rate_index(a.rate_w);
      if (h < 0 || w < 0)
        throw RangeError("illegal atrous rate " + std::to_string(a.rate_h) +
                         "x" + std::to_string(a.rate_w));
      return 1 + h * 8 + w;
    }
    int operator()(const AvgPyramidPool& p) const {
      const int h = grid_index(p.grid_h), w = grid_index(p.grid_w);
      if (h < 0 || w < 0)
        throw RangeError("illegal pool grid " + std::to_string(p.grid_h) +
                         "x" + std::to_string(p.grid_w));
      return 65 + h * 4 + w;
    }
  };
  return std::visit(Visitor{}, op);
}

inline std::string describe(const Operator& op) {
  struct Visitor {
    std::string operator()(const Conv1x1&) const { return "conv1x1"; }
    std::string operator()(const AtrousSepConv& a) const {
      return "atrous" + std::to_string(a.rate_h) + "x" +
             std::to_string(a.rate_w);
    }
    std::string operator()(const AvgPyramidPool& p) const {
      return "pool" + std::to_string(p.grid_h) + "x" +
             std::to_string(p.grid_w);
    }
  };
  return std::visit(Visitor{}, op);
}

// Exact B! * 81^B.
inline boost::multiprecision::cpp_int space_cardinality(int num_branches) {
  if (num_branches <= 0)
    throw ArgumentError("space_cardinality: B must be >= 1, got " +
                        std::to_string(num_branches));
  boost::multiprecision::cpp_int total = 1;
  for (int i = 1; i <= num_branches; ++i) total *= i * kNumOperators;
  return total;
}

struct Violation {
  int branch = 0;  // 1-based; 0 for genotype-level problems
  std::string message;
};

inline std::vector<Violation> validate(const Genotype& g,
                                       const SearchSpaceConfig& cfg) {
  std::vector<Violation> out;
  if (g.num_branches() != cfg.num_branches)
    out.push_back({0, "wrong branch count: expected " +
                          std::to_string(cfg.num_branches) + ", got " +
                          std::to_string(g.num_branches())});
  for (int i = 1; i <= g.num_branches(); ++i) {
    const BranchSpec& b = g.branches[i - 1];
    if (b.input < 0)
      out.push_back({i, "negative input index"});
    else if (b.input >= i)
      out.push_back({i, "input >= branch index"});
    if (const auto* a = std::get_if<AtrousSepConv>(&b.op)) {
      if (!is_legal_rate(a->rate_h) || !is_legal_rate(a->rate_w))
        out.push_back({i, "illegal atrous rate"});
    } else if (const auto* p = std::get_if<AvgPyramidPool>(&b.op)) {
      if (!is_legal_grid(p->grid_h) || !is_legal_grid(p->grid_w))
        out.push_back({i, "illegal pool grid"});
    }
  }
  return out;
}

// Validates against the genotype's own length.
inline std::vector<Violation> validate(const Genotype& g) {
  return validate(g, SearchSpaceConfig{g.num_branches(), 1});
}

inline std::string format_violations(const std::vector<Violation>& vs) {
  std::string s;
  for (const Violation& v : vs) {
    if (!s.empty()) s += "; ";
    s += v.branch == 0 ? v.message
                       : "branch " + std::to_string(v.branch) + ": " + v.message;
  }
  return s;
}

inline void require_valid(const Genotype& g, const SearchSpaceConfig& cfg) {
  if (auto vs = validate(g, cfg); !vs.empty())
    throw ValidationError("invalid genotype: " + format_violations(vs));
}

inline void require_valid(const Genotype& g) {
  if (g.branches.empty()) throw ValidationError("invalid genotype: no branches");
  if (auto vs = validate(g); !vs.empty())
    throw ValidationError("invalid genotype: " + format_violations(vs));
}

inline Genotype sample_uniform(Rng& rng, const SearchSpaceConfig& cfg) {
  if (cfg.num_branches < 1) throw ConfigError("num_branches must be >= 1");
  Genotype g;
  g.branches.reserve(cfg.num_branches);
  std::uniform_int_distribution<int> op_dist(0, kNumOperators - 1);
  for (int i = 1; i <= cfg.num_branches; ++i) {
    std::uniform_int_distribution<int> in_dist(0, i - 1);
    const int input = in_dist(rng);
    g.branches.push_back({input, operator_from_index(op_dist(rng))});
  }
  return g;
}

// Changes exactly one field (the input or the operator of one uniformly
// chosen branch) to a different legal value.
inline Genotype mutate(const Genotype& g, Rng& rng,
                       const SearchSpaceConfig& cfg) {
  require_valid(g, cfg);
  Genotype out = g;
  std::uniform_int_distribution<int> branch_dist(0, g.num_branches() - 1);
  const int b = branch_dist(rng);
  BranchSpec& spec = out.branches[b];
  // Branch b (0-based) has b + 1 possible inputs; with only one, the
  // operator is the sole mutable field.
  bool mutate_input = false;
  if (b > 0) mutate_input = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
  if (mutate_input) {
    int v = std::uniform_int_distribution<int>(0, b - 1)(rng);
    if (v >= spec.input) ++v;
    spec.input = v;
  } else {
    const int cur = operator_to_index(spec.op);
    int v = std::uniform_int_distribution<int>(0, kNumOperators - 2)(rng);
    if (v >= cur) ++v;
    spec.op = operator_from_index(v);
  }
  return out;
}

// Number of differing (input, operator) fields; genotypes of different
// lengths count missing branches as two differences each.
inline int field_distance(const Genotype& a, const Genotype& b) {
  const std::size_t n = std::max(a.branches.size(), b.branches.size());
  int d = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= a.branches.size() || i >= b.branches.size()) {
      d += 2;
      continue;
    }
    d += a.branches[i].input != b.branches[i].input;
    d += !(a.branches[i].op == b.branches[i].op);
  }
  return d;
}

inline const std::array<Operator, 5>& aspp_operators() {
  static const std::array<Operator, 5> ops = {
      Conv1x1{}, AtrousSepConv{6, 6}, AtrousSepConv{12, 12},
      AtrousSepConv{18, 18}, AvgPyramidPool{1, 1}};
  return ops;
}

// Parallel ASPP: 1x1 conv, three atrous convs at rates 6/12/18 and
// image-level pooling, all reading the backbone features.
inline Genotype aspp_genotype(const SearchSpaceConfig& cfg = {}) {
  if (cfg.num_branches != 5)
    throw ConfigError("aspp_genotype requires B = 5, got " +
                      std::to_string(cfg.num_branches));
  Genotype g;
  for (const Operator& op : aspp_operators()) g.branches.push_back({0, op});
  return g;
}

// One genotype per non-empty subset of the ASPP branches, ordered by subset
// bitmask (bit i selects ASPP branch i).
inline std::vector<Genotype> enumerate_aspp_subspace() {
  std::vector<Genotype> out;
  const auto& ops = aspp_operators();
  for (unsigned mask = 1; mask < (1u << ops.size()); ++mask) {
    Genotype g;
    for (std::size_t i = 0; i < ops.size(); ++i)
      if (mask & (1u << i)) g.branches.push_back({0, ops[i]});
    out.push_back(std::move(g));
  }
  return out;
}

// Canonical JSON text, keys in fixed order and no whitespace.
inline std::string encode(const Genotype& g) {
  struct Visitor {
    std::string operator()(const Conv1x1&) const {
      return R"({"kind":"conv1x1"})";
    }
    std::string operator()(const AtrousSepConv& a) const {
      return R"({"kind":"atrous","rh":)" + std::to_string(a.rate_h) +
             R"(,"rw":)" + std::to_string(a.rate_w) + "}";
    }
    std::string operator()(const AvgPyramidPool& p) const {
      return R"({"kind":"pool","gh":)" + std::to_string(p.grid_h) +
             R"(,"gw":)" + std::to_string(p.grid_w) + "}";
    }
  };
  std::string s = R"({"B":)" + std::to_string(g.num_branches()) +
                  R"(,"branches":[)";
  for (std::size_t i = 0; i < g.branches.size(); ++i) {
    if (i) s += ',';
    s += R"({"input":)" + std::to_string(g.branches[i].input) + R"(,"op":)" +
         std::visit(Visitor{}, g.branches[i].op) + "}";
  }
  s += "]}";
  return s;
}

namespace detail {

inline int json_int(const nlohmann::json& obj, const char* key,
                    const std::string& where) {
  if (!obj.is_object() || !obj.contains(key))
    throw ValidationError(where + ": missing key \"" + key + "\"");
  const auto& v = obj.at(key);
  if (!v.is_number_integer())
    throw ValidationError(where + ": key \"" + key + "\" must be an integer");
  return v.get<int>();
}

}  // namespace detail

inline Genotype genotype_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("genotype: expected an object");
  const int declared = detail::json_int(j, "B", "genotype");
  if (!j.contains("branches") || !j.at("branches").is_array())
    throw ValidationError("genotype: missing array \"branches\"");
  Genotype g;
  int idx = 0;
  for (const auto& b : j.at("branches")) {
    ++idx;
    const std::string where = "branch " + std::to_string(idx);
    BranchSpec spec;
    spec.input = detail::json_int(b, "input", where);
    if (!b.contains("op") || !b.at("op").is_object())
      throw ValidationError(where + ": missing object \"op\"");
    const auto& op = b.at("op");
    if (!op.contains("kind") || !op.at("kind").is_string())
      throw ValidationError(where + ": missing string \"kind\"");
    const std::string kind = op.at("kind").get<std::string>();
    if (kind == "conv1x1") {
      spec.op = Conv1x1{};
    } else if (kind == "atrous") {
      spec.op = AtrousSepConv{detail::json_int(op, "rh", where),
                              detail::json_int(op, "rw", where)};
    } else if (kind == "pool") {
      spec.op = AvgPyramidPool{detail::json_int(op, "gh", where),
                               detail::json_int(op, "gw", where)};
    } else {
      throw ValidationError(where + ": unknown operator kind \"" + kind + "\"");
    }
    g.branches.push_back(spec);
  }
  if (declared != g.num_branches())
    throw ValidationError("genotype: B = " + std::to_string(declared) +
                          " but " + std::to_string(g.num_branches()) +
                          " branches listed");
  require_valid(g);
  return g;
}

// Inverse of encode(); accepts any whitespace but validates every invariant.
inline Genotype decode(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("genotype: malformed JSON: ") + e.what(),
                     e.byte);
  }
  return genotype_from_json(j);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string genotype_hash(const Genotype& g) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(encode(g))));
  return buf;
}

inline std::string describe(const Genotype& g) {
  std::string s;
  for (int i = 0; i < g.num_branches(); ++i) {
    if (i) s += ' ';
    s += std::to_string(g.branches[i].input) + ":" +
         describe(g.branches[i].op);
  }
  return s;
}

}  // namespace dpc

#endif  // DPC_SEARCH_SPACE_HPP_
