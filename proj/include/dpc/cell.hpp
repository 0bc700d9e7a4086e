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
#ifndef DPC_CELL_HPP_
#define DPC_CELL_HPP_

// Compiles a Genotype into an executable Dense Prediction Cell and accounts
// for its cost.
//
// Every branch computes relu(op(input)) with `filters` output channels. The
// cell output is the channel concatenation of all branch outputs in branch
// order; a 1x1 classifier head maps it to per-class logits.
//
// Cost conventions (CostSummary): biases count as parameters but not as
// multiply-adds; a depthwise stage costs 9 madds per input element; a pool
// branch counts its projection at grid resolution plus 4 madds per resized
// output element; pooling additions are free. The classifier head is left out
// unless asked for.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dpc/errors.hpp"
#include "dpc/ops.hpp"
#include "dpc/search_space.hpp"
#include "dpc/tensor.hpp"

namespace dpc {

template <class T>
struct CompiledBranch {
  int input = 0;
  Operator op;
  int in_channels = 0;
  ConvParams<T> depthwise;  // atrous branches only
  ConvParams<T> conv;       // 1x1 conv, pointwise stage, or pool projection
};

template <class T>
struct ExecutableCell {
  Genotype genotype;
  int in_channels = 0;
  int filters = 0;
  int num_classes = 0;
  std::vector<CompiledBranch<T>> branches;
  ConvParams<T> head;

  // Trainable tensors in a fixed order: branches first, then the head.
  std::vector<BasicTensor<T>> parameters() const {
    std::vector<BasicTensor<T>> ps;
    for (const auto& b : branches) {
      if (b.depthwise.weight.defined()) ps.push_back(b.depthwise.weight);
      ps.push_back(b.conv.weight);
      ps.push_back(b.conv.bias);
    }
    ps.push_back(head.weight);
    ps.push_back(head.bias);
    return ps;
  }
};

using Cell = ExecutableCell<float>;

template <class T>
struct CellOutput {
  BasicTensor<T> concat;
  BasicTensor<T> logits;
};

// Fan-in scaled uniform weights, bound sqrt(6 / fan_in), zero bias.
template <class T>
BasicTensor<T> init_weight(Shape shape, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> v(shape.numel());
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return BasicTensor<T>::from_data(shape, std::move(v), true);
}

template <class T>
ConvParams<T> init_conv1x1(int c_in, int c_out, Rng& rng) {
  return {init_weight<T>({c_out, c_in, 1, 1}, c_in, rng),
          BasicTensor<T>({c_out, 1, 1, 1}, T(0), true)};
}

template <class T = float>
ExecutableCell<T> compile(const Genotype& g, int in_channels, int filters,
                          int num_classes, Rng& rng) {
  require_valid(g);
  if (in_channels < 1 || filters < 1 || num_classes < 1)
    throw ArgumentError("compile: channel counts must be >= 1");
  ExecutableCell<T> cell;
  cell.genotype = g;
  cell.in_channels = in_channels;
  cell.filters = filters;
  cell.num_classes = num_classes;
  for (const BranchSpec& spec : g.branches) {
    CompiledBranch<T> b;
    b.input = spec.input;
    b.op = spec.op;
    b.in_channels = spec.input == 0 ? in_channels : filters;
    if (std::holds_alternative<AtrousSepConv>(spec.op))
      b.depthwise.weight = init_weight<T>({b.in_channels, 1, 3, 3}, 9, rng);
    b.conv = init_conv1x1<T>(b.in_channels, filters, rng);
    cell.branches.push_back(std::move(b));
  }
  cell.head = init_conv1x1<T>(g.num_branches() * filters, num_classes, rng);
  return cell;
}

template <class T>
BasicTensor<T> apply_branch(const CompiledBranch<T>& b, const BasicTensor<T>& x) {
  struct Visitor {
    const CompiledBranch<T>& b;
    const BasicTensor<T>& x;
    BasicTensor<T> operator()(const Conv1x1&) const { return conv1x1(x, b.conv); }
    BasicTensor<T> operator()(const AtrousSepConv& a) const {
      return atrous_sep_conv3x3(x, a.rate_h, a.rate_w, b.depthwise, b.conv);
    }
    BasicTensor<T> operator()(const AvgPyramidPool& p) const {
      return avg_pyramid_pool(x, p.grid_h, p.grid_w, b.conv);
    }
  };
  return relu(std::visit(Visitor{b, x}, b.op));
}

template <class T>
CellOutput<T> forward(const ExecutableCell<T>& cell,
                      const BasicTensor<T>& features) {
  if (features.shape().c != cell.in_channels)
    throw ShapeError("cell forward: features " + features.shape().str() +
                     " but cell expects " + std::to_string(cell.in_channels) +
                     " channels");
  std::vector<BasicTensor<T>> outputs;
  outputs.reserve(cell.branches.size());
  for (const auto& b : cell.branches) {
    const BasicTensor<T>& in = b.input == 0 ? features : outputs.at(b.input - 1);
    outputs.push_back(apply_branch(b, in));
  }
  CellOutput<T> out;
  out.concat = outputs.size() == 1 ? outputs.front() : concat_channels(outputs);
  out.logits = conv1x1(out.concat, cell.head);
  return out;
}

struct CostSummary {
  std::int64_t params = 0;
  std::int64_t madds = 0;
};

inline std::int64_t branch_params(const Operator& op, std::int64_t c_in,
                                  std::int64_t c_out) {
  const std::int64_t conv = c_in * c_out + c_out;
  return std::holds_alternative<AtrousSepConv>(op) ? 9 * c_in + conv : conv;
}

inline std::int64_t branch_madds(const Operator& op, std::int64_t c_in,
                                 std::int64_t c_out, std::int64_t h,
                                 std::int64_t w) {
  if (std::holds_alternative<Conv1x1>(op)) return c_in * c_out * h * w;
  if (std::holds_alternative<AtrousSepConv>(op))
    return 9 * c_in * h * w + c_in * c_out * h * w;
  const auto& p = std::get<AvgPyramidPool>(op);
  return c_in * c_out * p.grid_h * p.grid_w + 4 * c_out * h * w;
}

// Cost of the context module for genotype `g`; pure in the genotype and dims.
inline CostSummary genotype_cost(const Genotype& g, int in_channels, int filters,
                                 int h, int w, int num_classes = 0) {
  CostSummary c;
  for (const BranchSpec& b : g.branches) {
    const std::int64_t cin = b.input == 0 ? in_channels : filters;
    c.params += branch_params(b.op, cin, filters);
    c.madds += branch_madds(b.op, cin, filters, h, w);
  }
  if (num_classes > 0) {
    const std::int64_t cin = static_cast<std::int64_t>(g.num_branches()) * filters;
    c.params += cin * num_classes + num_classes;
    c.madds += cin * num_classes * h * w;
  }
  return c;
}

template <class T>
std::int64_t count_params(const ExecutableCell<T>& cell, bool include_head = false) {
  return genotype_cost(cell.genotype, cell.in_channels, cell.filters, 1, 1,
                       include_head ? cell.num_classes : 0)
      .params;
}

template <class T>
std::int64_t count_madds(const ExecutableCell<T>& cell, int h, int w,
                         bool include_head = false) {
  return genotype_cost(cell.genotype, cell.in_channels, cell.filters, h, w,
                       include_head ? cell.num_classes : 0)
      .madds;
}

inline std::string cost_csv_header() {
  return "genotype_hash,in_channels,filters,h,w,params,madds";
}

inline std::string cost_csv_row(const Genotype& g, int in_channels, int filters,
                                int h, int w) {
  const CostSummary c = genotype_cost(g, in_channels, filters, h, w);
  return genotype_hash(g) + "," + std::to_string(in_channels) + "," +
         std::to_string(filters) + "," + std::to_string(h) + "," +
         std::to_string(w) + "," + std::to_string(c.params) + "," +
         std::to_string(c.madds);
}

}  // namespace dpc

#endif  // DPC_CELL_HPP_
