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

#ifndef DPC_TESTS_OP_INSTANCES_HPP_
#define DPC_TESTS_OP_INSTANCES_HPP_

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dpc/dpc.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace optest {

using namespace dpc;
using testutil::random_tensor;

enum class OpKind {
  kConv1x1,
  kDepthwise,
  kSepConv,
  kConv3x3,
  kGridPool,
  kBilinear,
  kPyramidPool,
  kConcat,
  kRelu,
  kXent,
};

inline std::string op_name(OpKind k) {
  static const char* names[] = {"conv1x1",  "depthwise",   "sepconv", "conv3x3", "gridpool",
                                "bilinear", "pyramidpool", "concat",  "relu",    "xent"};
  return names[static_cast<int>(k)];
}

template <class T>
struct Instance {
  TensorFn<T> fn;
  std::vector<BasicTensor<T>> inputs;
  std::function<oracle::Array(const std::vector<oracle::Array>&)> reference;
};

// Random 4x4..8x8 instance of `kind`; input tensors first, parameters after.
template <class T>
Instance<T> make_instance(OpKind kind, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> side(4, 8), chans(1, 3), batch(1, 2);
  const int n = batch(rng), c = chans(rng), h = side(rng), w = side(rng);
  const Shape xs{n, c, h, w};
  auto pick = [&](auto& options) {
    return options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
  };
  static const std::vector<int> small_rates = {1, 1, 3, 3, 6};
  static const std::vector<int> grids = {1, 2, 4};
  Instance<T> inst;
  switch (kind) {
    case OpKind::kConv1x1: {
      const int co = chans(rng);
      inst.inputs = {random_tensor<T>(xs, rng), random_tensor<T>({co, c, 1, 1}, rng),
                     random_tensor<T>({co, 1, 1, 1}, rng)};
      inst.fn = [](const auto& in) { return conv1x1(in[0], in[1], in[2]); };
      inst.reference = [co](const auto& a) { return oracle::conv1x1(a[0], a[1].v, a[2].v, co); };
      break;
    }
    case OpKind::kDepthwise: {
      const int rh = pick(small_rates), rw = pick(small_rates);
      inst.inputs = {random_tensor<T>(xs, rng), random_tensor<T>({c, 1, 3, 3}, rng)};
      inst.fn = [rh, rw](const auto& in) { return depthwise_atrous3x3(in[0], in[1], rh, rw); };
      inst.reference = [rh, rw](const auto& a) { return oracle::depthwise(a[0], a[1].v, rh, rw); };
      break;
    }
    case OpKind::kSepConv: {
      const int rh = pick(small_rates), rw = pick(small_rates), co = chans(rng);
      inst.inputs = {random_tensor<T>(xs, rng), random_tensor<T>({c, 1, 3, 3}, rng),
                     random_tensor<T>({co, c, 1, 1}, rng), random_tensor<T>({co, 1, 1, 1}, rng)};
      inst.fn = [rh, rw](const auto& in) {
        return atrous_sep_conv3x3(in[0], rh, rw, ConvParams<T>{in[1], {}},
                                  ConvParams<T>{in[2], in[3]});
      };
      inst.reference = [rh, rw, co](const auto& a) {
        return oracle::conv1x1(oracle::depthwise(a[0], a[1].v, rh, rw), a[2].v, a[3].v, co);
      };
      break;
    }
    case OpKind::kConv3x3: {
      const int co = chans(rng), stride = std::uniform_int_distribution<int>(1, 2)(rng);
      inst.inputs = {random_tensor<T>(xs, rng), random_tensor<T>({co, c, 3, 3}, rng),
                     random_tensor<T>({co, 1, 1, 1}, rng)};
      inst.fn = [stride](const auto& in) { return conv3x3(in[0], in[1], in[2], stride); };
      inst.reference = [co, stride](const auto& a) {
        return oracle::conv3x3(a[0], a[1].v, a[2].v, co, stride);
      };
      break;
    }
    case OpKind::kGridPool: {
      const int gh = std::uniform_int_distribution<int>(1, h)(rng);
      const int gw = std::uniform_int_distribution<int>(1, w)(rng);
      inst.inputs = {random_tensor<T>(xs, rng)};
      inst.fn = [gh, gw](const auto& in) { return grid_avg_pool(in[0], gh, gw); };
      inst.reference = [gh, gw](const auto& a) { return oracle::grid_pool(a[0], gh, gw); };
      break;
    }
    case OpKind::kBilinear: {
      std::uniform_int_distribution<int> out_side(1, 9);
      const int oh = out_side(rng), ow = out_side(rng);
      inst.inputs = {random_tensor<T>(xs, rng)};
      inst.fn = [oh, ow](const auto& in) { return bilinear_resize(in[0], oh, ow); };
      inst.reference = [oh, ow](const auto& a) { return oracle::bilinear(a[0], oh, ow); };
      break;
    }
    case OpKind::kPyramidPool: {
      const int gh = pick(grids), gw = pick(grids), co = chans(rng);
      inst.inputs = {random_tensor<T>(xs, rng), random_tensor<T>({co, c, 1, 1}, rng),
                     random_tensor<T>({co, 1, 1, 1}, rng)};
      inst.fn = [gh, gw](const auto& in) {
        return avg_pyramid_pool(in[0], gh, gw, ConvParams<T>{in[1], in[2]});
      };
      inst.reference = [gh, gw, co](const auto& a) {
        return oracle::bilinear(oracle::conv1x1(oracle::grid_pool(a[0], gh, gw), a[1].v, a[2].v, co),
                                a[0].h, a[0].w);
      };
      break;
    }
    case OpKind::kConcat: {
      const int parts = std::uniform_int_distribution<int>(1, 3)(rng);
      for (int i = 0; i < parts; ++i) inst.inputs.push_back(random_tensor<T>({n, chans(rng), h, w}, rng));
      inst.fn = [](const auto& in) { return concat_channels(in); };
      inst.reference = [](const auto& a) { return oracle::concat(a); };
      break;
    }
    case OpKind::kRelu: {
      // Keep inputs away from the kink so finite differences are valid.
      BasicTensor<T> x = random_tensor<T>(xs, rng);
      for (auto& v : x.data()) v = v < 0 ? v - T(0.1) : v + T(0.1);
      inst.inputs = {x};
      inst.fn = [](const auto& in) { return relu(in[0]); };
      inst.reference = [](const auto& a) { return oracle::relu(a[0]); };
      break;
    }
    case OpKind::kXent: {
      const int k = std::uniform_int_distribution<int>(2, 4)(rng);
      LabelMap labels{n, h, w, {}};
      std::uniform_int_distribution<int> lab(0, k), coin(0, 5);
      for (std::size_t i = 0; i < labels.size(); ++i)
        labels.values.push_back(coin(rng) == 0 ? kIgnoreLabel : lab(rng) % k);
      inst.inputs = {random_tensor<T>({n, k, h, w}, rng, -2.0, 2.0)};
      inst.fn = [labels](const auto& in) { return softmax_xent_loss(in[0], labels); };
      inst.reference = [labels](const auto& a) {
        oracle::Array out(1, 1, 1, 1);
        out.v[0] = oracle::xent(a[0], labels.values, kIgnoreLabel);
        return out;
      };
      break;
    }
  }
  return inst;
}

inline const std::vector<OpKind> kAllOps = {OpKind::kConv1x1,  OpKind::kDepthwise, OpKind::kSepConv,
                                     OpKind::kConv3x3,  OpKind::kGridPool,  OpKind::kBilinear,
                                     OpKind::kPyramidPool, OpKind::kConcat, OpKind::kRelu,
                                     OpKind::kXent};

}  // namespace optest

#endif  // DPC_TESTS_OP_INSTANCES_HPP_
