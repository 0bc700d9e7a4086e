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
#ifndef DPC_BACKBONE_HPP_
#define DPC_BACKBONE_HPP_

// Small seeded feature extractor: log2(output_stride) strided 3x3 conv + ReLU
// stages ending at `out_channels` channels.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "dpc/cell.hpp"
#include "dpc/errors.hpp"
#include "dpc/ops.hpp"
#include "dpc/search_space.hpp"

namespace dpc {

struct BackboneConfig {
  int in_channels = 3;
  int out_channels = 32;
  int output_stride = 4;
  std::uint64_t seed = 0;
};

template <class T>
struct BasicBackbone {
  BackboneConfig config;
  std::vector<int> strides;
  std::vector<ConvParams<T>> stages;
  bool frozen = true;

  std::string architecture() const {
    std::string s;
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const Shape w = stages[i].weight.shape();
      if (i) s += '|';
      s += "conv3x3s" + std::to_string(strides[i]) + "-" + std::to_string(w.c) +
           "-" + std::to_string(w.n) + "-relu";
    }
    return s;
  }

  // Hash of the seed and architecture string.
  std::string fingerprint() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(
                      "seed=" + std::to_string(config.seed) + ";" + architecture())));
    return buf;
  }

  std::vector<BasicTensor<T>> parameters() const {
    std::vector<BasicTensor<T>> ps;
    for (const auto& s : stages) {
      ps.push_back(s.weight);
      ps.push_back(s.bias);
    }
    return ps;
  }

  BasicTensor<T> forward(const BasicTensor<T>& images) const {
    if (images.shape().c != config.in_channels)
      throw ShapeError("backbone: input " + images.shape().str() + " needs " +
                       std::to_string(config.in_channels) + " channels");
    BasicTensor<T> x = images;
    for (std::size_t i = 0; i < stages.size(); ++i)
      x = relu(conv3x3(x, stages[i].weight, stages[i].bias, strides[i]));
    return x;
  }

  // Independent parameter copy whose weights receive gradients.
  BasicBackbone trainable_copy() const {
    BasicBackbone b = *this;
    b.frozen = false;
    for (auto& s : b.stages) {
      s.weight = s.weight.clone(true);
      s.bias = s.bias.clone(true);
    }
    return b;
  }

  int feature_size(int image_side) const {
    int s = image_side;
    for (int st : strides) s = (s - 1) / st + 1;
    return s;
  }
};

using Backbone = BasicBackbone<float>;

template <class T = float>
BasicBackbone<T> make_backbone(const BackboneConfig& cfg) {
  if (cfg.in_channels < 1) throw ConfigError("backbone.in_channels: must be >= 1");
  if (cfg.out_channels < 1) throw ConfigError("backbone.out_channels: must be >= 1");
  if (cfg.output_stride < 1 || (cfg.output_stride & (cfg.output_stride - 1)))
    throw ConfigError("backbone.output_stride: must be a power of two");
  int levels = 0;
  while ((1 << levels) < cfg.output_stride) ++levels;
  BasicBackbone<T> b;
  b.config = cfg;
  Rng rng(cfg.seed ^ 0xb0a7b0a7b0a7ull);
  const int n = std::max(levels, 1);
  int in = cfg.in_channels;
  for (int k = 0; k < n; ++k) {
    const int out = std::max(std::min(8, cfg.out_channels), cfg.out_channels >> (n - 1 - k));
    b.strides.push_back(levels == 0 ? 1 : 2);
    b.stages.push_back({init_weight<T>({out, in, 3, 3}, 9 * in, rng),
                        BasicTensor<T>({out, 1, 1, 1}, T(0), true)});
    in = out;
  }
  for (auto& s : b.stages) {
    s.weight.set_requires_grad(false);
    s.bias.set_requires_grad(false);
  }
  return b;
}

}  // namespace dpc

#endif  // DPC_BACKBONE_HPP_
