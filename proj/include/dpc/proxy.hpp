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
#ifndef DPC_PROXY_HPP_
#define DPC_PROXY_HPP_

// Candidate training and mIOU evaluation.
//
// The proxy (train_candidate) trains a cell and head on cached backbone
// features; full training (train_full) runs the same loop with features
// computed live and gradients flowing into a trainable copy of the backbone.
// Both consume their generator identically: cell initialization first, then
// one batch draw per step.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "dpc/backbone.hpp"
#include "dpc/cell.hpp"
#include "dpc/dataset.hpp"
#include "dpc/errors.hpp"
#include "dpc/feature_cache.hpp"
#include "dpc/metrics.hpp"
#include "dpc/ops.hpp"
#include "dpc/optim.hpp"

namespace dpc {

struct TrainConfig {
  int steps = 300;
  int batch_size = 4;
  double base_lr = 0.01;
  double lr_power = 0.9;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  int filters = 32;
  int full_steps_multiplier = 4;
  double backbone_lr_scale = 1.0;  // train_full only
  int loss_probe_images = 0;       // > 0: record train loss before/after
  int eval_batch = 16;
};

inline void validate_config(const TrainConfig& tc) {
  if (tc.steps < 1) throw ConfigError("train.steps: must be >= 1");
  if (tc.batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
  if (!(tc.base_lr > 0.0)) throw ConfigError("train.base_lr: must be > 0");
  if (!(tc.lr_power >= 0.0)) throw ConfigError("train.lr_power: must be >= 0");
  if (!(tc.momentum >= 0.0 && tc.momentum < 1.0))
    throw ConfigError("train.momentum: must be in [0, 1)");
  if (tc.filters < 1) throw ConfigError("train.filters: must be >= 1");
  if (tc.full_steps_multiplier < 1)
    throw ConfigError("train.full_steps_multiplier: must be >= 1");
  if (tc.eval_batch < 1) throw ConfigError("train.eval_batch: must be >= 1");
}

// Polynomial decay base_lr * (1 - step/steps)^lr_power.
inline double poly_lr(int step, const TrainConfig& tc) {
  if (step < 0 || step > tc.steps)
    throw ArgumentError("poly_lr: step " + std::to_string(step) + " outside [0, " +
                        std::to_string(tc.steps) + "]");
  return tc.base_lr *
         std::pow(1.0 - static_cast<double>(step) / tc.steps, tc.lr_power);
}

inline TrainConfig full_train_config(TrainConfig tc) {
  tc.steps *= tc.full_steps_multiplier;
  return tc;
}

// Stacks per-image (1, C, h, w) tensors into one batch.
inline Tensor gather(const std::vector<Tensor>& items, std::span<const int> idx) {
  const Shape s = items.at(idx[0]).shape();
  Tensor out({static_cast<int>(idx.size()), s.c, s.h, s.w});
  const std::size_t len = s.numel();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Tensor& t = items.at(idx[i]);
    if (t.shape() != s) throw ShapeError("gather: mixed shapes in batch");
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + i * len);
  }
  return out;
}

inline LabelMap gather(const std::vector<LabelMap>& items, std::span<const int> idx) {
  const LabelMap& first = items.at(idx[0]);
  LabelMap out{static_cast<int>(idx.size()), first.h, first.w, {}};
  out.values.reserve(out.size());
  for (int i : idx) {
    const LabelMap& l = items.at(i);
    if (l.h != first.h || l.w != first.w) throw ShapeError("gather: mixed label sizes");
    out.values.insert(out.values.end(), l.values.begin(), l.values.end());
  }
  return out;
}

// Maps a batch of inputs to logits at label resolution.
using LogitsFn = std::function<Tensor(std::span<const int>)>;

// Accumulates the confusion matrix of `predict` over images `split`.
inline MiouResult evaluate_miou(const LogitsFn& predict,
                                const std::vector<LabelMap>& labels,
                                std::span<const int> split, int num_classes,
                                std::int32_t ignore_label = kIgnoreLabel,
                                int batch = 16) {
  ConfusionMatrix cm(num_classes, ignore_label);
  for (std::size_t start = 0; start < split.size(); start += batch) {
    const std::size_t len = std::min<std::size_t>(batch, split.size() - start);
    auto idx = split.subspan(start, len);
    Tensor logits = predict(idx);
    const LabelMap truth = gather(labels, idx);
    cm.add(truth.values, argmax_channels(logits));
  }
  return cm.result();
}

inline std::vector<int> index_range(int begin, int end) {
  std::vector<int> v;
  for (int i = begin; i < end; ++i) v.push_back(i);
  return v;
}

struct TrainResult {
  Cell cell;
  Backbone backbone;  // train_full only
  MiouResult eval;
  double miou = 0.0;
  std::vector<double> step_losses;
  double probe_loss_init = std::numeric_limits<double>::quiet_NaN();
  double probe_loss_final = std::numeric_limits<double>::quiet_NaN();
  std::int64_t wall_ms = 0;
};

namespace detail {

// Shared training loop. `features_of` returns the cell input for a batch of
// image indices; it may record onto the tape.
template <class FeaturesFn>
TrainResult train_loop(const Genotype& g, const TrainConfig& tc, int in_channels,
                       int num_classes, int num_images,
                       const std::vector<LabelMap>& labels, FeaturesFn&& features_of,
                       std::vector<Tensor> extra_params, double extra_lr_scale) {
  validate_config(tc);
  require_valid(g);
  const auto t0 = std::chrono::steady_clock::now();
  const int n_train = train_count(num_images);
  if (n_train < 1) throw DataError("training split is empty");
  Rng rng(tc.seed);
  TrainResult r;
  r.cell = compile<float>(g, in_channels, tc.filters, num_classes, rng);
  std::vector<Tensor> params = r.cell.parameters();
  SgdState<float> state, extra_state;
  const int H = labels.front().h, W = labels.front().w;

  auto logits_at_label_res = [&](std::span<const int> idx) {
    const CellOutput<float> out = forward(r.cell, features_of(idx));
    return bilinear_resize(out.logits, H, W);
  };
  std::vector<int> probe = index_range(0, std::min(tc.loss_probe_images, n_train));
  auto probe_loss = [&] {
    NoGradGuard guard;
    double sum = 0.0;
    for (int i : probe) {
      const int one[1] = {i};
      sum += softmax_xent_loss(logits_at_label_res(one), labels[i]).item();
    }
    return sum / static_cast<double>(probe.size());
  };
  if (!probe.empty()) r.probe_loss_init = probe_loss();

  std::uniform_int_distribution<int> pick(0, n_train - 1);
  std::vector<int> batch(tc.batch_size);
  r.step_losses.reserve(tc.steps);
  for (int step = 0; step < tc.steps; ++step) {
    for (int& b : batch) b = pick(rng);
    Tensor loss = softmax_xent_loss(logits_at_label_res(batch), gather(labels, batch));
    const double lv = loss.item();
    if (!std::isfinite(lv))
      throw NumericalError("non-finite training loss at step " + std::to_string(step));
    r.step_losses.push_back(lv);
    backward(loss);
    const float lr = static_cast<float>(poly_lr(step, tc));
    sgd_step(params, lr, static_cast<float>(tc.momentum), state);
    if (!extra_params.empty())
      sgd_step(extra_params, static_cast<float>(lr * extra_lr_scale),
               static_cast<float>(tc.momentum), extra_state);
  }
  if (!probe.empty()) r.probe_loss_final = probe_loss();

  const std::vector<int> val = index_range(n_train, num_images);
  r.eval = evaluate_miou(
      [&](std::span<const int> idx) {
        NoGradGuard guard;
        return logits_at_label_res(idx);
      },
      labels, val, num_classes, kIgnoreLabel, tc.eval_batch);
  r.miou = r.eval.miou;
  r.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                  std::chrono::steady_clock::now() - t0)
                  .count();
  return r;
}

}  // namespace detail

// Proxy evaluation: trains cell and head on cached features and returns the
// held-out mIOU.
inline TrainResult train_candidate(const Genotype& g, const FeatureCache& cache,
                                   const TrainConfig& tc) {
  if (cache.size() == 0) throw DataError("train_candidate: empty feature cache");
  return detail::train_loop(
      g, tc, cache.channels(), cache.num_classes, cache.size(), cache.labels,
      [&](std::span<const int> idx) { return gather(cache.features, idx); }, {}, 0.0);
}

// Full training: live backbone features, backbone fine-tuned at
// lr * backbone_lr_scale.
inline TrainResult train_full(const Genotype& g, const Dataset& dataset,
                              const Backbone& backbone, const TrainConfig& tc) {
  if (dataset.size() == 0) throw DataError("train_full: empty dataset");
  Backbone live = backbone.trainable_copy();
  std::vector<Tensor> images;
  std::vector<LabelMap> labels;
  images.reserve(dataset.size());
  labels.reserve(dataset.size());
  for (const Sample& s : dataset.samples) {
    images.push_back(s.image);
    labels.push_back(s.labels);
  }
  TrainResult r = detail::train_loop(
      g, tc, backbone.config.out_channels, dataset.num_classes(), dataset.size(), labels,
      [&](std::span<const int> idx) { return live.forward(gather(images, idx)); },
      live.parameters(), tc.backbone_lr_scale);
  r.backbone = live;
  return r;
}

}  // namespace dpc

#endif  // DPC_PROXY_HPP_
