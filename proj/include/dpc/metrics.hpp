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
#ifndef DPC_METRICS_HPP_
#define DPC_METRICS_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dpc/errors.hpp"
#include "dpc/ops.hpp"

namespace dpc {

struct MiouResult {
  double miou = 0.0;
  // IOU per class; empty for classes that never occur in truth or prediction.
  std::vector<std::optional<double>> per_class_iou;
  // Row-major k x k, confusion[t * k + p] = pixels with truth t predicted p.
  std::vector<std::int64_t> confusion;
};

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes,
                           std::int32_t ignore_label = kIgnoreLabel)
      : k_(num_classes), ignore_(ignore_label) {
    if (num_classes < 2) throw ArgumentError("mIOU needs at least 2 classes");
    counts_.assign(static_cast<std::size_t>(k_) * k_, 0);
  }

  void add(std::span<const std::int32_t> truth,
           std::span<const std::int32_t> pred) {
    if (truth.size() != pred.size())
      throw ShapeError("confusion: truth and prediction sizes differ");
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const std::int32_t t = truth[i];
      if (t == ignore_) continue;
      const std::int32_t p = pred[i];
      if (t < 0 || t >= k_ || p < 0 || p >= k_)
        throw DataError("confusion: label outside [0, k)");
      ++counts_[static_cast<std::size_t>(t) * k_ + p];
    }
  }

  std::int64_t total() const {
    std::int64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
  }

  MiouResult result() const {
    MiouResult r;
    r.confusion = counts_;
    r.per_class_iou.resize(k_);
    double sum = 0.0;
    int used = 0;
    for (int c = 0; c < k_; ++c) {
      std::int64_t tp = at(c, c), fp = 0, fn = 0;
      for (int o = 0; o < k_; ++o) {
        if (o == c) continue;
        fp += at(o, c);
        fn += at(c, o);
      }
      const std::int64_t uni = tp + fp + fn;
      if (uni == 0) continue;
      const double iou = static_cast<double>(tp) / static_cast<double>(uni);
      r.per_class_iou[c] = iou;
      sum += iou;
      ++used;
    }
    r.miou = used ? sum / used : 0.0;
    return r;
  }

  int num_classes() const { return k_; }

 private:
  std::int64_t at(int t, int p) const {
    return counts_[static_cast<std::size_t>(t) * k_ + p];
  }

  int k_;
  std::int32_t ignore_;
  std::vector<std::int64_t> counts_;
};

// Per-pixel argmax over channels; ties go to the lower class index.
template <class T>
std::vector<std::int32_t> argmax_channels(const BasicTensor<T>& logits) {
  const Shape s = logits.shape();
  const std::size_t plane = s.plane();
  std::vector<std::int32_t> out(static_cast<std::size_t>(s.n) * plane, 0);
  const T* d = logits.data().data();
  for (int n = 0; n < s.n; ++n) {
    const T* base = d + static_cast<std::size_t>(n) * s.c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      T best = base[p];
      std::int32_t arg = 0;
      for (int c = 1; c < s.c; ++c)
        if (base[c * plane + p] > best) {
          best = base[c * plane + p];
          arg = c;
        }
      out[n * plane + p] = arg;
    }
  }
  return out;
}

}  // namespace dpc

#endif  // DPC_METRICS_HPP_
