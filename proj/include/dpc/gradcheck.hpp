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
#ifndef DPC_GRADCHECK_HPP_
#define DPC_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dpc/tensor.hpp"

namespace dpc {

template <class T>
using TensorFn =
    std::function<BasicTensor<T>(const std::vector<BasicTensor<T>>&)>;

// Compares the tape's vector-Jacobian product against central differences.
// A fixed random cotangent v turns the op into the scalar <v, f(x)>; the
// returned error is max|analytic - numeric| / max(max|analytic|, max|numeric|)
// over every element of every input.
template <class T>
double gradcheck(const TensorFn<T>& fn, std::vector<BasicTensor<T>> inputs,
                 double eps, unsigned seed = 7) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.clear_grad();
  }
  BasicTensor<T> out = fn(inputs);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<T> cot(out.numel());
  for (auto& c : cot) c = static_cast<T>(dist(rng));
  backward(out, std::span<const T>(cot));

  auto project = [&](const std::vector<BasicTensor<T>>& xs) {
    NoGradGuard guard;
    BasicTensor<T> y = fn(xs);
    double acc = 0.0;
    for (std::size_t i = 0; i < cot.size(); ++i)
      acc += static_cast<double>(cot[i]) * static_cast<double>(y.data()[i]);
    return acc;
  };

  double max_diff = 0.0, max_mag = 0.0;
  for (auto& in : inputs) {
    std::vector<T> analytic(in.numel(), T(0));
    if (in.has_grad()) analytic.assign(in.grad().begin(), in.grad().end());
    auto data = in.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const T saved = data[i];
      data[i] = static_cast<T>(saved + eps);
      const double up = project(inputs);
      data[i] = static_cast<T>(saved - eps);
      const double down = project(inputs);
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = static_cast<double>(analytic[i]);
      max_diff = std::max(max_diff, std::abs(a - numeric));
      max_mag = std::max({max_mag, std::abs(a), std::abs(numeric)});
    }
  }
  return max_mag > 0.0 ? max_diff / max_mag : max_diff;
}

}  // namespace dpc

#endif  // DPC_GRADCHECK_HPP_
