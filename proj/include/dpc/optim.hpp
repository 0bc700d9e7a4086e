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
#ifndef DPC_OPTIM_HPP_
#define DPC_OPTIM_HPP_

#include <span>
#include <vector>

#include "dpc/errors.hpp"
#include "dpc/tensor.hpp"

namespace dpc {

// Momentum buffers, one per parameter, created lazily on the first step.
template <class T>
struct SgdState {
  std::vector<std::vector<T>> velocity;
};

// v <- momentum * v + grad; p <- p - lr * v; then grads are zeroed.
template <class T>
void sgd_step(std::span<BasicTensor<T>> params, T lr, T momentum,
              SgdState<T>& state) {
  if (state.velocity.empty()) {
    state.velocity.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      state.velocity[i].assign(params[i].numel(), T(0));
  }
  if (state.velocity.size() != params.size())
    throw StateError("sgd_step: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad())
      throw StateError("sgd_step: parameter " + std::to_string(i) + " of shape " +
                       params[i].shape().str() + " has no gradient");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = params[i].grad();
    auto& v = state.velocity[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = momentum * v[j] + g[j];
      p[j] -= lr * v[j];
    }
    params[i].zero_grad();
  }
}

template <class T>
void sgd_step(std::vector<BasicTensor<T>>& params, T lr, T momentum,
              SgdState<T>& state) {
  sgd_step(std::span<BasicTensor<T>>(params), lr, momentum, state);
}

}  // namespace dpc

#endif  // DPC_OPTIM_HPP_
