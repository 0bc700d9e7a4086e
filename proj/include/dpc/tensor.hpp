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
#ifndef DPC_TENSOR_HPP_
#define DPC_TENSOR_HPP_

// Dense rank-4 (n, c, h, w) tensors with a reverse-mode tape.
//
// Every tensor is a shared handle to a Node. Ops whose inputs require
// gradients record their parents and a backward closure on the output node;
// backward() walks the recorded graph in reverse topological order and
// accumulates vector-Jacobian products into every requires_grad leaf.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dpc/errors.hpp"

namespace dpc {

struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

template <class T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

namespace detail {
inline thread_local int no_grad_depth = 0;
}

// While alive, ops on this thread record nothing and return constants.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_mode_enabled() { return detail::no_grad_depth == 0; }

template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T(0), bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    check_dims(shape);
    node_->shape = shape;
    node_->data.assign(shape.numel(), fill);
    node_->requires_grad = requires_grad;
  }

  static BasicTensor from_data(Shape shape, std::vector<T> data,
                               bool requires_grad = false) {
    check_dims(shape);
    if (data.size() != shape.numel())
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape.str());
    BasicTensor t;
    t.node_ = std::make_shared<Node<T>>();
    t.node_->shape = shape;
    t.node_->data = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  std::vector<T>& storage() { return node_->data; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() {
    if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }
  void clear_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  T& at(int n, int c, int h, int w) { return node_->data[offset(n, c, h, w)]; }
  T at(int n, int c, int h, int w) const {
    return node_->data[offset(n, c, h, w)];
  }
  T item() const {
    if (numel() != 1)
      throw ShapeError("item() on tensor of shape " + shape().str());
    return node_->data[0];
  }

  // Deep copy of the values; the copy is a fresh leaf.
  BasicTensor clone(bool requires_grad = false) const {
    return from_data(shape(), node_->data, requires_grad);
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  static void check_dims(const Shape& s) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1)
      throw ShapeError("tensor dims must be >= 1, got " + s.str());
  }
  std::size_t offset(int n, int c, int h, int w) const {
    const Shape& s = node_->shape;
    return ((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w;
  }

  std::shared_ptr<Node<T>> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Allocates an op output. When grad mode is on and any input requires a
// gradient, the output joins the tape with those inputs as parents.
template <class T>
BasicTensor<T> make_output(Shape shape,
                           std::initializer_list<const BasicTensor<T>*> inputs) {
  BasicTensor<T> out(shape);
  if (!grad_mode_enabled()) return out;
  for (const BasicTensor<T>* in : inputs) {
    if (in && in->defined() && in->requires_grad()) {
      out.set_requires_grad(true);
      out.node()->parents.push_back(in->node());
    }
  }
  return out;
}

template <class T>
BasicTensor<T> make_output(Shape shape,
                           const std::vector<BasicTensor<T>>& inputs) {
  BasicTensor<T> out(shape);
  if (!grad_mode_enabled()) return out;
  for (const BasicTensor<T>& in : inputs) {
    if (in.requires_grad()) {
      out.set_requires_grad(true);
      out.node()->parents.push_back(in.node());
    }
  }
  return out;
}

// Seeds the output gradient with `seed` (same length as root) and propagates.
// Leaf gradients accumulate; intermediate gradients are released afterwards.
template <class T>
void backward(BasicTensor<T>& root, std::span<const T> seed) {
  if (!root.requires_grad()) return;
  if (seed.size() != root.numel())
    throw ShapeError("backward seed length does not match root shape " +
                     root.shape().str());
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  // Iterative post-order DFS.
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  auto& g = root.node()->ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  for (Node<T>* node : order)
    if (!node->is_leaf()) node->grad.clear();
}

template <class T>
void backward(BasicTensor<T>& loss) {
  if (loss.numel() != 1)
    throw ShapeError("backward(loss) needs a scalar, got " +
                     loss.shape().str());
  const T one = T(1);
  backward(loss, std::span<const T>(&one, 1));
}

template <class To, class From>
BasicTensor<To> cast(const BasicTensor<From>& x, bool requires_grad = false) {
  std::vector<To> data(x.data().begin(), x.data().end());
  return BasicTensor<To>::from_data(x.shape(), std::move(data), requires_grad);
}

}  // namespace dpc

#endif  // DPC_TENSOR_HPP_
