// Copyright 2026 The Pale Attention Authors.
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

#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "pale/tensor.hpp"

namespace pale {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  Tensor<T>& ensure_grad() {
    if (grad.numel() != value.numel() || grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

/// Handle to a node of the reverse-mode graph. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var leaf(Tensor<T> value, bool requires_grad = false) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Var(std::move(node));
  }

  bool defined() const noexcept { return node_ != nullptr; }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  Index dim(int axis) const { return node_->value.dim(axis); }

  bool has_grad() const { return node_ && node_->grad.numel() == node_->value.numel() && !node_->grad.empty(); }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() {
    if (node_) node_->grad = Tensor<T>();
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Disables graph construction on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

/// Creates the result node of an op. When no parent requires a gradient (or
/// grad mode is off) the node is a constant and `backward_fn` is dropped.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  bool any = false;
  if (grad_mode_enabled()) {
    for (const auto& p : parents) any = any || p.requires_grad();
  }
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(node));
}

/// Reverse sweep from `root`, seeded with `seed` (ones when omitted).
template <typename T>
void backward(const Var<T>& root, const Tensor<T>* seed = nullptr);

extern template void backward<float>(const Var<float>&, const Tensor<float>*);
extern template void backward<double>(const Var<double>&, const Tensor<double>*);

}  // namespace pale
