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

#include "pale/autograd.hpp"

#include <unordered_set>

namespace pale {

namespace {
thread_local bool t_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_mode_enabled() { return t_grad_enabled; }

template <typename T>
void backward(const Var<T>& root, const Tensor<T>* seed) {
  if (!root.requires_grad()) return;

  // Iterative post-order DFS; reversed, it is a topological order from the root.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Tensor<T>& g = root.node()->ensure_grad();
  if (seed != nullptr) {
    if (seed->shape() != g.shape()) throw ShapeError("backward: seed shape mismatch");
    for (Index i = 0; i < g.numel(); ++i) g[i] += (*seed)[i];
  } else {
    for (Index i = 0; i < g.numel(); ++i) g[i] += T{1};
  }

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn && node->grad.numel() > 0) node->backward_fn(*node);
  }
}

template void backward<float>(const Var<float>&, const Tensor<float>*);
template void backward<double>(const Var<double>&, const Tensor<double>*);

}  // namespace pale
