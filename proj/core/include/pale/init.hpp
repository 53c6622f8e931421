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

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pale/autograd.hpp"
#include "pale/tensor.hpp"

namespace pale {

using Rng = std::mt19937_64;

/// Uniform in [0, 1) from the top 53 bits of one draw.
double uniform01(Rng& rng);

/// Normal(0, std) truncated to [-2 std, 2 std] by rejection.
template <typename T>
Tensor<T> truncated_normal(Shape shape, double std, Rng& rng);

/// Ordered (name, parameter) list; order defines checkpoint layout.
template <typename T>
using NamedParams = std::vector<std::pair<std::string, Var<T>>>;

template <typename T>
Var<T> parameter(Tensor<T> value) {
  return Var<T>::leaf(std::move(value), true);
}

}  // namespace pale
