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

#include "pale/init.hpp"

#include <cmath>
#include <numbers>

namespace pale {

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <typename T>
Tensor<T> truncated_normal(Shape shape, double std, Rng& rng) {
  Tensor<T> out(std::move(shape));
  for (Index i = 0; i < out.numel(); ++i) {
    double z;
    do {
      // Box-Muller; only the cosine branch is used so each value costs two draws.
      const double u1 = 1.0 - uniform01(rng);
      const double u2 = uniform01(rng);
      z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    } while (std::abs(z) > 2.0);
    out[i] = static_cast<T>(z * std);
  }
  return out;
}

template Tensor<float> truncated_normal(Shape, double, Rng&);
template Tensor<double> truncated_normal(Shape, double, Rng&);

}  // namespace pale
