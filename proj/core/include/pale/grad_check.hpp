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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pale/autograd.hpp"

namespace pale {

struct GradCheckResult {
  double max_rel_error = 0.0;
  // Location of the worst coordinate: input number and flat element index.
  std::size_t worst_input = 0;
  Index worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  Index coordinates = 0;
};

/// Compares reverse-mode gradients of a scalar loss against central
/// differences. `loss` rebuilds the graph from the current values of
/// `inputs` (leaf Vars, perturbed in place) and must return one element.
///
/// Per coordinate: step = eps * max(1, |x_i|), error =
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckResult grad_check_inputs(const std::function<Var<double>()>& loss, std::span<Var<double>> inputs,
                                  double eps = 1e-6);

/// Checks df/dx for an op f applied to `x`; the output is reduced with fixed
/// random weights so every output coordinate contributes.
/// Returns the max relative error.
double grad_check(const std::function<Var<double>(const Var<double>&)>& f, const Tensor<double>& x,
                  double eps = 1e-6, std::uint64_t seed = 7);

/// grad_check over several leaf inputs of a tensor-valued `f`, reduced with
/// the same kind of fixed random weights.
GradCheckResult grad_check_outputs(const std::function<Var<double>()>& f, std::span<Var<double>> inputs,
                                   double eps = 1e-6, std::uint64_t seed = 7);

}  // namespace pale
