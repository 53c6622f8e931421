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

#include "pale/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pale/ops.hpp"

namespace pale {

GradCheckResult grad_check_inputs(const std::function<Var<double>()>& loss, std::span<Var<double>> inputs,
                                  double eps) {
  for (auto& in : inputs) {
    if (!in.requires_grad()) throw ShapeError("grad_check: every input must require a gradient");
    in.zero_grad();
  }
  {
    Var<double> l = loss();
    if (l.value().numel() != 1) throw ShapeError("grad_check: loss must be a single element");
    backward(l);
  }
  std::vector<Tensor<double>> analytic;
  for (auto& in : inputs) analytic.push_back(in.has_grad() ? in.grad() : Tensor<double>(in.shape()));

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor<double>& values = inputs[k].mutable_value();
    for (Index i = 0; i < values.numel(); ++i) {
      const double original = values[i];
      const double step = eps * std::max(1.0, std::abs(original));
      const double up = original + step;
      const double down = original - step;
      values[i] = up;
      const double f_up = loss().value()[0];
      values[i] = down;
      const double f_down = loss().value()[0];
      values[i] = original;
      const double numeric = (f_up - f_down) / (up - down);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      ++result.coordinates;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_input = k;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

GradCheckResult grad_check_outputs(const std::function<Var<double>()>& f, std::span<Var<double>> inputs,
                                   double eps, std::uint64_t seed) {
  Tensor<double> weights;
  {
    NoGradGuard no_grad;
    const Tensor<double> probe = f().value();
    weights = Tensor<double>(probe.shape());
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (Index i = 0; i < weights.numel(); ++i) weights[i] = dist(rng);
  }
  return grad_check_inputs([&] { return weighted_sum(f(), weights); }, inputs, eps);
}

double grad_check(const std::function<Var<double>(const Var<double>&)>& f, const Tensor<double>& x, double eps,
                  std::uint64_t seed) {
  Var<double> inputs[1] = {Var<double>::leaf(x, true)};
  return grad_check_outputs([&] { return f(inputs[0]); }, inputs, eps, seed).max_rel_error;
}

}  // namespace pale
