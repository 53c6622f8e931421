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

#include "pale/harness/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "pale/complexity.hpp"
#include "pale/harness/oracles.hpp"

namespace pale::harness {

namespace {

template <typename T>
BenchRow time_one(AttentionMode mode, const BenchShape& shape, const BenchOptions& o, Rng& rng) {
  const auto params = make_attention_params<T>(shape.c, o.heads, QkvKind::kSeparable, rng);
  const Var<T> x = constant(uniform_tensor<T>({1, shape.h, shape.w, shape.c}, rng));
  const AttentionConfig config{mode, o.spec, MaskPolicy::kApply};
  BenchRow row;
  row.mode = mode;
  row.shape = shape;
  row.spec = effective_spec(mode, o.spec);
  row.multiply_adds = flops_attention(mode, shape.h, shape.w, shape.c, o.spec, 0, QkvKind::kSeparable).total();
  NoGradGuard no_grad;
  for (int i = 0; i < o.repeats; ++i) {
    const auto start = std::chrono::steady_clock::now();
    const Var<T> y = attention_forward(x, config, params, 0);
    row.samples_ms.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  }
  row.median_ms = median(row.samples_ms);
  return row;
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<BenchRow> run_bench(const BenchOptions& options) {
  if (options.modes.empty()) throw ConfigError("bench: the mode list is empty");
  if (options.shapes.empty()) throw ConfigError("bench: the shape list is empty");
  if (options.repeats < 1) throw ConfigError("bench: repeats must be >= 1");
  Rng rng(options.seed);
  std::vector<BenchRow> rows;
  for (AttentionMode mode : options.modes) {
    for (const BenchShape& shape : options.shapes) {
      rows.push_back(options.precision == Precision::kF64 ? time_one<double>(mode, shape, options, rng)
                                                          : time_one<float>(mode, shape, options, rng));
    }
  }
  return rows;
}

std::string bench_csv_line(const BenchRow& row) {
  char ms[32];
  std::snprintf(ms, sizeof ms, "%.4f", row.median_ms);
  return std::string(mode_name(row.mode)) + "," + std::to_string(row.shape.h) + "," + std::to_string(row.shape.w) +
         "," + std::to_string(row.shape.c) + "," + std::to_string(row.spec.rows) + "," +
         std::to_string(row.spec.cols) + "," + std::to_string(row.multiply_adds) + "," + ms;
}

}  // namespace pale::harness
