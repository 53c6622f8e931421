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
#include <string>
#include <vector>

#include "pale/attention.hpp"
#include "pale/harness/config.hpp"

namespace pale::harness {

struct BenchShape {
  Index h = 14, w = 14, c = 64;
};

struct BenchOptions {
  std::vector<AttentionMode> modes;
  std::vector<BenchShape> shapes;
  PartitionSpec spec{7, 7, true};
  int heads = 2;
  int repeats = 5;
  std::uint64_t seed = 1;
  Precision precision = Precision::kF32;
};

struct BenchRow {
  AttentionMode mode = AttentionMode::kPaleParallel;
  BenchShape shape;
  PartitionSpec spec;  // as applied by the mode
  std::int64_t multiply_adds = 0;
  double median_ms = 0.0;
  std::vector<double> samples_ms;
};

inline constexpr const char* kBenchHeader = "mode,h,w,c,s_r,s_c,ma_count,median_ms";

/// Median of the values (mean of the middle two for even counts).
double median(std::vector<double> values);

/// Times one forward pass (batch 1) per repeat for every mode x shape.
/// Throws ConfigError on an empty mode or shape list.
std::vector<BenchRow> run_bench(const BenchOptions& options);

std::string bench_csv_line(const BenchRow& row);

}  // namespace pale::harness
