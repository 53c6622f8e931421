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

/// Outcome of one verification suite. `worst` is the suite's headline
/// number: largest difference, largest relative error, or mismatch count.
struct SuiteResult {
  std::string name;
  Index checks = 0;
  double worst = 0.0;
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  bool passed() const { return checks > 0 && failures.empty(); }
  /// Counts one check; records `what` as a failure when !ok.
  void expect(bool ok, const std::string& what);
};

/// Group structure for every h, w <= max_extent and s_r, s_c <= max_pale:
/// bijection, membership rule, constant interlace stride, pale token count
/// against a brute-force union, and axial == pale(1, 1).
SuiteResult run_partition_suite(Index max_extent = 32, Index max_pale = 8);

struct EquivOptions {
  std::vector<Index> extents{4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16};
  std::vector<Index> pales{1, 2, 4};
  std::vector<Index> channels{8, 16};
  std::vector<int> heads{2, 4};
  std::vector<AttentionMode> modes;  // empty = all
  Precision precision = Precision::kF32;
  double tolerance = 0.0;  // 0 = 1e-5 for f32, 1e-10 for f64
  std::uint64_t seed = 11;
};

/// Every fast attention path against oracle_attention, plus the whole-map
/// vanilla pale against global attention (<= 1e-6).
SuiteResult run_equiv_suite(const EquivOptions& options = {});

/// Outputs on valid tokens must not depend on how much padding surrounds
/// them. `policy` = kIgnore deliberately breaks key masking.
SuiteResult run_padding_suite(Precision precision = Precision::kF32, MaskPolicy policy = MaskPolicy::kApply,
                              double tolerance = 1e-6);

/// Central-difference checks of every primitive, every attention mode, a
/// full block and a small end-to-end model, in 64-bit.
SuiteResult run_gradcheck_suite(double tolerance = 1e-4);

/// Closed-form multiply-add counts against instrumented traces, plus
/// monotonicity and pale-vs-global dominance on a sampled grid.
SuiteResult run_flops_suite();

/// Multi-line human-readable summary.
std::string describe(const SuiteResult& result);

}  // namespace pale::harness
