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
#include <optional>
#include <string>
#include <vector>

#include "pale/backbone.hpp"

namespace pale::harness {

/// Published size of a named variant: parameters and FLOPs at 224 x 224.
struct VariantTarget {
  std::string name;
  double params = 0.0;
  double flops = 0.0;
};

inline constexpr double kParamTolerance = 0.05;
inline constexpr double kFlopTolerance = 0.10;

/// Targets for T, S and B; nullopt for anything else.
std::optional<VariantTarget> variant_target(const std::string& name);

struct StageAudit {
  std::string name;  // "stage1".."stage4", "head"
  Index params = 0;
  std::int64_t multiply_adds = 0;
  Index out_h = 0, out_w = 0, channels = 0;
};

struct AuditReport {
  std::string variant;
  Index h = 0, w = 0;
  Index params = 0;
  Index qkv_biases = 0;
  std::int64_t multiply_adds = 0;
  std::int64_t flops_doubled = 0;
  std::int64_t excluded_ops = 0;
  std::vector<StageAudit> stages;

  std::optional<VariantTarget> target;
  bool params_ok = true;
  bool flops_ok_ma = true;       // multiply-add convention
  bool flops_ok_doubled = true;  // 2 x multiply-add convention
  bool flops_ok() const { return flops_ok_ma || flops_ok_doubled; }
  bool passed() const { return params_ok && flops_ok(); }

  /// One JSON object per stage, then a summary object.
  std::vector<std::string> json_lines() const;
};

bool within(double value, double target, double tolerance);

/// Analytic audit; no weights are allocated.
AuditReport audit_variant(const VariantConfig& config, Index h, Index w);

}  // namespace pale::harness
