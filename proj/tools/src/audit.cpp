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

#include "pale/harness/audit.hpp"

#include <cmath>

#include <json.hpp>

#include "pale/complexity.hpp"

namespace pale::harness {

std::optional<VariantTarget> variant_target(const std::string& name) {
  if (name == "T") return VariantTarget{"T", 22e6, 4.2e9};
  if (name == "S") return VariantTarget{"S", 48e6, 9.0e9};
  if (name == "B") return VariantTarget{"B", 85e6, 15.6e9};
  return std::nullopt;
}

bool within(double value, double target, double tolerance) {
  return std::abs(value - target) <= tolerance * target;
}

AuditReport audit_variant(const VariantConfig& config, Index h, Index w) {
  const ModelFlopReport flops = model_flops(config, h, w);
  const ParamCount params = model_params(config);
  AuditReport r;
  r.variant = config.name;
  r.h = h;
  r.w = w;
  r.params = params.total;
  r.qkv_biases = params.qkv_biases;
  r.multiply_adds = flops.multiply_adds();
  r.flops_doubled = flops.flops_doubled();
  r.excluded_ops = flops.excluded_ops();

  Index eh = h, ew = w;
  for (int i = 0; i < kStageCount; ++i) {
    const StageConfig& sc = config.stages[static_cast<std::size_t>(i)];
    const Conv2dOptions opt = merge_conv_options(sc.stride);
    const Index k = merge_kernel(sc.stride);
    eh = (eh + 2 * opt.pad_h - k) / sc.stride + 1;
    ew = (ew + 2 * opt.pad_w - k) / sc.stride + 1;
    const std::string name = "stage" + std::to_string(i + 1);
    r.stages.push_back(StageAudit{name, params.by_stage[static_cast<std::size_t>(i)],
                                  flops.multiply_adds_under(name + "/"), eh, ew, sc.channels});
  }
  r.stages.push_back(StageAudit{"head", params.by_stage[kStageCount], flops.multiply_adds_under("head"), 1, 1,
                                config.num_classes});

  // Targets apply to the stock configuration at 224 x 224.
  const auto target = variant_target(config.name);
  if (target && h == 224 && w == 224 && config == variant_config(config.name, 1000)) r.target = target;
  if (r.target) {
    r.params_ok = within(static_cast<double>(r.params), r.target->params, kParamTolerance);
    r.flops_ok_ma = within(static_cast<double>(r.multiply_adds), r.target->flops, kFlopTolerance);
    r.flops_ok_doubled = within(static_cast<double>(r.flops_doubled), r.target->flops, kFlopTolerance);
  }
  return r;
}

std::vector<std::string> AuditReport::json_lines() const {
  std::vector<std::string> lines;
  for (const StageAudit& s : stages) {
    nlohmann::ordered_json j;
    j["variant"] = variant;
    j["layer"] = s.name;
    j["out_h"] = s.out_h;
    j["out_w"] = s.out_w;
    j["channels"] = s.channels;
    j["params"] = s.params;
    j["multiply_adds"] = s.multiply_adds;
    j["flops_doubled"] = 2 * s.multiply_adds;
    lines.push_back(j.dump());
  }
  nlohmann::ordered_json j;
  j["variant"] = variant;
  j["layer"] = "total";
  j["input"] = std::to_string(h) + "x" + std::to_string(w);
  j["params"] = params;
  j["qkv_biases"] = qkv_biases;
  j["multiply_adds"] = multiply_adds;
  j["flops_doubled"] = flops_doubled;
  j["excluded_ops"] = excluded_ops;
  if (target) {
    j["target_params"] = target->params;
    j["target_flops"] = target->flops;
    j["params_status"] = params_ok ? "PASS" : "FAIL";
    j["flops_ma_status"] = flops_ok_ma ? "PASS" : "FAIL";
    j["flops_doubled_status"] = flops_ok_doubled ? "PASS" : "FAIL";
    j["status"] = passed() ? "PASS" : "FAIL";
  }
  lines.push_back(j.dump());
  return lines;
}

}  // namespace pale::harness
