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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pale/attention.hpp"
#include "pale/backbone.hpp"
#include "pale/flop_trace.hpp"

namespace pale {

/// Multiply-add counts of one attention layer, per image. `row`/`column`
/// hold the axis-wise group attention; `attention` holds whole-group
/// attention (global and vanilla modes).
struct FlopReport {
  std::int64_t qkv = 0;
  std::int64_t row = 0;
  std::int64_t column = 0;
  std::int64_t attention = 0;
  std::int64_t projection = 0;
  Index h = 0;  // extents the counts refer to (after padding)
  Index w = 0;

  std::int64_t total() const { return qkv + row + column + attention + projection; }
  bool operator==(const FlopReport&) const = default;
};

/// 3hwc^2 + 2c(hw)^2 + hwc^2 = 4hwc^2 + 2c(hw)^2 (linear Q/K/V).
FlopReport flops_global_attention(Index h, Index w, Index c);

/// 27hwc + 3hwc^2 (separable Q/K/V) + hw^2 c s_r + h^2 w c s_c + hwc^2
/// = 4hwc^2 + hwc(s_c h + s_r w + 27). Extents must be divisible.
FlopReport flops_pale_attention(Index h, Index w, Index c, Index s_r, Index s_c);

/// Count for any mode on an (h, w) map, using the same padded extents as
/// the implementation.
FlopReport flops_attention(AttentionMode mode, Index h, Index w, Index c, const PartitionSpec& spec, int block_index,
                           QkvKind qkv);

struct LayerFlops {
  std::string name;  // trace label path, e.g. "stage3/block7/attn"
  std::int64_t multiply_adds = 0;
  std::int64_t norm_ops = 0;         // layer-norm elements
  std::int64_t softmax_ops = 0;      // attention-score elements
  std::int64_t elementwise_ops = 0;  // activations, residual adds, pooling
};

struct ModelFlopReport {
  std::vector<LayerFlops> layers;

  std::int64_t multiply_adds() const;
  /// Both a multiply and an add counted: 2x multiply-adds.
  std::int64_t flops_doubled() const { return 2 * multiply_adds(); }
  /// LN, softmax and elementwise work; excluded from the closed forms.
  std::int64_t excluded_ops() const;
  /// Sum over layers whose name starts with `prefix`.
  std::int64_t multiply_adds_under(const std::string& prefix) const;
};

/// Per-image multiply-adds of a full forward pass at (h, w).
ModelFlopReport model_flops(const VariantConfig& config, Index h, Index w);

struct ParamCount {
  Index total = 0;
  Index biases = 0;      // every bias vector, Q/K/V biases included
  Index qkv_biases = 0;  // Q/K/V pointwise biases only
  Index norm = 0;        // layer-norm scales and shifts
  /// Stages 1..4 (merge + blocks), then the final norm and head.
  std::array<Index, kStageCount + 1> by_stage{};
};

ParamCount model_params(const VariantConfig& config);

struct TermCheck {
  std::string term;
  std::int64_t analytic = 0;
  std::int64_t measured = 0;
  bool match() const { return analytic == measured; }
};

struct TraceComparison {
  std::vector<TermCheck> terms;
  bool all_match() const;
  std::string describe() const;
};

/// Compares closed-form terms with the multiply-adds recorded while running
/// the matching forward pass over `batch` images.
TraceComparison verify_against_trace(const FlopReport& analytic, const FlopTrace& trace, std::int64_t batch = 1);

}  // namespace pale
