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

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pale/autograd.hpp"
#include "pale/init.hpp"
#include "pale/ops.hpp"
#include "pale/partition.hpp"

namespace pale {

enum class AttentionMode { kGlobal, kAxial, kCrossShaped, kPaleVanilla, kPaleSequential, kPaleParallel };

std::string_view mode_name(AttentionMode mode);
std::optional<AttentionMode> parse_mode(std::string_view name);
const std::vector<AttentionMode>& all_modes();

/// How Q, K and V are produced from the input map.
/// kSeparable: depthwise 3x3 then pointwise c x c (the pale blocks).
/// kLinear: pointwise c x c only (plain ViT-style global attention).
enum class QkvKind { kSeparable, kLinear };

template <typename T>
struct QkvProjection {
  Var<T> depthwise;  // (3, 3, 1, c); undefined for QkvKind::kLinear
  Var<T> pointwise;  // (c, c)
  Var<T> bias;       // (c)
};

/// Weights of one attention layer. In the channel-split modes output
/// channels [0, c/2) of each pointwise projection feed the row branch and
/// [c/2, c) the column branch, so the two branches own disjoint weights.
template <typename T>
struct AttentionParams {
  Index channels = 0;
  int heads = 0;
  QkvProjection<T> q, k, v;
  Var<T> proj_weight;  // (c, c)
  Var<T> proj_bias;    // (c)

  QkvKind kind() const { return q.depthwise.defined() ? QkvKind::kSeparable : QkvKind::kLinear; }
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

template <typename T>
AttentionParams<T> make_attention_params(Index channels, int heads, QkvKind kind, Rng& rng, double std = 0.02);

template <typename T>
struct Qkv {
  Var<T> q, k, v;
};

/// Q, K, V = pointwise(depthwise3x3(x)) + bias, each shaped like x.
/// Recorded under the "qkv" trace label.
template <typename T>
Qkv<T> qkv_separable(const Var<T>& x, const AttentionParams<T>& params);

/// Multi-head self-attention inside each group of (b, groups, n, d) tensors.
template <typename T>
Var<T> msa_group(const Var<T>& q, const Var<T>& k, const Var<T>& v, int heads, KeyMask mask = {});

/// Whether padded tokens are excluded as keys. kIgnore exists only to
/// demonstrate the masking contract by breaking it.
enum class MaskPolicy { kApply, kIgnore };

/// Optional validity over x's own (h, w) grid; null means every token is valid.
/// Maps whose extents are not multiples of the pale size are zero-padded
/// internally and cropped back.
template <typename T>
Var<T> ps_attention_parallel(const Var<T>& x, const PartitionSpec& spec, const AttentionParams<T>& params,
                             const AttentionMask* mask = nullptr, MaskPolicy policy = MaskPolicy::kApply);

/// Attention over whole pales: the query at (i, j) attends to the union of
/// its interlaced row group and column group, all channels and heads.
template <typename T>
Var<T> ps_attention_vanilla(const Var<T>& x, const PartitionSpec& spec, const AttentionParams<T>& params,
                            const AttentionMask* mask = nullptr, MaskPolicy policy = MaskPolicy::kApply);

/// Even block_index: row groups over all channels; odd: column groups.
template <typename T>
Var<T> ps_attention_sequential(const Var<T>& x, const PartitionSpec& spec, const AttentionParams<T>& params,
                               int block_index, const AttentionMask* mask = nullptr,
                               MaskPolicy policy = MaskPolicy::kApply);

/// One group holding every token.
template <typename T>
Var<T> global_attention(const Var<T>& x, const AttentionParams<T>& params, const AttentionMask* mask = nullptr,
                        MaskPolicy policy = MaskPolicy::kApply);

struct AttentionConfig {
  AttentionMode mode = AttentionMode::kPaleParallel;
  PartitionSpec spec{};
  MaskPolicy mask_policy = MaskPolicy::kApply;
};

/// The partition a mode actually uses: axial forces (1, 1), cross-shaped
/// forces contiguous stripes.
PartitionSpec effective_spec(AttentionMode mode, const PartitionSpec& spec);

template <typename T>
Var<T> attention_forward(const Var<T>& x, const AttentionConfig& config, const AttentionParams<T>& params,
                         int block_index = 0, const AttentionMask* mask = nullptr);

/// Explicit query/key token lists (flat row * w + col) for the oracle.
struct TokenGroup {
  std::vector<Index> queries;
  std::vector<Index> keys;
};

/// One channel slice attended with its own groups and heads.
struct OracleBranch {
  Index channel_begin = 0;
  Index channel_count = 0;
  int heads = 1;
  std::vector<TokenGroup> groups;
};

/// Reference implementation: direct-loop QKV convolution, per-group per-head
/// per-query attention with no batching or masking machinery, then the
/// output projection. Every token must be a query of exactly one group in
/// each branch, and branches must tile the channels.
template <typename T>
Tensor<T> oracle_attention(const Tensor<T>& x, const std::vector<OracleBranch>& branches,
                           const AttentionParams<T>& params);

}  // namespace pale
