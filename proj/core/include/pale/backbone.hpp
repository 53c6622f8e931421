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
#include <string_view>
#include <vector>

#include "pale/attention.hpp"
#include "pale/autograd.hpp"
#include "pale/init.hpp"

namespace pale {

inline constexpr int kStageCount = 4;

struct StageConfig {
  Index stride = 2;      // P_i, patch-merging reduction
  Index channels = 64;   // C_i
  Index pale_rows = 7;   // s_r (S_i)
  Index pale_cols = 7;   // s_c (S_i)
  int heads = 2;         // H_i
  Index mlp_ratio = 4;   // R_i
  int depth = 2;

  bool operator==(const StageConfig&) const = default;
};

struct VariantConfig {
  std::string name;
  std::array<StageConfig, kStageCount> stages{};
  Index in_channels = 3;
  Index num_classes = 1000;
  AttentionMode mode = AttentionMode::kPaleParallel;
  QkvKind qkv = QkvKind::kSeparable;
  double norm_eps = 1e-5;

  /// Throws ShapeError on inconsistent values.
  void validate() const;
  /// Product of the stage strides; the smallest accepted input extent.
  Index total_stride() const;
  bool operator==(const VariantConfig&) const = default;
};

/// "T", "S" or "B" (also "pale-t", ...): depths [2, 2, 16, 2], S_i = 7,
/// R_i = 4, P = [4, 2, 2, 2]. "tiny" is the desk-scale training model.
VariantConfig variant_config(std::string_view name, Index num_classes = 1000);

/// Patch-merging kernel for a stride: kernel 2P - 1, padding P - 1
/// (7/4/3 for P = 4, 3/2/1 for P = 2).
Conv2dOptions merge_conv_options(Index stride);
Index merge_kernel(Index stride);

template <typename T>
struct BlockParams {
  Var<T> cpe_weight;  // (3, 3, 1, C)
  Var<T> cpe_bias;    // (C)
  Var<T> norm1_gamma, norm1_beta;
  AttentionParams<T> attn;
  Var<T> norm2_gamma, norm2_beta;
  Var<T> fc1_weight, fc1_bias;  // (C, R C), (R C)
  Var<T> fc2_weight, fc2_bias;  // (R C, C), (C)

  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

/// Fresh block weights: truncated-normal matrices and kernels, zero
/// biases, unit norm scales.
template <typename T>
BlockParams<T> make_block_params(Index channels, int heads, Index mlp_ratio, QkvKind qkv, Rng& rng,
                                 double std = 0.02);

template <typename T>
struct StageParams {
  Var<T> merge_weight;  // (k, k, C_in, C)
  Var<T> merge_bias;
  Var<T> merge_gamma, merge_beta;
  std::vector<BlockParams<T>> blocks;
};

/// Residual depthwise 3x3 position encoding: x + dwconv(x).
template <typename T>
Var<T> cpe(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

/// Expand to R C, GELU, contract back to C.
template <typename T>
Var<T> mlp(const Var<T>& x, const BlockParams<T>& params);

/// x + CPE(x); then + attention(LN(.)); then + MLP(LN(.)).
template <typename T>
Var<T> pale_block(const Var<T>& x, const BlockParams<T>& params, const AttentionConfig& attention, int block_index,
                  double norm_eps = 1e-5);

/// Strided convolution followed by layer norm.
template <typename T>
Var<T> patch_merge(const Var<T>& x, const StageParams<T>& params, Index stride, double norm_eps = 1e-5);

template <typename T>
class Model {
 public:
  /// Truncated-normal (std 0.02) weights, zero biases, unit norm scales.
  static Model create(const VariantConfig& config, std::uint64_t seed);

  const VariantConfig& config() const { return config_; }

  /// images (b, h, w, in_channels) -> logits (b, num_classes).
  Var<T> forward(const Var<T>& images) const;
  /// Output of every stage (for shape checks and feature extraction).
  std::vector<Var<T>> stage_outputs(const Var<T>& images) const;

  NamedParams<T> named_parameters() const;
  Index parameter_count() const;
  void zero_grad();

  StageParams<T>& stage(int i) { return stages_.at(static_cast<std::size_t>(i)); }
  const StageParams<T>& stage(int i) const { return stages_.at(static_cast<std::size_t>(i)); }

 private:
  Var<T> run_stages(const Var<T>& images, std::vector<Var<T>>* outputs) const;

  VariantConfig config_;
  std::vector<StageParams<T>> stages_;
  Var<T> norm_gamma_, norm_beta_;
  Var<T> head_weight_, head_bias_;
};

/// Pale-T/S/B (or "tiny") with fresh weights; deterministic in `seed`.
Model<float> init_variant(std::string_view name, Index num_classes, std::uint64_t seed);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace pale
