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
#include <span>
#include <utility>
#include <vector>

#include "pale/autograd.hpp"
#include "pale/tensor.hpp"

namespace pale {

/// Differentiable primitives. Every op records its forward work into the
/// active FlopTrace (if any) and, when a parent requires a gradient, attaches
/// an analytic backward pass.

// Per-key validity; 1 = attend, 0 = masked. Empty span means all valid.
using KeyMask = std::span<const std::uint8_t>;

template <typename T>
Var<T> constant(Tensor<T> value) {
  return Var<T>::leaf(std::move(value), false);
}

/// (m, k) x (k, n) -> (m, n). Records m*n*k multiply-adds.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

/// Softmax over the last axis. `mask` (length = last extent) zeroes masked
/// positions exactly; a fully masked slice is rejected.
template <typename T>
Var<T> softmax_lastdim(const Var<T>& x, KeyMask mask = {});

/// Normalizes each last-axis slice: (x - mean) / sqrt(var + eps) * gamma + beta.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps = 1e-5);

struct Conv2dOptions {
  Index stride_h = 1;
  Index stride_w = 1;
  Index pad_h = 0;
  Index pad_w = 0;
  Index groups = 1;
};

/// NHWC convolution. `weight` is (kh, kw, cin / groups, cout); `bias` may be
/// undefined. Records out_positions * kh * kw * (cin / groups) * cout.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const Conv2dOptions& options);

/// Affine map over the last axis: x (..., cin) * weight (cin, cout) + bias.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

/// Exact erf-form GELU.
template <typename T>
Var<T> gelu(const Var<T>& x);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& x, T factor);

/// Elementwise square.
template <typename T>
Var<T> square(const Var<T>& x);

/// (b, h, w, c) -> (b, 1, 1, c).
template <typename T>
Var<T> mean_pool_spatial(const Var<T>& x);

/// Same values, new shape.
template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

/// Concatenates along the last axis.
template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts);

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Var<T> parts[2] = {a, b};
  return concat_channels<T>(std::span<const Var<T>>(parts, 2));
}

/// Splits the last axis into consecutive slices of the given widths.
template <typename T>
std::vector<Var<T>> split_channels(const Var<T>& x, std::span<const Index> widths);

/// Splits the last axis into two equal halves; an odd extent is rejected.
template <typename T>
std::pair<Var<T>, Var<T>> split_channels_half(const Var<T>& x);

/// Zero-pads the bottom and right of a (b, h, w, c) map.
template <typename T>
Var<T> pad_spatial(const Var<T>& x, Index pad_bottom, Index pad_right);

/// Keeps the top-left (h, w) window of a (b, H, W, c) map.
template <typename T>
Var<T> crop_spatial(const Var<T>& x, Index h, Index w);

/// Gathers tokens of a (b, h, w, c) map into (b, groups, n, c).
/// `token_index` holds groups * n flat spatial indices (row * w + col).
/// Indices may repeat; the backward pass accumulates.
template <typename T>
Var<T> gather_tokens(const Var<T>& x, std::span<const Index> token_index, Index groups);

/// Inverse of gather_tokens for an index list that is a permutation of all
/// h * w tokens: (b, groups, n, c) -> (b, h, w, c).
template <typename T>
Var<T> scatter_tokens(const Var<T>& y, std::span<const Index> token_index, Index h, Index w);

/// Grouped multi-head scaled dot-product attention.
/// q: (b, g, nq, d); k, v: (b, g, nk, d). `key_mask` is empty or has g * nk
/// entries shared across the batch. Per head: softmax(q k^T / sqrt(d / heads)) v.
/// Records 2 * b * g * nq * nk * d multiply-adds.
template <typename T>
Var<T> grouped_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, int heads, KeyMask key_mask = {});

/// Mean softmax cross-entropy of logits (n, classes) against labels.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels);

/// Sum of all elements, as a rank-1 tensor of one element.
template <typename T>
Var<T> sum(const Var<T>& x);

/// Sum of x * weights, elementwise, with constant weights of the same shape.
template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& weights);

}  // namespace pale
