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

#include "pale/tensor.hpp"

namespace pale {

enum class Axis { kRow, kColumn };

/// Pale size and grouping style. Interlaced groups take every N-th row or
/// column; contiguous groups are stripes of adjacent rows or columns.
struct PartitionSpec {
  Index rows = 7;  // s_r
  Index cols = 7;  // s_c
  bool interlaced = true;

  bool operator==(const PartitionSpec&) const = default;
};

/// Row (or column) groups of a feature map. For interlaced grouping member k
/// of group g is line g + k * N, with N the group count; for contiguous
/// grouping it is line g * s + k.
struct IndexGroups {
  Axis axis = Axis::kRow;
  Index extent = 0;       // lines along the grouped axis (h or w)
  Index lines_per_group = 0;
  std::vector<std::vector<Index>> groups;

  Index group_count() const { return static_cast<Index>(groups.size()); }

  /// Flat token indices (row * w + col), group-major; within a group tokens
  /// are listed in row-major order.
  std::vector<Index> token_index(Index h, Index w) const;
};

/// Builds the groups along `axis`; the grouped extent must be divisible by
/// the matching pale dimension.
IndexGroups build_groups(Index h, Index w, const PartitionSpec& spec, Axis axis);

/// Tokens covered by one pale: s_r * w + s_c * h - s_r * s_c.
Index pale_token_count(Index h, Index w, Index s_r, Index s_c);

/// Next multiple of `step` at or above `extent`.
Index padded_extent(Index extent, Index step);

/// Per-token validity of an (h, w) grid; padded tokens are invalid.
struct AttentionMask {
  Index h = 0;
  Index w = 0;
  std::vector<std::uint8_t> valid;

  static AttentionMask all_valid(Index h, Index w);
  /// Valid iff row < valid_h and col < valid_w.
  static AttentionMask window(Index h, Index w, Index valid_h, Index valid_w);

  bool is_all_valid() const;
  Index invalid_count() const;
  /// Gathers validity along a token index list (for grouped keys).
  std::vector<std::uint8_t> select(const std::vector<Index>& token_index) const;
};

template <typename T>
struct PaddedMap {
  Tensor<T> tensor;
  AttentionMask mask;
  Index original_h = 0;
  Index original_w = 0;
};

/// Zero-pads bottom/right to the next multiples of (s_r, s_c).
template <typename T>
PaddedMap<T> pad_to_divisible(const Tensor<T>& x, const PartitionSpec& spec);

/// Zero-pads bottom/right to exactly (h, w).
template <typename T>
PaddedMap<T> pad_to_extent(const Tensor<T>& x, Index h, Index w);

/// Restores the original top-left window.
template <typename T>
Tensor<T> unpad(const Tensor<T>& x, Index h, Index w);

/// One tensor per group: row groups give (b, s_r, w, c), column groups
/// give (b, h, s_c, c), lines in group order.
template <typename T>
std::vector<Tensor<T>> gather_groups(const Tensor<T>& x, const IndexGroups& groups);

/// Inverse of gather_groups.
template <typename T>
Tensor<T> scatter_groups(const std::vector<Tensor<T>>& parts, const IndexGroups& groups, Index h, Index w);

/// Text grid of group membership (one digit/letter per line owner).
std::string describe_groups(const IndexGroups& groups);

}  // namespace pale
