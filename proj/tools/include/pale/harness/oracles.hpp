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
#include <vector>

#include "pale/attention.hpp"
#include "pale/init.hpp"
#include "pale/partition.hpp"
#include "pale/tensor.hpp"

namespace pale::harness {

/// Group id of a line under the pale grouping rules, computed directly:
/// interlaced line i belongs to group i mod N, contiguous line i to i / s.
Index line_group(Index line, Index padded_extent, Index lines_per_group, bool interlaced);

/// Explicit query/key groups for `mode` on an (h, w) map, built token by
/// token from the grouping rules (no use of build_groups). Padded tokens
/// never appear; a group whose queries are all padding is dropped.
std::vector<OracleBranch> oracle_branches(AttentionMode mode, Index h, Index w, Index channels, int heads,
                                          const PartitionSpec& spec, int block_index = 0);

/// Tokens of one pale by set union of row group `row_group` and column
/// group `col_group`.
Index brute_force_pale_size(Index h, Index w, const PartitionSpec& spec, Index row_group, Index col_group);

template <typename T>
Tensor<T> uniform_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0);

}  // namespace pale::harness
