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

#include "pale/harness/oracles.hpp"

#include <algorithm>
#include <set>

namespace pale::harness {

namespace {

Index ceil_to(Index extent, Index step) { return (extent + step - 1) / step * step; }

OracleBranch axis_branch(Axis axis, Index h, Index w, Index H, Index W, const PartitionSpec& spec,
                         Index channel_begin, Index channel_count, int heads) {
  const Index lines = axis == Axis::kRow ? H : W;
  const Index per = axis == Axis::kRow ? spec.rows : spec.cols;
  std::vector<TokenGroup> groups(static_cast<std::size_t>(lines / per));
  for (Index i = 0; i < h; ++i) {
    for (Index j = 0; j < w; ++j) {
      const Index line = axis == Axis::kRow ? i : j;
      auto& g = groups[static_cast<std::size_t>(line_group(line, lines, per, spec.interlaced))];
      g.queries.push_back(i * w + j);
      g.keys.push_back(i * w + j);
    }
  }
  std::erase_if(groups, [](const TokenGroup& g) { return g.queries.empty(); });
  return OracleBranch{channel_begin, channel_count, heads, std::move(groups)};
}

}  // namespace

Index line_group(Index line, Index padded_extent, Index lines_per_group, bool interlaced) {
  if (interlaced) return line % (padded_extent / lines_per_group);
  return line / lines_per_group;
}

std::vector<OracleBranch> oracle_branches(AttentionMode mode, Index h, Index w, Index channels, int heads,
                                          const PartitionSpec& spec, int block_index) {
  const PartitionSpec s = effective_spec(mode, spec);
  switch (mode) {
    case AttentionMode::kGlobal: {
      TokenGroup all;
      for (Index t = 0; t < h * w; ++t) {
        all.queries.push_back(t);
        all.keys.push_back(t);
      }
      return {OracleBranch{0, channels, heads, {all}}};
    }
    case AttentionMode::kAxial:
    case AttentionMode::kCrossShaped:
    case AttentionMode::kPaleParallel: {
      const Index H = ceil_to(h, s.rows), W = ceil_to(w, s.cols), half = channels / 2;
      return {axis_branch(Axis::kRow, h, w, H, W, s, 0, half, heads / 2),
              axis_branch(Axis::kColumn, h, w, H, W, s, half, half, heads / 2)};
    }
    case AttentionMode::kPaleSequential: {
      const bool rows = block_index % 2 == 0;
      const Index H = rows ? ceil_to(h, s.rows) : h, W = rows ? w : ceil_to(w, s.cols);
      return {axis_branch(rows ? Axis::kRow : Axis::kColumn, h, w, H, W, s, 0, channels, heads)};
    }
    case AttentionMode::kPaleVanilla: {
      const Index n = std::max((h + s.rows - 1) / s.rows, (w + s.cols - 1) / s.cols);
      const Index H = n * s.rows, W = n * s.cols;
      std::vector<TokenGroup> groups;
      for (Index a = 0; a < n; ++a) {
        for (Index b = 0; b < n; ++b) {
          TokenGroup g;
          for (Index i = 0; i < h; ++i) {
            for (Index j = 0; j < w; ++j) {
              const bool in_row = line_group(i, H, s.rows, s.interlaced) == a;
              const bool in_col = line_group(j, W, s.cols, s.interlaced) == b;
              if (in_row && in_col) g.queries.push_back(i * w + j);
              if (in_row || in_col) g.keys.push_back(i * w + j);
            }
          }
          if (!g.queries.empty()) groups.push_back(std::move(g));
        }
      }
      return {OracleBranch{0, channels, heads, std::move(groups)}};
    }
  }
  return {};
}

Index brute_force_pale_size(Index h, Index w, const PartitionSpec& spec, Index row_group, Index col_group) {
  std::set<Index> tokens;
  for (Index i = 0; i < h; ++i) {
    if (line_group(i, h, spec.rows, spec.interlaced) != row_group) continue;
    for (Index j = 0; j < w; ++j) tokens.insert(i * w + j);
  }
  for (Index j = 0; j < w; ++j) {
    if (line_group(j, w, spec.cols, spec.interlaced) != col_group) continue;
    for (Index i = 0; i < h; ++i) tokens.insert(i * w + j);
  }
  return static_cast<Index>(tokens.size());
}

template <typename T>
Tensor<T> uniform_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(lo + (hi - lo) * uniform01(rng));
  return t;
}

template Tensor<float> uniform_tensor<float>(const Shape&, Rng&, double, double);
template Tensor<double> uniform_tensor<double>(const Shape&, Rng&, double, double);

}  // namespace pale::harness
