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

#include "pale/partition.hpp"

#include <algorithm>
#include <sstream>

namespace pale {

namespace {
void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}
}  // namespace

std::vector<Index> IndexGroups::token_index(Index h, Index w) const {
  require((axis == Axis::kRow ? h : w) == extent, "token_index: extent does not match the groups");
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(h * w));
  for (const auto& lines : groups) {
    if (axis == Axis::kRow) {
      for (Index r : lines) {
        for (Index c = 0; c < w; ++c) out.push_back(r * w + c);
      }
    } else {
      for (Index r = 0; r < h; ++r) {
        for (Index c : lines) out.push_back(r * w + c);
      }
    }
  }
  return out;
}

IndexGroups build_groups(Index h, Index w, const PartitionSpec& spec, Axis axis) {
  const Index extent = axis == Axis::kRow ? h : w;
  const Index size = axis == Axis::kRow ? spec.rows : spec.cols;
  const char* name = axis == Axis::kRow ? "rows" : "columns";
  require(h >= 1 && w >= 1, "build_groups: extents must be positive");
  require(size >= 1, std::string("build_groups: pale ") + name + " must be >= 1");
  require(extent % size == 0, "build_groups: " + std::to_string(extent) + " " + name +
                                  " not divisible by pale size " + std::to_string(size) + "; pad first");
  IndexGroups out;
  out.axis = axis;
  out.extent = extent;
  out.lines_per_group = size;
  const Index n = extent / size;
  out.groups.assign(static_cast<std::size_t>(n), {});
  for (Index g = 0; g < n; ++g) {
    auto& lines = out.groups[static_cast<std::size_t>(g)];
    for (Index k = 0; k < size; ++k) lines.push_back(spec.interlaced ? g + k * n : g * size + k);
  }
  return out;
}

Index pale_token_count(Index h, Index w, Index s_r, Index s_c) {
  require(h >= 1 && w >= 1 && s_r >= 1 && s_c >= 1, "pale_token_count: extents must be positive");
  require(s_r <= h && s_c <= w && h % s_r == 0 && w % s_c == 0,
          "pale_token_count: extents must be divisible by the pale size");
  return s_r * w + s_c * h - s_r * s_c;
}

Index padded_extent(Index extent, Index step) {
  require(step >= 1 && extent >= 0, "padded_extent: invalid arguments");
  return (extent + step - 1) / step * step;
}

AttentionMask AttentionMask::all_valid(Index h, Index w) {
  return AttentionMask{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h * w), 1)};
}

AttentionMask AttentionMask::window(Index h, Index w, Index valid_h, Index valid_w) {
  AttentionMask m{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h * w), 0)};
  for (Index r = 0; r < std::min(h, valid_h); ++r) {
    for (Index c = 0; c < std::min(w, valid_w); ++c) m.valid[static_cast<std::size_t>(r * w + c)] = 1;
  }
  return m;
}

bool AttentionMask::is_all_valid() const {
  return std::all_of(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; });
}

Index AttentionMask::invalid_count() const {
  return static_cast<Index>(std::count(valid.begin(), valid.end(), std::uint8_t{0}));
}

std::vector<std::uint8_t> AttentionMask::select(const std::vector<Index>& token_index) const {
  std::vector<std::uint8_t> out;
  out.reserve(token_index.size());
  for (Index t : token_index) out.push_back(valid.at(static_cast<std::size_t>(t)));
  return out;
}

template <typename T>
PaddedMap<T> pad_to_extent(const Tensor<T>& x, Index H, Index W) {
  require(x.rank() == 4, "pad: input must be (b, h, w, c)");
  const Index b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  require(H >= h && W >= w, "pad: target extent smaller than input");
  PaddedMap<T> out;
  out.original_h = h;
  out.original_w = w;
  out.mask = AttentionMask::window(H, W, h, w);
  if (H == h && W == w) {
    out.tensor = x;
    return out;
  }
  out.tensor = Tensor<T>({b, H, W, c});
  for (Index n = 0; n < b; ++n) {
    for (Index i = 0; i < h; ++i) {
      std::copy_n(x.raw() + ((n * h + i) * w) * c, w * c, out.tensor.raw() + ((n * H + i) * W) * c);
    }
  }
  return out;
}

template <typename T>
PaddedMap<T> pad_to_divisible(const Tensor<T>& x, const PartitionSpec& spec) {
  require(x.rank() == 4, "pad_to_divisible: input must be (b, h, w, c)");
  require(spec.rows >= 1 && spec.cols >= 1, "pad_to_divisible: pale size must be >= 1");
  return pad_to_extent(x, padded_extent(x.dim(1), spec.rows), padded_extent(x.dim(2), spec.cols));
}

template <typename T>
Tensor<T> unpad(const Tensor<T>& x, Index h, Index w) {
  require(x.rank() == 4, "unpad: input must be (b, h, w, c)");
  const Index b = x.dim(0), H = x.dim(1), W = x.dim(2), c = x.dim(3);
  require(h <= H && w <= W, "unpad: window exceeds input");
  Tensor<T> out({b, h, w, c});
  for (Index n = 0; n < b; ++n) {
    for (Index i = 0; i < h; ++i) {
      std::copy_n(x.raw() + ((n * H + i) * W) * c, w * c, out.raw() + ((n * h + i) * w) * c);
    }
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> gather_groups(const Tensor<T>& x, const IndexGroups& groups) {
  require(x.rank() == 4, "gather_groups: input must be (b, h, w, c)");
  const Index b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const bool rows = groups.axis == Axis::kRow;
  require((rows ? h : w) == groups.extent, "gather_groups: groups built for a different extent");
  std::vector<Tensor<T>> out;
  for (const auto& lines : groups.groups) {
    for (Index l : lines) require(l >= 0 && l < groups.extent, "gather_groups: line index out of range");
    const Index n = static_cast<Index>(lines.size());
    Tensor<T> part(rows ? Shape{b, n, w, c} : Shape{b, h, n, c});
    for (Index bi = 0; bi < b; ++bi) {
      for (Index k = 0; k < n; ++k) {
        const Index line = lines[static_cast<std::size_t>(k)];
        if (rows) {
          std::copy_n(&x.at(bi, line, 0, 0), w * c, &part.at(bi, k, 0, 0));
        } else {
          for (Index r = 0; r < h; ++r) std::copy_n(&x.at(bi, r, line, 0), c, &part.at(bi, r, k, 0));
        }
      }
    }
    out.push_back(std::move(part));
  }
  return out;
}

template <typename T>
Tensor<T> scatter_groups(const std::vector<Tensor<T>>& parts, const IndexGroups& groups, Index h, Index w) {
  require(parts.size() == groups.groups.size(), "scatter_groups: part count mismatch");
  require(!parts.empty(), "scatter_groups: no parts");
  const bool rows = groups.axis == Axis::kRow;
  const Index b = parts[0].dim(0), c = parts[0].dim(3);
  Tensor<T> out({b, h, w, c});
  for (std::size_t g = 0; g < parts.size(); ++g) {
    const auto& lines = groups.groups[g];
    const auto& part = parts[g];
    const Index n = static_cast<Index>(lines.size());
    require(part.shape() == (rows ? Shape{b, n, w, c} : Shape{b, h, n, c}), "scatter_groups: part shape mismatch");
    for (Index bi = 0; bi < b; ++bi) {
      for (Index k = 0; k < n; ++k) {
        const Index line = lines[static_cast<std::size_t>(k)];
        require(line >= 0 && line < (rows ? h : w), "scatter_groups: line index out of range");
        if (rows) {
          std::copy_n(&part.at(bi, k, 0, 0), w * c, &out.at(bi, line, 0, 0));
        } else {
          for (Index r = 0; r < h; ++r) std::copy_n(&part.at(bi, r, k, 0), c, &out.at(bi, r, line, 0));
        }
      }
    }
  }
  return out;
}

std::string describe_groups(const IndexGroups& groups) {
  static constexpr char kDigits[] = "0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
  std::vector<Index> owner(static_cast<std::size_t>(groups.extent), -1);
  for (Index g = 0; g < groups.group_count(); ++g) {
    for (Index l : groups.groups[static_cast<std::size_t>(g)]) owner[static_cast<std::size_t>(l)] = g;
  }
  std::ostringstream os;
  for (Index g = 0; g < groups.group_count(); ++g) {
    os << "  group " << g << ": {";
    const auto& lines = groups.groups[static_cast<std::size_t>(g)];
    for (std::size_t k = 0; k < lines.size(); ++k) os << (k ? "," : "") << lines[k];
    os << "}\n";
  }
  os << "  owner:";
  for (Index o : owner) os << ' ' << (o >= 0 && o < 62 ? kDigits[o] : '?');
  os << '\n';
  return os.str();
}

template PaddedMap<float> pad_to_divisible(const Tensor<float>&, const PartitionSpec&);
template PaddedMap<double> pad_to_divisible(const Tensor<double>&, const PartitionSpec&);
template PaddedMap<float> pad_to_extent(const Tensor<float>&, Index, Index);
template PaddedMap<double> pad_to_extent(const Tensor<double>&, Index, Index);
template Tensor<float> unpad(const Tensor<float>&, Index, Index);
template Tensor<double> unpad(const Tensor<double>&, Index, Index);
template std::vector<Tensor<float>> gather_groups(const Tensor<float>&, const IndexGroups&);
template std::vector<Tensor<double>> gather_groups(const Tensor<double>&, const IndexGroups&);
template Tensor<float> scatter_groups(const std::vector<Tensor<float>>&, const IndexGroups&, Index, Index);
template Tensor<double> scatter_groups(const std::vector<Tensor<double>>&, const IndexGroups&, Index, Index);

}  // namespace pale
