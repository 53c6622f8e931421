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
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pale {

using Index = std::int64_t;
using Shape = std::vector<Index>;

/// Thrown for malformed arguments: shape mismatches, bad extents, bad options.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_to_string(const Shape& shape);
Index shape_numel(const Shape& shape);

/// Dense row-major array of rank 1..4.
///
/// Feature maps use the (batch, height, width, channels) layout; matrices are
/// rank 2, affine vectors rank 1 and convolution kernels
/// (kernel_h, kernel_w, in_channels_per_group, out_channels).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  Index dim(int axis) const;
  Index numel() const noexcept { return static_cast<Index>(data_.size()); }
  bool empty() const noexcept { return data_.empty() && shape_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }

  T& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

  // Rank-4 (b, h, w, c) element access.
  T& at(Index b, Index h, Index w, Index c) { return data_[offset4(b, h, w, c)]; }
  const T& at(Index b, Index h, Index w, Index c) const { return data_[offset4(b, h, w, c)]; }

  // Rank-2 element access.
  T& at(Index r, Index c) { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }
  const T& at(Index r, Index c) const { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }

  void fill(T value);
  /// Same values under a new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (Index i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
    return out;
  }

  bool all_finite() const;
  bool operator==(const Tensor& other) const = default;

 private:
  std::size_t offset4(Index b, Index h, Index w, Index c) const {
    return static_cast<std::size_t>(((b * shape_[1] + h) * shape_[2] + w) * shape_[3] + c);
  }

  Shape shape_;
  std::vector<T> data_;
};

/// Largest absolute elementwise difference; shapes must match.
template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

/// Bitwise comparison of values and shape.
template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace pale
