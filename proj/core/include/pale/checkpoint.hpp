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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pale/backbone.hpp"
#include "pale/tensor.hpp"

namespace pale {

/// Malformed, truncated or incompatible checkpoint data.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// On-disk layout, all integers little-endian:
///   "PALE" | u32 version | u32 tensor count |
///   per tensor: u16 name length, UTF-8 name, u8 dtype, u8 rank,
///               u64 extent x rank, raw IEEE-754 payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

struct CheckpointEntry {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  std::vector<std::byte> payload;  // little-endian values

  Index numel() const { return shape_numel(shape); }
  template <typename T>
  Tensor<T> to_tensor() const;
  template <typename T>
  static CheckpointEntry from_tensor(std::string name, const Tensor<T>& tensor);
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::vector<CheckpointEntry> entries;

  Index value_count() const;
};

std::vector<std::byte> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::vector<std::byte>& bytes);

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

template <typename T>
Checkpoint checkpoint_from_model(const Model<T>& model);

/// Copies every tensor into the model; names, shapes and dtypes must match
/// exactly. The model is left untouched when validation fails.
template <typename T>
void load_into(Model<T>& model, const Checkpoint& checkpoint);

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path);

/// Builds a model for `config` and fills it from the file.
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, const VariantConfig& config);

}  // namespace pale
