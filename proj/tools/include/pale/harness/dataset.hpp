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
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pale/tensor.hpp"

namespace pale::harness {

/// Missing files, malformed manifests or payload/manifest mismatches.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetSpec {
  Index classes = 10;
  Index per_class = 40;
  Index size = 32;  // square images
  Index channels = 3;
  std::uint64_t seed = 1;
};

struct Sample {
  std::string file;
  int label = 0;
  Index h = 0, w = 0, c = 0;
  std::vector<float> pixels;  // (h, w, c) row-major
};

struct Dataset {
  std::vector<Sample> samples;
  Index classes = 0;

  /// Images [first, first + count) of `order` stacked as (count, h, w, c).
  template <typename T>
  Tensor<T> batch_images(const std::vector<std::size_t>& order, std::size_t first, std::size_t count) const;
  std::vector<int> batch_labels(const std::vector<std::size_t>& order, std::size_t first, std::size_t count) const;
};

/// Class k is a sinusoidal grating at angle k * pi / classes with random
/// frequency, phase and per-channel gain plus uniform noise. Sample n of
/// class k sits at index n * classes + k.
Dataset generate_dataset(const DatasetSpec& spec);

/// One raw little-endian f32 file per sample plus manifest.txt with lines
/// "file label h w c".
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

/// Deterministic split: sample n of each class is held out when
/// n % every == every - 1 (every = 0 holds nothing out).
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> holdout;
};
Split split_dataset(const Dataset& dataset, Index every);

}  // namespace pale::harness
