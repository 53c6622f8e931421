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

#include "pale/harness/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "pale/init.hpp"

namespace pale::harness {

namespace {

std::string sample_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%05zu.f32", i);
  return buf;
}

}  // namespace

template <typename T>
Tensor<T> Dataset::batch_images(const std::vector<std::size_t>& order, std::size_t first, std::size_t count) const {
  if (count == 0 || first + count > order.size()) throw DatasetError("batch out of range");
  const Sample& s0 = samples.at(order[first]);
  Tensor<T> out({static_cast<Index>(count), s0.h, s0.w, s0.c});
  const std::size_t stride = s0.pixels.size();
  for (std::size_t b = 0; b < count; ++b) {
    const Sample& s = samples.at(order[first + b]);
    if (s.pixels.size() != stride) throw DatasetError("mixed image shapes in one batch");
    for (std::size_t i = 0; i < stride; ++i) out[static_cast<Index>(b * stride + i)] = static_cast<T>(s.pixels[i]);
  }
  return out;
}

std::vector<int> Dataset::batch_labels(const std::vector<std::size_t>& order, std::size_t first,
                                       std::size_t count) const {
  std::vector<int> labels;
  for (std::size_t b = 0; b < count; ++b) labels.push_back(samples.at(order.at(first + b)).label);
  return labels;
}

template Tensor<float> Dataset::batch_images<float>(const std::vector<std::size_t>&, std::size_t, std::size_t) const;
template Tensor<double> Dataset::batch_images<double>(const std::vector<std::size_t>&, std::size_t,
                                                     std::size_t) const;

Dataset generate_dataset(const DatasetSpec& spec) {
  if (spec.classes < 1 || spec.per_class < 1 || spec.size < 1 || spec.channels < 1) {
    throw DatasetError("dataset: classes, per_class, size and channels must be positive");
  }
  Rng rng(spec.seed);
  Dataset ds;
  ds.classes = spec.classes;
  const Index n = spec.size;
  for (Index k = 0; k < spec.per_class; ++k) {
    for (Index label = 0; label < spec.classes; ++label) {
      Sample s;
      s.file = sample_name(ds.samples.size());
      s.label = static_cast<int>(label);
      s.h = s.w = n;
      s.c = spec.channels;
      const double angle = std::numbers::pi * static_cast<double>(label) / static_cast<double>(spec.classes);
      const double freq = 0.10 + 0.08 * uniform01(rng);
      const double phase = 2.0 * std::numbers::pi * uniform01(rng);
      std::vector<double> gain(static_cast<std::size_t>(spec.channels));
      for (auto& g : gain) g = 0.5 + uniform01(rng);
      const double ca = std::cos(angle), sa = std::sin(angle);
      s.pixels.resize(static_cast<std::size_t>(n * n * spec.channels));
      std::size_t at = 0;
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
          const double wave =
              std::sin(2.0 * std::numbers::pi * freq * (static_cast<double>(j) * ca + static_cast<double>(i) * sa) +
                       phase);
          for (Index ch = 0; ch < spec.channels; ++ch) {
            const double noise = 0.6 * (uniform01(rng) - 0.5);
            s.pixels[at++] = static_cast<float>(gain[static_cast<std::size_t>(ch)] * wave + noise);
          }
        }
      }
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt", std::ios::binary | std::ios::trunc);
  if (!manifest) throw DatasetError("cannot write " + (dir / "manifest.txt").string());
  for (const Sample& s : dataset.samples) {
    std::ofstream out(dir / s.file, std::ios::binary | std::ios::trunc);
    if (!out) throw DatasetError("cannot write " + (dir / s.file).string());
    std::vector<char> bytes(s.pixels.size() * 4);
    for (std::size_t i = 0; i < s.pixels.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(s.pixels[i]);
      for (int b = 0; b < 4; ++b) bytes[i * 4 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    manifest << s.file << ' ' << s.label << ' ' << s.h << ' ' << s.w << ' ' << s.c << '\n';
  }
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt", std::ios::binary);
  if (!manifest) throw DatasetError("missing manifest " + (dir / "manifest.txt").string());
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  int max_label = -1;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    Sample s;
    std::string extra;
    if (!(fields >> s.file >> s.label >> s.h >> s.w >> s.c) || (fields >> extra)) {
      throw DatasetError("manifest line " + std::to_string(line_no) + ": expected 'file label h w c'");
    }
    if (s.label < 0 || s.h < 1 || s.w < 1 || s.c < 1) {
      throw DatasetError("manifest line " + std::to_string(line_no) + ": bad label or extents");
    }
    std::ifstream in(dir / s.file, std::ios::binary);
    if (!in) throw DatasetError("manifest line " + std::to_string(line_no) + ": missing file " + s.file);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto expected = static_cast<std::size_t>(s.h * s.w * s.c) * 4;
    if (bytes.size() != expected) {
      throw DatasetError(s.file + ": payload has " + std::to_string(bytes.size()) + " bytes, manifest implies " +
                         std::to_string(expected));
    }
    s.pixels.resize(expected / 4);
    for (std::size_t i = 0; i < s.pixels.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + static_cast<std::size_t>(b)])) << (8 * b);
      s.pixels[i] = std::bit_cast<float>(bits);
    }
    max_label = std::max(max_label, s.label);
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw DatasetError("manifest lists no samples");
  ds.classes = max_label + 1;
  return ds;
}

Split split_dataset(const Dataset& dataset, Index every) {
  Split split;
  std::map<int, Index> seen;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const Index n = seen[dataset.samples[i].label]++;
    if (every > 0 && n % every == every - 1) {
      split.holdout.push_back(i);
    } else {
      split.train.push_back(i);
    }
  }
  return split;
}

}  // namespace pale::harness
