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
#include <string_view>

#include "pale/attention.hpp"
#include "pale/backbone.hpp"

namespace pale::harness {

/// Malformed config text, unknown keys or invalid values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Precision { kF32, kF64 };

std::string_view precision_name(Precision p);
Precision parse_precision(std::string_view text);

/// Flat key/value run configuration. Every key has a default; a config file
/// only lists what it overrides.
///
///   model.variant     T | S | B | tiny
///   model.classes     classifier width
///   model.channels    optional per-stage override "c1,c2,c3,c4"
///   model.heads       optional per-stage override
///   model.depths      optional per-stage override
///   attn.mode         global | axial | cross_shaped | pale_vanilla | pale_sequential | pale_parallel
///   pale.s_r, pale.s_c  pale size for every stage (0 keeps the variant's)
///   data.*, train.*   dataset and training-loop settings
struct RunConfig {
  std::string model_variant = "tiny";
  Index model_classes = 10;
  std::string model_channels;
  std::string model_heads;
  std::string model_depths;
  AttentionMode attn_mode = AttentionMode::kPaleParallel;
  Index pale_s_r = 0;
  Index pale_s_c = 0;

  std::string data_dir = "data";
  Index data_classes = 10;
  Index data_per_class = 40;
  Index data_size = 32;

  Index train_steps = 200;
  Index train_batch = 16;
  double train_lr = 0.1;
  Index train_log_every = 10;
  Index train_holdout_every = 5;

  std::uint64_t seed = 1;
  Precision precision = Precision::kF32;

  bool operator==(const RunConfig&) const = default;
};

/// Parses "key = value" lines; blank lines and lines starting with '#' are
/// skipped. Throws ConfigError on unknown keys, duplicates or bad values.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical form: every key, sorted, one "key = value" per line.
std::string print_config(const RunConfig& config);

/// Sets one key from its text value (used by the parser and CLI overrides).
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);

/// The model the config describes.
VariantConfig model_config(const RunConfig& config);

}  // namespace pale::harness
