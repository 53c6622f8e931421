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
#include <functional>
#include <string>
#include <vector>

#include "pale/backbone.hpp"
#include "pale/harness/dataset.hpp"

namespace pale::harness {

/// One metrics line. `kind` is "step" (one optimizer step on one batch) or
/// "eval" (a full pass over `split`).
struct MetricsRecord {
  std::string kind = "step";
  std::string split;
  Index step = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double wall_ms = 0.0;
  std::int64_t multiply_adds = 0;  // forward work of the record, all images

  /// Self-contained JSON object on one line, no trailing newline.
  std::string to_json(bool include_wall_time = true) const;
};

struct TrainOptions {
  Index steps = 200;
  Index batch = 16;
  double lr = 0.1;
  Index log_every = 10;
  Index holdout_every = 5;
  std::uint64_t seed = 1;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  Index count = 0;
};

struct TrainResult {
  EvalResult initial_train;
  EvalResult final_train;
  EvalResult final_holdout;
  std::vector<MetricsRecord> records;
};

/// Mean cross-entropy and accuracy over `indices`, in batches, without
/// building a graph.
template <typename T>
EvalResult evaluate(const Model<T>& model, const Dataset& dataset, const std::vector<std::size_t>& indices,
                    Index batch = 32);

/// Plain gradient descent with a fixed step size on shuffled mini-batches.
/// Every record is handed to `sink` as soon as it exists.
template <typename T>
TrainResult train(Model<T>& model, const Dataset& dataset, const TrainOptions& options,
                  const std::function<void(const MetricsRecord&)>& sink = {});

}  // namespace pale::harness
