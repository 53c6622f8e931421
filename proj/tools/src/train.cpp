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

#include "pale/harness/train.hpp"

#include <chrono>
#include <numeric>

#include <json.hpp>

#include "pale/complexity.hpp"
#include "pale/init.hpp"
#include "pale/ops.hpp"

namespace pale::harness {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(v[i - 1], v[std::min(j, i - 1)]);
  }
}

template <typename T>
int argmax_row(const Tensor<T>& logits, Index row) {
  const Index k = logits.dim(1);
  int best = 0;
  for (Index j = 1; j < k; ++j) {
    if (logits.at(row, j) > logits.at(row, best)) best = static_cast<int>(j);
  }
  return best;
}

std::int64_t image_multiply_adds(const VariantConfig& config, const Dataset& dataset) {
  const Sample& s = dataset.samples.front();
  return model_flops(config, s.h, s.w).multiply_adds();
}

}  // namespace

std::string MetricsRecord::to_json(bool include_wall_time) const {
  nlohmann::ordered_json j;
  j["kind"] = kind;
  if (!split.empty()) j["split"] = split;
  j["step"] = step;
  j["loss"] = loss;
  j["accuracy"] = accuracy;
  if (include_wall_time) j["wall_ms"] = wall_ms;
  j["multiply_adds"] = multiply_adds;
  return j.dump();
}

template <typename T>
EvalResult evaluate(const Model<T>& model, const Dataset& dataset, const std::vector<std::size_t>& indices,
                    Index batch) {
  EvalResult r;
  if (indices.empty()) return r;
  NoGradGuard no_grad;
  double loss_sum = 0.0;
  Index correct = 0;
  for (std::size_t first = 0; first < indices.size(); first += static_cast<std::size_t>(batch)) {
    const std::size_t count = std::min(indices.size() - first, static_cast<std::size_t>(batch));
    const auto labels = dataset.batch_labels(indices, first, count);
    const Var<T> logits = model.forward(constant(dataset.batch_images<T>(indices, first, count)));
    loss_sum += static_cast<double>(cross_entropy(logits, labels).value()[0]) * static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
      if (argmax_row(logits.value(), static_cast<Index>(i)) == labels[i]) ++correct;
    }
  }
  r.count = static_cast<Index>(indices.size());
  r.loss = loss_sum / static_cast<double>(r.count);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.count);
  return r;
}

template <typename T>
TrainResult train(Model<T>& model, const Dataset& dataset, const TrainOptions& options,
                  const std::function<void(const MetricsRecord&)>& sink) {
  if (options.batch < 1) throw DatasetError("train: batch must be >= 1");
  if (dataset.samples.empty()) throw DatasetError("train: empty dataset");
  if (dataset.classes > model.config().num_classes) {
    throw DatasetError("train: dataset has " + std::to_string(dataset.classes) + " classes, model only " +
                       std::to_string(model.config().num_classes));
  }
  const Split split = split_dataset(dataset, options.holdout_every);
  if (split.train.empty()) throw DatasetError("train: no training samples after the holdout split");
  const std::int64_t per_image = image_multiply_adds(model.config(), dataset);
  const auto start = Clock::now();

  TrainResult result;
  auto emit = [&](MetricsRecord rec) {
    rec.wall_ms = elapsed_ms(start);
    if (sink) sink(rec);
    result.records.push_back(std::move(rec));
  };
  auto emit_eval = [&](const char* name, Index step, const EvalResult& e) {
    MetricsRecord rec;
    rec.kind = "eval";
    rec.split = name;
    rec.step = step;
    rec.loss = e.loss;
    rec.accuracy = e.accuracy;
    rec.multiply_adds = per_image * e.count;
    emit(rec);
  };

  result.initial_train = evaluate(model, dataset, split.train);
  emit_eval("train", 0, result.initial_train);

  Rng rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order = split.train;
  shuffle(order, rng);
  std::size_t cursor = 0;
  const auto params = model.named_parameters();
  const auto batch = std::min(static_cast<std::size_t>(options.batch), order.size());

  for (Index step = 1; step <= options.steps; ++step) {
    if (cursor + batch > order.size()) {
      shuffle(order, rng);
      cursor = 0;
    }
    const auto labels = dataset.batch_labels(order, cursor, batch);
    const Var<T> images = constant(dataset.batch_images<T>(order, cursor, batch));
    cursor += batch;

    model.zero_grad();
    const Var<T> logits = model.forward(images);
    const Var<T> loss = cross_entropy(logits, labels);
    backward(loss);
    const T lr = static_cast<T>(options.lr);
    for (const auto& [name, p] : params) {
      Var<T> param = p;
      if (!param.has_grad()) continue;
      auto value = param.mutable_value().data();
      const auto grad = param.grad().data();
      for (std::size_t i = 0; i < value.size(); ++i) value[i] -= lr * grad[i];
    }

    if (step % options.log_every == 0 || step == options.steps) {
      Index correct = 0;
      for (std::size_t i = 0; i < batch; ++i) {
        if (argmax_row(logits.value(), static_cast<Index>(i)) == labels[i]) ++correct;
      }
      MetricsRecord rec;
      rec.step = step;
      rec.loss = static_cast<double>(loss.value()[0]);
      rec.accuracy = static_cast<double>(correct) / static_cast<double>(batch);
      rec.multiply_adds = per_image * static_cast<std::int64_t>(batch);
      emit(rec);
    }
  }
  model.zero_grad();

  result.final_train = evaluate(model, dataset, split.train);
  emit_eval("train", options.steps, result.final_train);
  result.final_holdout = evaluate(model, dataset, split.holdout);
  if (!split.holdout.empty()) emit_eval("holdout", options.steps, result.final_holdout);
  return result;
}

template EvalResult evaluate<float>(const Model<float>&, const Dataset&, const std::vector<std::size_t>&, Index);
template EvalResult evaluate<double>(const Model<double>&, const Dataset&, const std::vector<std::size_t>&, Index);
template TrainResult train<float>(Model<float>&, const Dataset&, const TrainOptions&,
                                  const std::function<void(const MetricsRecord&)>&);
template TrainResult train<double>(Model<double>&, const Dataset&, const TrainOptions&,
                                   const std::function<void(const MetricsRecord&)>&);

}  // namespace pale::harness
