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

#include "pale/complexity.hpp"

#include <algorithm>
#include <sstream>

#include "pale/partition.hpp"

namespace pale {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

std::int64_t qkv_cost(Index h, Index w, Index c, QkvKind kind) {
  const std::int64_t depthwise = kind == QkvKind::kSeparable ? 9 * h * w * c : 0;
  return 3 * (depthwise + h * w * c * c);
}

Index ceil_div(Index a, Index b) { return (a + b - 1) / b; }

// Attention-score elements (one softmax entry per query/key/head).
std::int64_t softmax_elements(AttentionMode mode, Index h, Index w, const PartitionSpec& spec, int heads,
                              int block_index) {
  const PartitionSpec s = effective_spec(mode, spec);
  switch (mode) {
    case AttentionMode::kGlobal: return static_cast<std::int64_t>(heads) * (h * w) * (h * w);
    case AttentionMode::kAxial:
    case AttentionMode::kCrossShaped:
    case AttentionMode::kPaleParallel: {
      const Index H = padded_extent(h, s.rows), W = padded_extent(w, s.cols);
      return static_cast<std::int64_t>(heads / 2) * (H * W * W * s.rows + H * H * W * s.cols);
    }
    case AttentionMode::kPaleVanilla: {
      const Index n = std::max(ceil_div(h, s.rows), ceil_div(w, s.cols));
      const Index H = n * s.rows, W = n * s.cols;
      return static_cast<std::int64_t>(heads) * H * W * (s.rows * W + s.cols * H - s.rows * s.cols);
    }
    case AttentionMode::kPaleSequential:
      if (block_index % 2 == 0) {
        const Index H = padded_extent(h, s.rows);
        return static_cast<std::int64_t>(heads) * H * w * w * s.rows;
      } else {
        const Index W = padded_extent(w, s.cols);
        return static_cast<std::int64_t>(heads) * h * h * W * s.cols;
      }
  }
  return 0;
}

}  // namespace

FlopReport flops_global_attention(Index h, Index w, Index c) {
  require(h >= 1 && w >= 1 && c >= 1, "flops_global_attention: extents must be positive");
  FlopReport r;
  r.h = h;
  r.w = w;
  r.qkv = qkv_cost(h, w, c, QkvKind::kLinear);
  r.attention = 2 * c * (h * w) * (h * w);
  r.projection = h * w * c * c;
  return r;
}

FlopReport flops_pale_attention(Index h, Index w, Index c, Index s_r, Index s_c) {
  require(h >= 1 && w >= 1 && c >= 1 && s_r >= 1 && s_c >= 1, "flops_pale_attention: extents must be positive");
  require(h % s_r == 0 && w % s_c == 0, "flops_pale_attention: extents must be divisible by the pale size");
  FlopReport r;
  r.h = h;
  r.w = w;
  r.qkv = qkv_cost(h, w, c, QkvKind::kSeparable);
  r.row = h * w * w * c * s_r;
  r.column = h * h * w * c * s_c;
  r.projection = h * w * c * c;
  return r;
}

FlopReport flops_attention(AttentionMode mode, Index h, Index w, Index c, const PartitionSpec& spec, int block_index,
                           QkvKind qkv) {
  require(h >= 1 && w >= 1 && c >= 1, "flops_attention: extents must be positive");
  const PartitionSpec s = effective_spec(mode, spec);
  FlopReport r;
  switch (mode) {
    case AttentionMode::kGlobal:
      r = flops_global_attention(h, w, c);
      r.qkv = qkv_cost(h, w, c, qkv);
      return r;
    case AttentionMode::kAxial:
    case AttentionMode::kCrossShaped:
    case AttentionMode::kPaleParallel:
      r = flops_pale_attention(padded_extent(h, s.rows), padded_extent(w, s.cols), c, s.rows, s.cols);
      r.qkv = qkv_cost(r.h, r.w, c, qkv);
      return r;
    case AttentionMode::kPaleVanilla: {
      const Index n = std::max(ceil_div(h, s.rows), ceil_div(w, s.cols));
      r.h = n * s.rows;
      r.w = n * s.cols;
      r.qkv = qkv_cost(r.h, r.w, c, qkv);
      r.attention = 2 * r.h * r.w * c * (s.rows * r.w + s.cols * r.h - s.rows * s.cols);
      r.projection = r.h * r.w * c * c;
      return r;
    }
    case AttentionMode::kPaleSequential:
      if (block_index % 2 == 0) {
        r.h = padded_extent(h, s.rows);
        r.w = w;
        r.row = 2 * r.h * r.w * r.w * c * s.rows;
      } else {
        r.h = h;
        r.w = padded_extent(w, s.cols);
        r.column = 2 * r.h * r.h * r.w * c * s.cols;
      }
      r.qkv = qkv_cost(r.h, r.w, c, qkv);
      r.projection = r.h * r.w * c * c;
      return r;
  }
  throw ShapeError("flops_attention: unknown mode");
}

std::int64_t ModelFlopReport::multiply_adds() const {
  std::int64_t n = 0;
  for (const auto& l : layers) n += l.multiply_adds;
  return n;
}

std::int64_t ModelFlopReport::excluded_ops() const {
  std::int64_t n = 0;
  for (const auto& l : layers) n += l.norm_ops + l.softmax_ops + l.elementwise_ops;
  return n;
}

std::int64_t ModelFlopReport::multiply_adds_under(const std::string& prefix) const {
  std::int64_t n = 0;
  for (const auto& l : layers) {
    if (l.name.starts_with(prefix)) n += l.multiply_adds;
  }
  return n;
}

ModelFlopReport model_flops(const VariantConfig& config, Index h, Index w) {
  config.validate();
  require(h >= 1 && w >= 1, "model_flops: extents must be positive");
  ModelFlopReport report;
  Index in_ch = config.in_channels;
  for (int i = 0; i < kStageCount; ++i) {
    const StageConfig& sc = config.stages[static_cast<std::size_t>(i)];
    const std::string stage = "stage" + std::to_string(i + 1);
    const Index k = merge_kernel(sc.stride);
    const Conv2dOptions opt = merge_conv_options(sc.stride);
    require(h + 2 * opt.pad_h >= k && w + 2 * opt.pad_w >= k, "model_flops: input too small for " + stage);
    h = (h + 2 * opt.pad_h - k) / sc.stride + 1;
    w = (w + 2 * opt.pad_w - k) / sc.stride + 1;
    const Index c = sc.channels;
    const std::int64_t hwc = h * w * c;
    report.layers.push_back({stage + "/merge", h * w * k * k * in_ch * c, hwc, 0, 0});

    const PartitionSpec spec{sc.pale_rows, sc.pale_cols, true};
    for (int b = 0; b < sc.depth; ++b) {
      const std::string block = stage + "/block" + std::to_string(b);
      report.layers.push_back({block + "/cpe", 9 * hwc, 0, 0, hwc});
      const FlopReport attn = flops_attention(config.mode, h, w, c, spec, b, config.qkv);
      report.layers.push_back(
          {block + "/attn", attn.total(), hwc, softmax_elements(config.mode, h, w, spec, sc.heads, b), hwc});
      const Index hidden = c * sc.mlp_ratio;
      report.layers.push_back({block + "/mlp", 2 * h * w * c * hidden, hwc, 0, h * w * hidden + hwc});
    }
    in_ch = c;
  }
  report.layers.push_back({"head", in_ch * config.num_classes, h * w * in_ch, 0, h * w * in_ch});
  return report;
}

ParamCount model_params(const VariantConfig& config) {
  config.validate();
  ParamCount p;
  Index in_ch = config.in_channels;
  for (std::size_t i = 0; i < kStageCount; ++i) {
    const StageConfig& sc = config.stages[i];
    const Index before = p.total;
    const Index c = sc.channels, k = merge_kernel(sc.stride), hidden = c * sc.mlp_ratio;
    p.total += k * k * in_ch * c + c + 2 * c;
    p.biases += c;
    p.norm += 2 * c;
    const Index depthwise = config.qkv == QkvKind::kSeparable ? 9 * c : 0;
    const Index block = (9 * c + c)                        // cpe
                        + 4 * c                            // two layer norms
                        + 3 * (depthwise + c * c + c)      // q, k, v
                        + (c * c + c)                      // output projection
                        + (c * hidden + hidden) + (hidden * c + c);  // mlp
    p.total += sc.depth * block;
    p.biases += sc.depth * (c + 3 * c + c + hidden + c);
    p.qkv_biases += sc.depth * 3 * c;
    p.norm += sc.depth * 4 * c;
    p.by_stage[i] = p.total - before;
    in_ch = c;
  }
  p.by_stage[kStageCount] = 2 * in_ch + in_ch * config.num_classes + config.num_classes;
  p.total += p.by_stage[kStageCount];
  p.norm += 2 * in_ch;
  p.biases += config.num_classes;
  return p;
}

bool TraceComparison::all_match() const {
  return std::all_of(terms.begin(), terms.end(), [](const TermCheck& t) { return t.match(); });
}

std::string TraceComparison::describe() const {
  std::ostringstream os;
  for (const auto& t : terms) {
    os << t.term << ": analytic=" << t.analytic << " measured=" << t.measured << (t.match() ? " ok" : " MISMATCH")
       << '\n';
  }
  return os.str();
}

TraceComparison verify_against_trace(const FlopReport& analytic, const FlopTrace& trace, std::int64_t batch) {
  require(batch >= 1, "verify_against_trace: batch must be >= 1");
  TraceComparison out;
  auto measured = [&](std::string_view label) { return trace.matching(label).multiply_adds(); };
  out.terms.push_back({"qkv", batch * analytic.qkv, measured("qkv")});
  out.terms.push_back({"row", batch * analytic.row, measured("row")});
  out.terms.push_back({"column", batch * analytic.column, measured("column")});
  out.terms.push_back({"attention", batch * analytic.attention, measured("global") + measured("pale")});
  out.terms.push_back({"projection", batch * analytic.projection, measured("proj")});
  out.terms.push_back({"total", batch * analytic.total(), trace.total().multiply_adds()});
  return out;
}

}  // namespace pale
