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

#include "pale/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pale/flop_trace.hpp"

namespace pale {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

struct PadPlan {
  Index h = 0, w = 0;  // original
  Index H = 0, W = 0;  // padded
  AttentionMask mask;
  bool use_mask = false;
};

PadPlan plan_padding(Index h, Index w, Index H, Index W, const AttentionMask* user_mask, MaskPolicy policy) {
  PadPlan plan{h, w, H, W, AttentionMask::window(H, W, h, w), false};
  if (user_mask != nullptr) {
    require(user_mask->h == h && user_mask->w == w &&
                static_cast<Index>(user_mask->valid.size()) == h * w,
            "attention: mask extents do not match the input");
    for (Index r = 0; r < h; ++r) {
      for (Index c = 0; c < w; ++c) {
        plan.mask.valid[static_cast<std::size_t>(r * W + c)] = user_mask->valid[static_cast<std::size_t>(r * w + c)];
      }
    }
  }
  plan.use_mask = policy == MaskPolicy::kApply && !plan.mask.is_all_valid();
  return plan;
}

template <typename T>
void check_input(const Var<T>& x, const AttentionParams<T>& params) {
  require(x.value().rank() == 4, "attention: input must be (b, h, w, c), got " + shape_to_string(x.shape()));
  require(x.dim(3) == params.channels, "attention: input has " + std::to_string(x.dim(3)) +
                                           " channels, parameters expect " + std::to_string(params.channels));
  require(params.heads >= 1 && params.channels % params.heads == 0, "attention: heads must divide channels");
}

template <typename T>
Var<T> pad_if_needed(const Var<T>& x, const PadPlan& plan) {
  if (plan.H == plan.h && plan.W == plan.w) return x;
  return pad_spatial(x, plan.H - plan.h, plan.W - plan.w);
}

template <typename T>
Var<T> crop_if_needed(const Var<T>& y, const PadPlan& plan) {
  if (plan.H == plan.h && plan.W == plan.w) return y;
  return crop_spatial(y, plan.h, plan.w);
}

// Key validity per group. A group without any valid key holds only invalid
// tokens (every query is also a key); it attends unmasked and its outputs
// are discarded with the padding.
std::vector<std::uint8_t> group_key_mask(const PadPlan& plan, const std::vector<Index>& idx, Index groups) {
  std::vector<std::uint8_t> mask = plan.mask.select(idx);
  const auto n = mask.size() / static_cast<std::size_t>(groups);
  for (std::size_t g = 0; g < static_cast<std::size_t>(groups); ++g) {
    const auto first = mask.begin() + static_cast<std::ptrdiff_t>(g * n);
    const auto last = first + static_cast<std::ptrdiff_t>(n);
    if (std::none_of(first, last, [](std::uint8_t v) { return v != 0; })) std::fill(first, last, 1);
  }
  return mask;
}

// Attention inside token groups that partition the (H, W) grid.
template <typename T>
Var<T> attend_partition(const Var<T>& q, const Var<T>& k, const Var<T>& v, const std::vector<Index>& idx,
                        Index groups, int heads, const PadPlan& plan) {
  std::vector<std::uint8_t> key_mask;
  if (plan.use_mask) key_mask = group_key_mask(plan, idx, groups);
  auto qg = gather_tokens(q, idx, groups);
  auto kg = gather_tokens(k, idx, groups);
  auto vg = gather_tokens(v, idx, groups);
  auto y = msa_group(qg, kg, vg, heads, key_mask);
  return scatter_tokens(y, idx, plan.H, plan.W);
}

template <typename T>
Var<T> project(const Var<T>& y, const AttentionParams<T>& params) {
  TraceLabel label("proj");
  return linear(y, params.proj_weight, params.proj_bias);
}

}  // namespace

std::string_view mode_name(AttentionMode mode) {
  switch (mode) {
    case AttentionMode::kGlobal: return "global";
    case AttentionMode::kAxial: return "axial";
    case AttentionMode::kCrossShaped: return "cross_shaped";
    case AttentionMode::kPaleVanilla: return "pale_vanilla";
    case AttentionMode::kPaleSequential: return "pale_sequential";
    case AttentionMode::kPaleParallel: return "pale_parallel";
  }
  return "unknown";
}

std::optional<AttentionMode> parse_mode(std::string_view name) {
  for (AttentionMode m : all_modes()) {
    if (mode_name(m) == name) return m;
  }
  if (name == "cross" || name == "cross-shaped") return AttentionMode::kCrossShaped;
  if (name == "vanilla") return AttentionMode::kPaleVanilla;
  if (name == "sequential") return AttentionMode::kPaleSequential;
  if (name == "parallel" || name == "pale") return AttentionMode::kPaleParallel;
  return std::nullopt;
}

const std::vector<AttentionMode>& all_modes() {
  static const std::vector<AttentionMode> modes = {AttentionMode::kGlobal,         AttentionMode::kAxial,
                                                   AttentionMode::kCrossShaped,    AttentionMode::kPaleVanilla,
                                                   AttentionMode::kPaleSequential, AttentionMode::kPaleParallel};
  return modes;
}

template <typename T>
void AttentionParams<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  const std::pair<const char*, const QkvProjection<T>*> projections[] = {{"q", &q}, {"k", &k}, {"v", &v}};
  for (const auto& [name, proj] : projections) {
    if (proj->depthwise.defined()) out.emplace_back(prefix + name + ".depthwise", proj->depthwise);
    out.emplace_back(prefix + name + ".pointwise", proj->pointwise);
    out.emplace_back(prefix + name + ".bias", proj->bias);
  }
  out.emplace_back(prefix + "proj.weight", proj_weight);
  out.emplace_back(prefix + "proj.bias", proj_bias);
}

template <typename T>
AttentionParams<T> make_attention_params(Index channels, int heads, QkvKind kind, Rng& rng, double std) {
  require(channels >= 1 && heads >= 1 && channels % heads == 0, "make_attention_params: heads must divide channels");
  AttentionParams<T> p;
  p.channels = channels;
  p.heads = heads;
  for (QkvProjection<T>* proj : {&p.q, &p.k, &p.v}) {
    if (kind == QkvKind::kSeparable) proj->depthwise = parameter(truncated_normal<T>({3, 3, 1, channels}, std, rng));
    proj->pointwise = parameter(truncated_normal<T>({channels, channels}, std, rng));
    proj->bias = parameter(Tensor<T>({channels}));
  }
  p.proj_weight = parameter(truncated_normal<T>({channels, channels}, std, rng));
  p.proj_bias = parameter(Tensor<T>({channels}));
  return p;
}

template <typename T>
Qkv<T> qkv_separable(const Var<T>& x, const AttentionParams<T>& params) {
  check_input(x, params);
  TraceLabel label("qkv");
  auto one = [&](const QkvProjection<T>& proj) {
    Var<T> t = x;
    if (proj.depthwise.defined()) {
      Conv2dOptions opt;
      opt.pad_h = opt.pad_w = 1;
      opt.groups = params.channels;
      t = conv2d(x, proj.depthwise, Var<T>(), opt);
    }
    return linear(t, proj.pointwise, proj.bias);
  };
  return Qkv<T>{one(params.q), one(params.k), one(params.v)};
}

template <typename T>
Var<T> msa_group(const Var<T>& q, const Var<T>& k, const Var<T>& v, int heads, KeyMask mask) {
  return grouped_attention(q, k, v, heads, mask);
}

template <typename T>
Var<T> ps_attention_parallel(const Var<T>& x, const PartitionSpec& spec, const AttentionParams<T>& params,
                             const AttentionMask* mask, MaskPolicy policy) {
  check_input(x, params);
  require(params.channels % 2 == 0, "ps_attention_parallel: channel count must be even, got " +
                                        std::to_string(params.channels));
  require(params.heads >= 2 && params.heads % 2 == 0,
          "ps_attention_parallel: needs an even head count >= 2, got " + std::to_string(params.heads));
  require(spec.rows >= 1 && spec.cols >= 1, "ps_attention_parallel: pale size must be >= 1");
  const Index h = x.dim(1), w = x.dim(2);
  const PadPlan plan = plan_padding(h, w, padded_extent(h, spec.rows), padded_extent(w, spec.cols), mask, policy);
  const Var<T> xp = pad_if_needed(x, plan);
  const Qkv<T> qkv = qkv_separable(xp, params);
  auto [q_row, q_col] = split_channels_half(qkv.q);
  auto [k_row, k_col] = split_channels_half(qkv.k);
  auto [v_row, v_col] = split_channels_half(qkv.v);
  const int branch_heads = params.heads / 2;

  Var<T> y_row, y_col;
  {
    TraceLabel label("row");
    const IndexGroups groups = build_groups(plan.H, plan.W, spec, Axis::kRow);
    y_row = attend_partition(q_row, k_row, v_row, groups.token_index(plan.H, plan.W), groups.group_count(),
                             branch_heads, plan);
  }
  {
    TraceLabel label("column");
    const IndexGroups groups = build_groups(plan.H, plan.W, spec, Axis::kColumn);
    y_col = attend_partition(q_col, k_col, v_col, groups.token_index(plan.H, plan.W), groups.group_count(),
                             branch_heads, plan);
  }
  return crop_if_needed(project(concat_channels(y_row, y_col), params), plan);
}

template <typename T>
Var<T> ps_attention_vanilla(const Var<T>& x, const PartitionSpec& spec, const AttentionParams<T>& params,
                            const AttentionMask* mask, MaskPolicy policy) {
  check_input(x, params);
  require(spec.rows >= 1 && spec.cols >= 1, "ps_attention_vanilla: pale size must be >= 1");
  const Index h = x.dim(1), w = x.dim(2);
  // Pad to a common group count so every row group pairs with a column group.
  const Index n = std::max((h + spec.rows - 1) / spec.rows, (w + spec.cols - 1) / spec.cols);
  const PadPlan plan = plan_padding(h, w, n * spec.rows, n * spec.cols, mask, policy);
  const IndexGroups row_groups = build_groups(plan.H, plan.W, spec, Axis::kRow);
  const IndexGroups col_groups = build_groups(plan.H, plan.W, spec, Axis::kColumn);
  require(row_groups.group_count() == col_groups.group_count(), "ps_attention_vanilla: group counts differ");

  std::vector<Index> query_idx, key_idx;
  std::vector<std::uint8_t> in_row(static_cast<std::size_t>(plan.H)), in_col(static_cast<std::size_t>(plan.W));
  for (Index a = 0; a < n; ++a) {
    for (Index b = 0; b < n; ++b) {
      const auto& rows = row_groups.groups[static_cast<std::size_t>(a)];
      const auto& cols = col_groups.groups[static_cast<std::size_t>(b)];
      std::fill(in_row.begin(), in_row.end(), 0);
      std::fill(in_col.begin(), in_col.end(), 0);
      for (Index r : rows) in_row[static_cast<std::size_t>(r)] = 1;
      for (Index c : cols) in_col[static_cast<std::size_t>(c)] = 1;
      for (Index r = 0; r < plan.H; ++r) {
        for (Index c = 0; c < plan.W; ++c) {
          if (in_row[static_cast<std::size_t>(r)] && in_col[static_cast<std::size_t>(c)]) query_idx.push_back(r * plan.W + c);
        }
      }
      for (Index r = 0; r < plan.H; ++r) {
        for (Index c = 0; c < plan.W; ++c) {
          if (in_row[static_cast<std::size_t>(r)] || in_col[static_cast<std::size_t>(c)]) key_idx.push_back(r * plan.W + c);
        }
      }
    }
  }
  const Index groups = n * n;
  const Var<T> xp = pad_if_needed(x, plan);
  const Qkv<T> qkv = qkv_separable(xp, params);
  Var<T> y;
  {
    TraceLabel label("pale");
    std::vector<std::uint8_t> key_mask;
    if (plan.use_mask) key_mask = plan.mask.select(key_idx);
    auto qg = gather_tokens(qkv.q, query_idx, groups);
    auto kg = gather_tokens(qkv.k, key_idx, groups);
    auto vg = gather_tokens(qkv.v, key_idx, groups);
    y = scatter_tokens(msa_group(qg, kg, vg, params.heads, key_mask), query_idx, plan.H, plan.W);
  }
  return crop_if_needed(project(y, params), plan);
}

template <typename T>
Var<T> ps_attention_sequential(const Var<T>& x, const PartitionSpec& spec, const AttentionParams<T>& params,
                               int block_index, const AttentionMask* mask, MaskPolicy policy) {
  check_input(x, params);
  require(block_index >= 0, "ps_attention_sequential: negative block index");
  const bool rows = block_index % 2 == 0;
  const Index h = x.dim(1), w = x.dim(2);
  const PadPlan plan = plan_padding(h, w, rows ? padded_extent(h, spec.rows) : h,
                                    rows ? w : padded_extent(w, spec.cols), mask, policy);
  const Var<T> xp = pad_if_needed(x, plan);
  const Qkv<T> qkv = qkv_separable(xp, params);
  Var<T> y;
  {
    TraceLabel label(rows ? "row" : "column");
    const IndexGroups groups = build_groups(plan.H, plan.W, spec, rows ? Axis::kRow : Axis::kColumn);
    y = attend_partition(qkv.q, qkv.k, qkv.v, groups.token_index(plan.H, plan.W), groups.group_count(),
                         params.heads, plan);
  }
  return crop_if_needed(project(y, params), plan);
}

template <typename T>
Var<T> global_attention(const Var<T>& x, const AttentionParams<T>& params, const AttentionMask* mask,
                        MaskPolicy policy) {
  check_input(x, params);
  const Index b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const PadPlan plan = plan_padding(h, w, h, w, mask, policy);
  const Qkv<T> qkv = qkv_separable(x, params);
  Var<T> y;
  {
    TraceLabel label("global");
    const Shape grouped{b, 1, h * w, c};
    y = msa_group(reshape(qkv.q, grouped), reshape(qkv.k, grouped), reshape(qkv.v, grouped), params.heads,
                  plan.use_mask ? KeyMask(plan.mask.valid) : KeyMask{});
    y = reshape(y, Shape{b, h, w, c});
  }
  return project(y, params);
}

PartitionSpec effective_spec(AttentionMode mode, const PartitionSpec& spec) {
  switch (mode) {
    case AttentionMode::kAxial: return PartitionSpec{1, 1, true};
    case AttentionMode::kCrossShaped: return PartitionSpec{spec.rows, spec.cols, false};
    default: return spec;
  }
}

template <typename T>
Var<T> attention_forward(const Var<T>& x, const AttentionConfig& config, const AttentionParams<T>& params,
                         int block_index, const AttentionMask* mask) {
  const PartitionSpec spec = effective_spec(config.mode, config.spec);
  switch (config.mode) {
    case AttentionMode::kGlobal: return global_attention(x, params, mask, config.mask_policy);
    case AttentionMode::kAxial:
    case AttentionMode::kCrossShaped:
    case AttentionMode::kPaleParallel: return ps_attention_parallel(x, spec, params, mask, config.mask_policy);
    case AttentionMode::kPaleVanilla: return ps_attention_vanilla(x, spec, params, mask, config.mask_policy);
    case AttentionMode::kPaleSequential:
      return ps_attention_sequential(x, spec, params, block_index, mask, config.mask_policy);
  }
  throw ShapeError("attention_forward: unknown attention mode");
}

// ---------------------------------------------------------------- oracle

template <typename T>
Tensor<T> oracle_attention(const Tensor<T>& x, const std::vector<OracleBranch>& branches,
                           const AttentionParams<T>& params) {
  require(x.rank() == 4 && x.dim(3) == params.channels, "oracle_attention: input/parameter channel mismatch");
  const Index B = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3), hw = h * w;

  // Q, K, V by direct loops.
  auto project_qkv = [&](const QkvProjection<T>& proj) {
    Tensor<T> mid = x;
    if (proj.depthwise.defined()) {
      const Tensor<T>& k = proj.depthwise.value();
      mid = Tensor<T>(x.shape());
      for (Index b = 0; b < B; ++b)
        for (Index i = 0; i < h; ++i)
          for (Index j = 0; j < w; ++j)
            for (Index ch = 0; ch < c; ++ch) {
              T acc = 0;
              for (Index di = -1; di <= 1; ++di)
                for (Index dj = -1; dj <= 1; ++dj) {
                  const Index ii = i + di, jj = j + dj;
                  if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;
                  acc += x.at(b, ii, jj, ch) * k.at(di + 1, dj + 1, 0, ch);
                }
              mid.at(b, i, j, ch) = acc;
            }
    }
    Tensor<T> out(x.shape());
    const Tensor<T>& pw = proj.pointwise.value();
    const Tensor<T>& bias = proj.bias.value();
    for (Index b = 0; b < B; ++b)
      for (Index i = 0; i < h; ++i)
        for (Index j = 0; j < w; ++j)
          for (Index co = 0; co < c; ++co) {
            T acc = bias[co];
            for (Index ci = 0; ci < c; ++ci) acc += mid.at(b, i, j, ci) * pw.at(ci, co);
            out.at(b, i, j, co) = acc;
          }
    return out;
  };
  const Tensor<T> Q = project_qkv(params.q);
  const Tensor<T> K = project_qkv(params.k);
  const Tensor<T> V = project_qkv(params.v);

  Tensor<T> Y(x.shape());
  std::vector<int> channel_owner(static_cast<std::size_t>(c), 0);
  for (const auto& br : branches) {
    require(br.channel_begin >= 0 && br.channel_count > 0 && br.channel_begin + br.channel_count <= c,
            "oracle_attention: branch channel range out of bounds");
    require(br.heads >= 1 && br.channel_count % br.heads == 0, "oracle_attention: heads must divide branch width");
    for (Index ch = br.channel_begin; ch < br.channel_begin + br.channel_count; ++ch) {
      ++channel_owner[static_cast<std::size_t>(ch)];
    }
    std::vector<int> query_seen(static_cast<std::size_t>(hw), 0);
    const Index dh = br.channel_count / br.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (const auto& group : br.groups) {
      require(!group.keys.empty(), "oracle_attention: group without keys");
      for (Index qi : group.queries) {
        require(qi >= 0 && qi < hw, "oracle_attention: query index out of range");
        ++query_seen[static_cast<std::size_t>(qi)];
      }
      for (Index b = 0; b < B; ++b) {
        for (int head = 0; head < br.heads; ++head) {
          const Index c0 = br.channel_begin + head * dh;
          for (Index qi : group.queries) {
            const Index qr = qi / w, qc = qi % w;
            std::vector<double> score;
            for (Index kj : group.keys) {
              const Index kr = kj / w, kc = kj % w;
              double dot = 0;
              for (Index t = 0; t < dh; ++t) dot += static_cast<double>(Q.at(b, qr, qc, c0 + t)) * K.at(b, kr, kc, c0 + t);
              score.push_back(dot * scale);
            }
            const double mx = *std::max_element(score.begin(), score.end());
            double total = 0;
            for (double& s : score) total += (s = std::exp(s - mx));
            for (Index t = 0; t < dh; ++t) {
              double acc = 0;
              for (std::size_t j = 0; j < group.keys.size(); ++j) {
                const Index kj = group.keys[j];
                acc += score[j] / total * V.at(b, kj / w, kj % w, c0 + t);
              }
              Y.at(b, qr, qc, c0 + t) = static_cast<T>(acc);
            }
          }
        }
      }
    }
    require(std::all_of(query_seen.begin(), query_seen.end(), [](int n) { return n == 1; }),
            "oracle_attention: every token must be queried exactly once per branch");
  }
  require(std::all_of(channel_owner.begin(), channel_owner.end(), [](int n) { return n == 1; }),
          "oracle_attention: branches must tile the channels");

  Tensor<T> out(x.shape());
  const Tensor<T>& pw = params.proj_weight.value();
  const Tensor<T>& pb = params.proj_bias.value();
  for (Index b = 0; b < B; ++b)
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < w; ++j)
        for (Index co = 0; co < c; ++co) {
          T acc = pb[co];
          for (Index ci = 0; ci < c; ++ci) acc += Y.at(b, i, j, ci) * pw.at(ci, co);
          out.at(b, i, j, co) = acc;
        }
  return out;
}

#define PALE_INSTANTIATE_ATTENTION(T)                                                                            \
  template struct AttentionParams<T>;                                                                            \
  template AttentionParams<T> make_attention_params(Index, int, QkvKind, Rng&, double);                          \
  template Qkv<T> qkv_separable(const Var<T>&, const AttentionParams<T>&);                                       \
  template Var<T> msa_group(const Var<T>&, const Var<T>&, const Var<T>&, int, KeyMask);                          \
  template Var<T> ps_attention_parallel(const Var<T>&, const PartitionSpec&, const AttentionParams<T>&,          \
                                        const AttentionMask*, MaskPolicy);                                       \
  template Var<T> ps_attention_vanilla(const Var<T>&, const PartitionSpec&, const AttentionParams<T>&,           \
                                       const AttentionMask*, MaskPolicy);                                        \
  template Var<T> ps_attention_sequential(const Var<T>&, const PartitionSpec&, const AttentionParams<T>&, int,   \
                                          const AttentionMask*, MaskPolicy);                                     \
  template Var<T> global_attention(const Var<T>&, const AttentionParams<T>&, const AttentionMask*, MaskPolicy);  \
  template Var<T> attention_forward(const Var<T>&, const AttentionConfig&, const AttentionParams<T>&, int,       \
                                    const AttentionMask*);                                                       \
  template Tensor<T> oracle_attention(const Tensor<T>&, const std::vector<OracleBranch>&, const AttentionParams<T>&);

PALE_INSTANTIATE_ATTENTION(float)
PALE_INSTANTIATE_ATTENTION(double)

#undef PALE_INSTANTIATE_ATTENTION

}  // namespace pale
