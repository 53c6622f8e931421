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

#include "pale/harness/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "pale/backbone.hpp"
#include "pale/complexity.hpp"
#include "pale/flop_trace.hpp"
#include "pale/grad_check.hpp"
#include "pale/harness/oracles.hpp"
#include "pale/ops.hpp"

namespace pale::harness {

namespace {

std::string num(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

std::string shape_tag(Index h, Index w, Index c, Index s, int heads) {
  return "h=" + std::to_string(h) + " w=" + std::to_string(w) + " c=" + std::to_string(c) + " s=" +
         std::to_string(s) + " heads=" + std::to_string(heads);
}

bool same_groups(const IndexGroups& a, const IndexGroups& b) {
  return a.axis == b.axis && a.extent == b.extent && a.lines_per_group == b.lines_per_group && a.groups == b.groups;
}

bool same_branches(const std::vector<OracleBranch>& a, const std::vector<OracleBranch>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].channel_begin != b[i].channel_begin || a[i].channel_count != b[i].channel_count ||
        a[i].heads != b[i].heads || a[i].groups.size() != b[i].groups.size()) {
      return false;
    }
    for (std::size_t g = 0; g < a[i].groups.size(); ++g) {
      if (a[i].groups[g].queries != b[i].groups[g].queries || a[i].groups[g].keys != b[i].groups[g].keys) return false;
    }
  }
  return true;
}

// Membership, bijection and interlace stride of one axis partition.
void check_axis(SuiteResult& r, Index H, Index W, const PartitionSpec& spec, Axis axis) {
  const IndexGroups groups = build_groups(H, W, spec, axis);
  const Index lines = axis == Axis::kRow ? H : W;
  const Index per = axis == Axis::kRow ? spec.rows : spec.cols;
  const std::string tag = std::string(axis == Axis::kRow ? "row" : "column") + " groups H=" + std::to_string(H) +
                          " W=" + std::to_string(W) + " s=(" + std::to_string(spec.rows) + "," +
                          std::to_string(spec.cols) + ")" + (spec.interlaced ? " interlaced" : " contiguous");
  bool ok = groups.group_count() == lines / per;
  std::vector<int> seen(static_cast<std::size_t>(lines), 0);
  for (Index g = 0; ok && g < groups.group_count(); ++g) {
    const auto& members = groups.groups[static_cast<std::size_t>(g)];
    ok = static_cast<Index>(members.size()) == per;
    for (std::size_t k = 0; ok && k < members.size(); ++k) {
      const Index line = members[k];
      ok = line >= 0 && line < lines && line_group(line, lines, per, spec.interlaced) == g;
      if (ok) ++seen[static_cast<std::size_t>(line)];
      if (ok && k > 0) {
        const Index stride = spec.interlaced ? lines / per : 1;
        ok = line - members[k - 1] == stride;
      }
    }
  }
  ok = ok && std::all_of(seen.begin(), seen.end(), [](int n) { return n == 1; });
  r.expect(ok, tag + ": membership rule violated");

  std::vector<Index> tokens = groups.token_index(H, W);
  std::sort(tokens.begin(), tokens.end());
  std::vector<Index> all(static_cast<std::size_t>(H * W));
  std::iota(all.begin(), all.end(), Index{0});
  r.expect(tokens == all, tag + ": token lists are not a bijection");
}

template <typename T>
double compare_oracle(AttentionMode mode, Index h, Index w, Index c, int heads, Index s, int block_index, Rng& rng) {
  const auto params = make_attention_params<T>(c, heads, QkvKind::kSeparable, rng, 0.5);
  const Tensor<T> x = uniform_tensor<T>({2, h, w, c}, rng);
  AttentionConfig config{mode, PartitionSpec{s, s, true}, MaskPolicy::kApply};
  NoGradGuard no_grad;
  const Tensor<T> fast = attention_forward(constant(x), config, params, block_index).value();
  const Tensor<T> slow = oracle_attention(x, oracle_branches(mode, h, w, c, heads, config.spec, block_index), params);
  return static_cast<double>(max_abs_diff(fast, slow));
}

template <typename T>
void equiv_grid(SuiteResult& r, const EquivOptions& o, double tol) {
  Rng rng(o.seed);
  const auto& modes = o.modes.empty() ? all_modes() : o.modes;
  for (AttentionMode mode : modes) {
    const bool split = mode == AttentionMode::kPaleParallel || mode == AttentionMode::kAxial ||
                       mode == AttentionMode::kCrossShaped;
    const bool pale_free = mode == AttentionMode::kGlobal || mode == AttentionMode::kAxial;
    for (Index h : o.extents) {
      for (Index w : o.extents) {
        for (Index s : pale_free ? std::vector<Index>{1} : o.pales) {
          for (Index c : o.channels) {
            for (int heads : o.heads) {
              const int branch_heads = split ? heads / 2 : heads;
              const Index branch_c = split ? c / 2 : c;
              if (branch_heads < 1 || branch_c % branch_heads != 0 || c % heads != 0) continue;
              if (split && (c % 2 != 0 || heads % 2 != 0)) continue;
              const int blocks = mode == AttentionMode::kPaleSequential ? 2 : 1;
              for (int block = 0; block < blocks; ++block) {
                const double d = compare_oracle<T>(mode, h, w, c, heads, s, block, rng);
                r.worst = std::max(r.worst, d);
                r.expect(d <= tol, std::string(mode_name(mode)) + " vs oracle " + shape_tag(h, w, c, s, heads) +
                                       " block=" + std::to_string(block) + ": max |diff| " + num(d));
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void vanilla_whole_map(SuiteResult& r, std::uint64_t seed) {
  Rng rng(seed);
  for (Index h : {2, 3, 4, 6}) {
    for (Index w : {2, 4, 5}) {
      const auto params = make_attention_params<T>(8, 2, QkvKind::kSeparable, rng, 0.5);
      const Tensor<T> x = uniform_tensor<T>({2, h, w, 8}, rng);
      NoGradGuard no_grad;
      const auto a = ps_attention_vanilla(constant(x), PartitionSpec{h, w, true}, params).value();
      const auto b = global_attention(constant(x), params).value();
      const double d = static_cast<double>(max_abs_diff(a, b));
      r.expect(d <= 1e-6, "vanilla whole-map pale vs global h=" + std::to_string(h) + " w=" + std::to_string(w) +
                              ": max |diff| " + num(d));
    }
  }
}

struct PadCase {
  Index h, w, s;
};

// Extra padding that keeps the grouping of valid tokens: interlaced modes
// keep the group count N with a larger pale; contiguous stripes and single
// lines take whole extra stripes.
template <typename T>
double padding_gap(AttentionMode mode, const PadCase& pc, MaskPolicy policy, Rng& rng, int block_index) {
  const Index c = 8;
  const int heads = 2;
  const auto params = make_attention_params<T>(c, heads, QkvKind::kSeparable, rng, 0.5);
  const Tensor<T> x = uniform_tensor<T>({1, pc.h, pc.w, c}, rng);
  AttentionConfig base{mode, PartitionSpec{pc.s, pc.s, true}, policy};
  const PartitionSpec eff = effective_spec(mode, base.spec);

  Index H = pc.h + 3, W = pc.w + 3;
  PartitionSpec wider = base.spec;
  switch (mode) {
    case AttentionMode::kGlobal:
    case AttentionMode::kAxial: break;
    case AttentionMode::kCrossShaped:
      H = padded_extent(pc.h, eff.rows) + eff.rows;
      W = padded_extent(pc.w, eff.cols) + eff.cols;
      break;
    case AttentionMode::kPaleVanilla: {
      const Index n = std::max((pc.h + pc.s - 1) / pc.s, (pc.w + pc.s - 1) / pc.s);
      wider = PartitionSpec{pc.s + 1, pc.s + 2, true};
      H = n * wider.rows;
      W = n * wider.cols;
      break;
    }
    case AttentionMode::kPaleParallel:
    case AttentionMode::kPaleSequential: {
      const Index nr = (pc.h + pc.s - 1) / pc.s, nc = (pc.w + pc.s - 1) / pc.s;
      wider = PartitionSpec{pc.s + 1, pc.s + 2, true};
      H = nr * wider.rows;
      W = nc * wider.cols;
      break;
    }
  }
  AttentionConfig padded_config = base;
  padded_config.spec = wider;
  const PaddedMap<T> padded = pad_to_extent(x, H, W);
  NoGradGuard no_grad;
  const Tensor<T> direct = attention_forward(constant(x), base, params, block_index).value();
  const Tensor<T> via_pad = unpad(
      attention_forward(constant(padded.tensor), padded_config, params, block_index, &padded.mask).value(), pc.h,
      pc.w);
  return static_cast<double>(max_abs_diff(direct, via_pad));
}

template <typename T>
void padding_cases(SuiteResult& r, MaskPolicy policy, double tol) {
  Rng rng(23);
  const std::vector<PadCase> cases = {{8, 8, 7}, {5, 7, 2}, {9, 6, 4}, {13, 10, 3}, {6, 6, 2}, {7, 11, 5}};
  for (AttentionMode mode : all_modes()) {
    const int blocks = mode == AttentionMode::kPaleSequential ? 2 : 1;
    for (const PadCase& pc : cases) {
      for (int block = 0; block < blocks; ++block) {
        const double d = padding_gap<T>(mode, pc, policy, rng, block);
        r.worst = std::max(r.worst, d);
        r.expect(d <= tol, "padding independence violated: " + std::string(mode_name(mode)) + " h=" +
                               std::to_string(pc.h) + " w=" + std::to_string(pc.w) + " s=" + std::to_string(pc.s) +
                               " block=" + std::to_string(block) + ": max |diff| " + num(d));
      }
    }
  }
}

// ------------------------------------------------------------ gradients

using VarD = Var<double>;

VarD leaf(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return VarD::leaf(uniform_tensor<double>(shape, rng, lo, hi), true);
}

// Central-difference step, near the cube root of double epsilon.
constexpr double kGradStep = 1e-5;

void grad_case(SuiteResult& r, const std::string& name, const std::function<VarD()>& f, std::vector<VarD> inputs,
               double tol) {
  const GradCheckResult res = grad_check_outputs(f, inputs, kGradStep);
  r.worst = std::max(r.worst, res.max_rel_error);
  r.notes.push_back(name + ": max rel error " + num(res.max_rel_error) + " over " +
                    std::to_string(res.coordinates) + " coordinates");
  r.expect(res.max_rel_error < tol, name + ": max rel error " + num(res.max_rel_error) + " at input " +
                                        std::to_string(res.worst_input) + "[" + std::to_string(res.worst_index) +
                                        "] analytic " + num(res.worst_analytic) + " numeric " +
                                        num(res.worst_numeric));
}

// Key biases shift every score of a query by the same amount, so their
// gradient is identically zero; central differences there only measure
// roundoff. They are checked for an exact zero gradient instead.
bool is_key_bias(const std::string& name) { return name.ends_with("k.bias"); }

template <typename P>
std::vector<VarD> leaves_of(const P& params, const std::string& prefix, std::vector<VarD> extra) {
  NamedParams<double> named;
  params.collect(prefix, named);
  for (auto& [name, v] : named) {
    if (!is_key_bias(name)) extra.push_back(v);
  }
  return extra;
}

void expect_zero_key_bias_grad(SuiteResult& r, const std::string& tag, const NamedParams<double>& named,
                               const std::function<VarD()>& f) {
  for (const auto& [name, v] : named) VarD(v).zero_grad();
  const VarD out = f();
  Tensor<double> weights(out.shape());
  Rng rng(29);
  for (auto& x : weights.data()) x = 2.0 * uniform01(rng) - 1.0;
  backward(weighted_sum(out, weights));
  double worst = 0.0;
  for (const auto& [name, v] : named) {
    if (!is_key_bias(name) || !v.has_grad()) continue;
    for (double g : v.grad().data()) worst = std::max(worst, std::abs(g));
  }
  for (const auto& [name, v] : named) VarD(v).zero_grad();
  r.expect(worst < 1e-12, tag + ": key-bias gradient is not zero (" + num(worst) + ")");
}

// Weights and biases in [-scale, scale]; norm scales in [1 - scale, 1 + scale].
void randomize(const NamedParams<double>& named, Rng& rng, double scale) {
  for (const auto& [name, v] : named) {
    const double center = name.ends_with("gamma") ? 1.0 : 0.0;
    for (auto& x : VarD(v).mutable_value().data()) x = center + scale * (2.0 * uniform01(rng) - 1.0);
  }
}

void primitive_gradients(SuiteResult& r, double tol) {
  Rng rng(5);
  {
    VarD a = leaf({3, 4}, rng), b = leaf({4, 5}, rng);
    grad_case(r, "matmul", [=] { return matmul(a, b); }, {a, b}, tol);
  }
  {
    VarD x = leaf({2, 3, 5}, rng, -2, 2);
    static const std::uint8_t mask[5] = {1, 0, 1, 1, 0};
    grad_case(r, "softmax_lastdim (masked)", [=] { return softmax_lastdim(x, KeyMask(mask, 5)); }, {x}, tol);
  }
  {
    VarD a = leaf({3, 4}, rng), b = leaf({4, 6}, rng);
    grad_case(r, "softmax(matmul)", [=] { return softmax_lastdim(matmul(a, b)); }, {a, b}, tol);
  }
  {
    VarD x = leaf({2, 3, 6}, rng), g = leaf({6}, rng, 0.5, 1.5), b = leaf({6}, rng);
    grad_case(r, "layer_norm", [=] { return layer_norm(x, g, b, 1e-5); }, {x, g, b}, tol);
  }
  {
    VarD x = leaf({2, 5, 6, 3}, rng), k = leaf({3, 3, 3, 4}, rng), b = leaf({4}, rng);
    Conv2dOptions opt;
    opt.stride_h = opt.stride_w = 2;
    opt.pad_h = opt.pad_w = 1;
    grad_case(r, "conv2d dense stride 2", [=] { return conv2d(x, k, b, opt); }, {x, k, b}, tol);
  }
  {
    VarD x = leaf({1, 5, 5, 4}, rng), k = leaf({3, 3, 1, 4}, rng), b = leaf({4}, rng);
    Conv2dOptions opt;
    opt.pad_h = opt.pad_w = 1;
    opt.groups = 4;
    grad_case(r, "conv2d depthwise", [=] { return conv2d(x, k, b, opt); }, {x, k, b}, tol);
  }
  {
    VarD x = leaf({1, 4, 5, 4}, rng), k = leaf({3, 3, 2, 6}, rng);
    Conv2dOptions opt;
    opt.stride_w = 2;
    opt.pad_h = opt.pad_w = 1;
    opt.groups = 2;
    grad_case(r, "conv2d grouped", [=] { return conv2d(x, k, VarD(), opt); }, {x, k}, tol);
  }
  {
    VarD x = leaf({2, 3, 4}, rng), wt = leaf({4, 5}, rng), b = leaf({5}, rng);
    grad_case(r, "linear", [=] { return linear(x, wt, b); }, {x, wt, b}, tol);
  }
  {
    VarD x = leaf({3, 4}, rng, -3, 3);
    grad_case(r, "gelu", [=] { return gelu(x); }, {x}, tol);
  }
  {
    VarD a = leaf({2, 3}, rng), b = leaf({2, 3}, rng);
    grad_case(r, "add", [=] { return add(a, b); }, {a, b}, tol);
    grad_case(r, "mul", [=] { return mul(a, b); }, {a, b}, tol);
    grad_case(r, "scale", [=] { return scale(a, 0.7); }, {a}, tol);
    grad_case(r, "square", [=] { return square(a); }, {a}, tol);
  }
  {
    VarD x = leaf({2, 3, 4, 5}, rng);
    grad_case(r, "mean_pool_spatial", [=] { return mean_pool_spatial(x); }, {x}, tol);
    grad_case(r, "reshape", [=] { return reshape(x, Shape{6, 20}); }, {x}, tol);
  }
  {
    VarD a = leaf({1, 2, 2, 3}, rng), b = leaf({1, 2, 2, 5}, rng);
    grad_case(r, "concat_channels", [=] { return concat_channels(a, b); }, {a, b}, tol);
  }
  {
    VarD x = leaf({1, 2, 3, 6}, rng);
    grad_case(r, "split_channels", [=] {
      static const Index widths[3] = {2, 3, 1};
      auto parts = split_channels(x, std::span<const Index>(widths, 3));
      return concat_channels(parts[2], parts[0]);
    }, {x}, tol);
    grad_case(r, "split_channels_half", [=] {
      auto [lo, hi] = split_channels_half(x);
      return concat_channels(hi, lo);
    }, {x}, tol);
  }
  {
    VarD x = leaf({1, 3, 4, 2}, rng);
    grad_case(r, "pad_spatial", [=] { return pad_spatial(x, 2, 1); }, {x}, tol);
    grad_case(r, "crop_spatial", [=] { return crop_spatial(x, 2, 3); }, {x}, tol);
  }
  {
    VarD x = leaf({2, 3, 3, 2}, rng);
    static const Index idx[6] = {0, 4, 4, 8, 1, 2};
    grad_case(r, "gather_tokens (repeated)", [=] { return gather_tokens(x, std::span<const Index>(idx, 6), 2); },
              {x}, tol);
  }
  {
    VarD y = leaf({1, 2, 2, 3}, rng);
    static const Index idx[4] = {3, 0, 2, 1};
    grad_case(r, "scatter_tokens", [=] { return scatter_tokens(y, std::span<const Index>(idx, 4), 2, 2); }, {y},
              tol);
  }
  {
    VarD q = leaf({2, 3, 4, 4}, rng), k = leaf({2, 3, 5, 4}, rng), v = leaf({2, 3, 5, 4}, rng);
    static const std::uint8_t mask[15] = {1, 1, 0, 1, 0, 0, 0, 1, 0, 0, 1, 1, 1, 1, 1};
    grad_case(r, "grouped_attention (masked)", [=] { return grouped_attention(q, k, v, 2, KeyMask(mask, 15)); },
              {q, k, v}, tol);
  }
  {
    VarD z = leaf({4, 5}, rng, -2, 2);
    static const int labels[4] = {0, 3, 4, 1};
    grad_case(r, "cross_entropy", [=] { return cross_entropy(z, std::span<const int>(labels, 4)); }, {z}, tol);
    grad_case(r, "sum", [=] { return sum(z); }, {z}, tol);
  }
}

void attention_gradients(SuiteResult& r, double tol) {
  Rng rng(9);
  for (AttentionMode mode : all_modes()) {
    const int blocks = mode == AttentionMode::kPaleSequential ? 2 : 1;
    for (const auto& [h, w] : {std::pair<Index, Index>{4, 4}, {5, 3}}) {
      for (int block = 0; block < blocks; ++block) {
        const auto params = make_attention_params<double>(8, 2, QkvKind::kSeparable, rng, 0.5);
        VarD x = leaf({1, h, w, 8}, rng);
        const AttentionConfig config{mode, PartitionSpec{2, 2, true}, MaskPolicy::kApply};
        const std::string tag = std::string(mode_name(mode)) + " attention (" + std::to_string(h) + "," +
                                std::to_string(w) + ",8) block " + std::to_string(block);
        const auto f = [=] { return attention_forward(x, config, params, block); };
        grad_case(r, tag, f, leaves_of(params, "", {x}), tol);
        NamedParams<double> named;
        params.collect("", named);
        expect_zero_key_bias_grad(r, tag, named, f);
      }
    }
  }
}

void block_and_model_gradients(SuiteResult& r, double tol) {
  Rng rng(13);
  {
    const BlockParams<double> params = make_block_params<double>(8, 2, 2, QkvKind::kSeparable, rng, 0.3);
    NamedParams<double> all;
    params.collect("", all);
    randomize(all, rng, 0.4);
    auto leaves = leaves_of(params, "", {});
    VarD x = leaf({1, 4, 4, 8}, rng);
    leaves.insert(leaves.begin(), x);
    const AttentionConfig config{AttentionMode::kPaleParallel, PartitionSpec{2, 2, true}, MaskPolicy::kApply};
    const auto f = [=] { return pale_block(x, params, config, 0); };
    grad_case(r, "pale block (4,4,8)", f, leaves, tol);
    NamedParams<double> named;
    params.collect("", named);
    expect_zero_key_bias_grad(r, "pale block (4,4,8)", named, f);
  }
  {
    VariantConfig cfg = variant_config("tiny", 3);
    cfg.name = "gradcheck";
    const Index channels[4] = {4, 8, 8, 8};
    const Index strides[4] = {2, 2, 1, 1};
    const int depths[4] = {1, 1, 0, 0};
    for (std::size_t i = 0; i < 4; ++i) {
      cfg.stages[i] = StageConfig{strides[i], channels[i], 2, 2, 2, 2, depths[i]};
    }
    const Model<double> model = Model<double>::create(cfg, 3);
    randomize(model.named_parameters(), rng, 0.4);
    std::vector<VarD> leaves;
    for (const auto& [name, p] : model.named_parameters()) {
      if (!is_key_bias(name)) leaves.push_back(p);
    }
    const VarD images = VarD::leaf(uniform_tensor<double>({2, 8, 8, 3}, rng), false);
    static const int labels[2] = {0, 2};
    grad_case(r, "two-stage model end to end",
              [=] { return cross_entropy(model.forward(images), std::span<const int>(labels, 2)); }, leaves, tol);
  }
}

// --------------------------------------------------------------- flops

template <typename T>
FlopTrace trace_attention(AttentionMode mode, Index h, Index w, Index c, int heads, const PartitionSpec& spec,
                          int block_index, QkvKind kind, Rng& rng) {
  const auto params = make_attention_params<T>(c, heads, kind, rng);
  const Tensor<T> x = uniform_tensor<T>({1, h, w, c}, rng);
  FlopTrace trace;
  NoGradGuard no_grad;
  TraceScope scope(trace);
  attention_forward(constant(x), AttentionConfig{mode, spec, MaskPolicy::kApply}, params, block_index);
  return trace;
}

}  // namespace

void SuiteResult::expect(bool ok, const std::string& what) {
  ++checks;
  if (!ok) failures.push_back(what);
}

SuiteResult run_partition_suite(Index max_extent, Index max_pale) {
  SuiteResult r;
  r.name = "partition";
  std::set<std::tuple<Index, Index, Index, Index>> done;
  for (Index h = 1; h <= max_extent; ++h) {
    for (Index w = 1; w <= max_extent; ++w) {
      for (Index sr = 1; sr <= max_pale; ++sr) {
        for (Index sc = 1; sc <= max_pale; ++sc) {
          const Index H = padded_extent(h, sr), W = padded_extent(w, sc);
          if (!done.insert({H, W, sr, sc}).second) continue;
          for (bool interlaced : {true, false}) {
            const PartitionSpec spec{sr, sc, interlaced};
            check_axis(r, H, W, spec, Axis::kRow);
            check_axis(r, H, W, spec, Axis::kColumn);
          }
          const PartitionSpec spec{sr, sc, true};
          const Index nr = H / sr, nc = W / sc;
          const Index expected = pale_token_count(H, W, sr, sc);
          for (const auto& [gr, gc] : {std::pair<Index, Index>{0, 0}, {nr - 1, nc - 1}, {nr / 2, nc / 2}}) {
            const Index brute = brute_force_pale_size(H, W, spec, gr, gc);
            r.expect(brute == expected, "pale_token_count(" + std::to_string(H) + "," + std::to_string(W) + "," +
                                            std::to_string(sr) + "," + std::to_string(sc) + ") = " +
                                            std::to_string(expected) + " but the union has " +
                                            std::to_string(brute) + " tokens");
          }
        }
      }
    }
  }
  for (Index h = 1; h <= max_extent; ++h) {
    for (Index w = 1; w <= max_extent; ++w) {
      const std::string tag = " at h=" + std::to_string(h) + " w=" + std::to_string(w);
      const PartitionSpec axial = effective_spec(AttentionMode::kAxial, PartitionSpec{7, 7, true});
      const PartitionSpec unit{1, 1, true};
      for (Axis axis : {Axis::kRow, Axis::kColumn}) {
        const IndexGroups a = build_groups(h, w, axial, axis);
        const IndexGroups p = build_groups(h, w, unit, axis);
        const IndexGroups stripes = build_groups(h, w, PartitionSpec{1, 1, false}, axis);
        bool single = true;
        for (std::size_t g = 0; g < a.groups.size(); ++g) {
          single = single && a.groups[g] == std::vector<Index>{static_cast<Index>(g)};
        }
        r.expect(same_groups(a, p) && same_groups(a, stripes) && single,
                 "axial groups differ from pale(1,1) groups" + tag);
      }
      r.expect(same_branches(oracle_branches(AttentionMode::kAxial, h, w, 8, 2, PartitionSpec{7, 7, true}),
                             oracle_branches(AttentionMode::kPaleParallel, h, w, 8, 2, unit)),
               "axial attention groups differ from pale_parallel(1,1)" + tag);
    }
  }
  return r;
}

SuiteResult run_equiv_suite(const EquivOptions& options) {
  SuiteResult r;
  r.name = std::string("equiv-") + std::string(precision_name(options.precision));
  const double tol = options.tolerance > 0 ? options.tolerance : (options.precision == Precision::kF32 ? 1e-5 : 1e-10);
  if (options.precision == Precision::kF32) {
    equiv_grid<float>(r, options, tol);
    vanilla_whole_map<float>(r, options.seed);
  } else {
    equiv_grid<double>(r, options, tol);
    vanilla_whole_map<double>(r, options.seed);
  }
  r.notes.push_back("max |fast - oracle| = " + num(r.worst) + " (tolerance " + num(tol) + ")");
  return r;
}

SuiteResult run_padding_suite(Precision precision, MaskPolicy policy, double tolerance) {
  SuiteResult r;
  r.name = std::string("padding-") + std::string(precision_name(precision));
  if (precision == Precision::kF32) {
    padding_cases<float>(r, policy, tolerance);
  } else {
    padding_cases<double>(r, policy, tolerance);
  }
  r.notes.push_back("max |direct - padded| = " + num(r.worst) + " (tolerance " + num(tolerance) + ")");
  return r;
}

SuiteResult run_gradcheck_suite(double tolerance) {
  SuiteResult r;
  r.name = "gradcheck";
  primitive_gradients(r, tolerance);
  attention_gradients(r, tolerance);
  block_and_model_gradients(r, tolerance);
  r.notes.push_back("max rel error overall = " + num(r.worst) + " (tolerance " + num(tolerance) + ")");
  return r;
}

SuiteResult run_flops_suite() {
  SuiteResult r;
  r.name = "flops";
  Rng rng(17);
  auto record = [&](const TraceComparison& cmp, const std::string& tag) {
    if (!cmp.all_match()) r.worst += 1;
    r.expect(cmp.all_match(), tag + " trace mismatch:\n" + cmp.describe());
  };

  for (Index h : {8, 14, 16}) {
    for (Index w : {8, 14, 16}) {
      for (Index c : {16, 32}) {
        for (Index s : {1, 2, 7}) {
          const std::string tag = "pale_parallel h=" + std::to_string(h) + " w=" + std::to_string(w) + " c=" +
                                  std::to_string(c) + " s=" + std::to_string(s);
          const PartitionSpec spec{s, s, true};
          const FlopReport analytic =
              flops_attention(AttentionMode::kPaleParallel, h, w, c, spec, 0, QkvKind::kSeparable);
          const Index H = analytic.h, W = analytic.w;
          const std::int64_t closed = 4 * H * W * c * c + H * W * c * (s * H + s * W + 27);
          r.expect(analytic.total() == closed && analytic == flops_pale_attention(H, W, c, s, s),
                   tag + ": term sum differs from the closed form");
          record(verify_against_trace(
                     analytic, trace_attention<float>(AttentionMode::kPaleParallel, h, w, c, 2, spec, 0,
                                                      QkvKind::kSeparable, rng)),
                 tag);
        }
        const std::string tag =
            "global h=" + std::to_string(h) + " w=" + std::to_string(w) + " c=" + std::to_string(c);
        const FlopReport analytic = flops_global_attention(h, w, c);
        r.expect(analytic.total() == 4 * h * w * c * c + 2 * c * (h * w) * (h * w),
                 tag + ": term sum differs from the closed form");
        record(verify_against_trace(analytic, trace_attention<float>(AttentionMode::kGlobal, h, w, c, 2, {}, 0,
                                                                     QkvKind::kLinear, rng)),
               tag);
      }
    }
  }

  for (AttentionMode mode : all_modes()) {
    for (const auto& [h, w] : {std::pair<Index, Index>{8, 8}, {9, 6}, {5, 12}}) {
      for (int block = 0; block < 2; ++block) {
        const PartitionSpec spec{3, 2, true};
        const std::string tag = std::string(mode_name(mode)) + " h=" + std::to_string(h) + " w=" +
                                std::to_string(w) + " block=" + std::to_string(block);
        record(verify_against_trace(
                   flops_attention(mode, h, w, 16, spec, block, QkvKind::kSeparable),
                   trace_attention<float>(mode, h, w, 16, 2, spec, block, QkvKind::kSeparable, rng)),
               tag);
      }
    }
  }

  {
    const FlopTrace trace = trace_attention<float>(AttentionMode::kPaleParallel, 8, 8, 16, 2, PartitionSpec{2, 2, true},
                                                   0, QkvKind::kSeparable, rng);
    const TraceComparison wrong = verify_against_trace(flops_pale_attention(8, 8, 16, 4, 4), trace);
    r.expect(!wrong.all_match(), "a mismatched pale size was not flagged");
  }

  for (AttentionMode mode : all_modes()) {
    VariantConfig cfg = variant_config("tiny", 10);
    cfg.mode = mode;
    const Model<float> model = Model<float>::create(cfg, 1);
    FlopTrace trace;
    {
      NoGradGuard no_grad;
      TraceScope scope(trace);
      model.forward(constant(uniform_tensor<float>({2, 40, 36, 3}, rng)));
    }
    const ModelFlopReport report = model_flops(cfg, 40, 36);
    bool ok = true;
    for (const LayerFlops& layer : report.layers) {
      const OpCounts got = trace.under(layer.name);
      ok = ok && got.multiply_adds() == 2 * layer.multiply_adds && got[OpKind::kNorm] == 2 * layer.norm_ops &&
           got[OpKind::kSoftmax] == 2 * layer.softmax_ops && got[OpKind::kElementwise] == 2 * layer.elementwise_ops;
    }
    r.expect(ok && trace.total().multiply_adds() == 2 * report.multiply_adds(),
             std::string("model_flops disagrees with the traced tiny model in mode ") + std::string(mode_name(mode)));
  }

  for (Index h : {8, 16, 28}) {
    for (Index w : {8, 14, 28}) {
      for (Index c : {16, 64}) {
        for (Index s : {1, 2, 7}) {
          if (h % s != 0 || w % s != 0) continue;
          const auto base = flops_pale_attention(h, w, c, s, s).total();
          const std::string tag = "h=" + std::to_string(h) + " w=" + std::to_string(w) + " c=" + std::to_string(c) +
                                  " s=" + std::to_string(s);
          r.expect(flops_pale_attention(h + s, w, c, s, s).total() > base &&
                       flops_pale_attention(h, w + s, c, s, s).total() > base &&
                       flops_pale_attention(h, w, c + 1, s, s).total() > base,
                   "pale FLOPs not increasing in h, w, c at " + tag);
          if (h % (s + 1) == 0) {
            r.expect(flops_pale_attention(h, w, c, s + 1, s).total() > base, "pale FLOPs not increasing in s_r at " + tag);
          }
          if (w % (s + 1) == 0) {
            r.expect(flops_pale_attention(h, w, c, s, s + 1).total() > base, "pale FLOPs not increasing in s_c at " + tag);
          }
          if (2 * h * w > s * h + s * w + 27) {
            r.expect(base < flops_global_attention(h, w, c).total(), "pale not cheaper than global at " + tag);
          }
        }
      }
    }
  }
  r.notes.push_back("trace mismatches: " + num(r.worst));
  return r;
}

std::string describe(const SuiteResult& result) {
  std::ostringstream os;
  os << result.name << ": " << (result.passed() ? "PASS" : "FAIL") << " (" << result.checks << " checks, "
     << result.failures.size() << " failures)\n";
  for (const auto& n : result.notes) os << "  " << n << '\n';
  const std::size_t shown = std::min<std::size_t>(result.failures.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) os << "  FAILED " << result.failures[i] << '\n';
  if (shown < result.failures.size()) os << "  ... " << result.failures.size() - shown << " more\n";
  return os.str();
}

}  // namespace pale::harness
