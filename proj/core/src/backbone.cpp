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

#include "pale/backbone.hpp"

#include <algorithm>
#include <cctype>

#include "pale/flop_trace.hpp"
#include "pale/ops.hpp"

namespace pale {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

constexpr double kInitStd = 0.02;

template <typename T>
Var<T> ones(Index n) {
  return parameter(Tensor<T>({n}, T{1}));
}

template <typename T>
Var<T> zeros(Index n) {
  return parameter(Tensor<T>({n}));
}

}  // namespace

void VariantConfig::validate() const {
  require(in_channels >= 1 && num_classes >= 1, "variant: in_channels and num_classes must be positive");
  require(norm_eps >= 0.0, "variant: negative norm eps");
  for (int i = 0; i < kStageCount; ++i) {
    const StageConfig& s = stages[static_cast<std::size_t>(i)];
    const std::string where = "variant stage " + std::to_string(i + 1) + ": ";
    require(s.stride >= 1, where + "stride must be >= 1");
    require(s.channels >= 1 && s.heads >= 1 && s.channels % s.heads == 0, where + "heads must divide channels");
    require(s.pale_rows >= 1 && s.pale_cols >= 1, where + "pale size must be >= 1");
    require(s.mlp_ratio >= 1, where + "mlp ratio must be >= 1");
    require(s.depth >= 0, where + "negative depth");
    const bool split = mode == AttentionMode::kPaleParallel || mode == AttentionMode::kAxial ||
                       mode == AttentionMode::kCrossShaped;
    if (split && s.depth > 0) {
      require(s.channels % 2 == 0 && s.heads % 2 == 0, where + "channel-split modes need even channels and heads");
    }
  }
}

Index VariantConfig::total_stride() const {
  Index total = 1;
  for (const auto& s : stages) total *= s.stride;
  return total;
}

VariantConfig variant_config(std::string_view name, Index num_classes) {
  std::string key(name);
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (key.starts_with("pale-")) key = key.substr(5);

  VariantConfig cfg;
  cfg.num_classes = num_classes;
  std::array<Index, 4> dims{};
  std::array<int, 4> heads{};
  std::array<int, 4> depths{2, 2, 16, 2};
  std::array<Index, 4> pale{7, 7, 7, 7};
  if (key == "t") {
    cfg.name = "T";
    dims = {64, 128, 256, 512};
    heads = {2, 4, 8, 16};
  } else if (key == "s") {
    cfg.name = "S";
    dims = {96, 192, 384, 768};
    heads = {2, 4, 8, 16};
  } else if (key == "b") {
    cfg.name = "B";
    dims = {128, 256, 512, 1024};
    heads = {4, 8, 16, 32};
  } else if (key == "tiny") {
    cfg.name = "tiny";
    dims = {16, 32, 64, 128};
    heads = {2, 2, 4, 4};
    depths = {1, 1, 2, 1};
    pale = {4, 4, 2, 2};
  } else {
    throw ShapeError("unknown variant '" + std::string(name) + "' (expected T, S, B or tiny)");
  }
  const std::array<Index, 4> strides{4, 2, 2, 2};
  for (std::size_t i = 0; i < 4; ++i) {
    cfg.stages[i] = StageConfig{strides[i], dims[i], pale[i], pale[i], heads[i], 4, depths[i]};
  }
  cfg.validate();
  return cfg;
}

Index merge_kernel(Index stride) { return 2 * stride - 1; }

Conv2dOptions merge_conv_options(Index stride) {
  Conv2dOptions opt;
  opt.stride_h = opt.stride_w = stride;
  opt.pad_h = opt.pad_w = stride - 1;
  return opt;
}

template <typename T>
void BlockParams<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  out.emplace_back(prefix + "cpe.weight", cpe_weight);
  out.emplace_back(prefix + "cpe.bias", cpe_bias);
  out.emplace_back(prefix + "norm1.gamma", norm1_gamma);
  out.emplace_back(prefix + "norm1.beta", norm1_beta);
  attn.collect(prefix + "attn.", out);
  out.emplace_back(prefix + "norm2.gamma", norm2_gamma);
  out.emplace_back(prefix + "norm2.beta", norm2_beta);
  out.emplace_back(prefix + "mlp.fc1.weight", fc1_weight);
  out.emplace_back(prefix + "mlp.fc1.bias", fc1_bias);
  out.emplace_back(prefix + "mlp.fc2.weight", fc2_weight);
  out.emplace_back(prefix + "mlp.fc2.bias", fc2_bias);
}

template <typename T>
BlockParams<T> make_block_params(Index channels, int heads, Index mlp_ratio, QkvKind qkv, Rng& rng, double std) {
  require(channels >= 1 && mlp_ratio >= 1, "make_block_params: channels and mlp ratio must be positive");
  BlockParams<T> bp;
  const Index c = channels, hidden = channels * mlp_ratio;
  bp.cpe_weight = parameter(truncated_normal<T>({3, 3, 1, c}, std, rng));
  bp.cpe_bias = zeros<T>(c);
  bp.norm1_gamma = ones<T>(c);
  bp.norm1_beta = zeros<T>(c);
  bp.attn = make_attention_params<T>(c, heads, qkv, rng, std);
  bp.norm2_gamma = ones<T>(c);
  bp.norm2_beta = zeros<T>(c);
  bp.fc1_weight = parameter(truncated_normal<T>({c, hidden}, std, rng));
  bp.fc1_bias = zeros<T>(hidden);
  bp.fc2_weight = parameter(truncated_normal<T>({hidden, c}, std, rng));
  bp.fc2_bias = zeros<T>(c);
  return bp;
}

template <typename T>
Var<T> cpe(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  require(x.value().rank() == 4, "cpe: input must be (b, h, w, c)");
  Conv2dOptions opt;
  opt.pad_h = opt.pad_w = 1;
  opt.groups = x.dim(3);
  return add(x, conv2d(x, weight, bias, opt));
}

template <typename T>
Var<T> mlp(const Var<T>& x, const BlockParams<T>& params) {
  const Index c = x.dim(-1);
  require(params.fc1_weight.value().rank() == 2 && params.fc1_weight.dim(0) == c,
          "mlp: expand weight does not match the input width");
  require(params.fc2_weight.dim(0) == params.fc1_weight.dim(1) && params.fc2_weight.dim(1) == c,
          "mlp: contract weight must map the hidden width back to the input width");
  return linear(gelu(linear(x, params.fc1_weight, params.fc1_bias)), params.fc2_weight, params.fc2_bias);
}

template <typename T>
Var<T> pale_block(const Var<T>& x, const BlockParams<T>& params, const AttentionConfig& attention, int block_index,
                  double norm_eps) {
  Var<T> y;
  {
    TraceLabel label("cpe");
    y = cpe(x, params.cpe_weight, params.cpe_bias);
  }
  {
    TraceLabel label("attn");
    Var<T> normed = layer_norm(y, params.norm1_gamma, params.norm1_beta, norm_eps);
    y = add(y, attention_forward(normed, attention, params.attn, block_index));
  }
  {
    TraceLabel label("mlp");
    Var<T> normed = layer_norm(y, params.norm2_gamma, params.norm2_beta, norm_eps);
    y = add(y, mlp(normed, params));
  }
  // Stochastic depth would drop the residual branches here; it is not used.
  return y;
}

template <typename T>
Var<T> patch_merge(const Var<T>& x, const StageParams<T>& params, Index stride, double norm_eps) {
  Var<T> y = conv2d(x, params.merge_weight, params.merge_bias, merge_conv_options(stride));
  return layer_norm(y, params.merge_gamma, params.merge_beta, norm_eps);
}

template <typename T>
Model<T> Model<T>::create(const VariantConfig& config, std::uint64_t seed) {
  config.validate();
  Model<T> m;
  m.config_ = config;
  Rng rng(seed);
  Index in_ch = config.in_channels;
  for (const StageConfig& sc : config.stages) {
    StageParams<T> sp;
    const Index k = merge_kernel(sc.stride);
    sp.merge_weight = parameter(truncated_normal<T>({k, k, in_ch, sc.channels}, kInitStd, rng));
    sp.merge_bias = zeros<T>(sc.channels);
    sp.merge_gamma = ones<T>(sc.channels);
    sp.merge_beta = zeros<T>(sc.channels);
    for (int b = 0; b < sc.depth; ++b) {
      sp.blocks.push_back(make_block_params<T>(sc.channels, sc.heads, sc.mlp_ratio, config.qkv, rng, kInitStd));
    }
    m.stages_.push_back(std::move(sp));
    in_ch = sc.channels;
  }
  m.norm_gamma_ = ones<T>(in_ch);
  m.norm_beta_ = zeros<T>(in_ch);
  m.head_weight_ = parameter(truncated_normal<T>({in_ch, config.num_classes}, kInitStd, rng));
  m.head_bias_ = zeros<T>(config.num_classes);
  return m;
}

template <typename T>
Var<T> Model<T>::run_stages(const Var<T>& images, std::vector<Var<T>>* outputs) const {
  require(images.value().rank() == 4, "forward: images must be (b, h, w, c), got " + shape_to_string(images.shape()));
  require(images.dim(3) == config_.in_channels, "forward: expected " + std::to_string(config_.in_channels) +
                                                    " input channels, got " + std::to_string(images.dim(3)));
  const Index min_extent = config_.total_stride();
  require(images.dim(0) >= 1 && images.dim(1) >= min_extent && images.dim(2) >= min_extent,
          "forward: spatial extents must be >= " + std::to_string(min_extent));
  Var<T> x = images;
  for (int i = 0; i < kStageCount; ++i) {
    const StageConfig& sc = config_.stages[static_cast<std::size_t>(i)];
    const StageParams<T>& sp = stages_[static_cast<std::size_t>(i)];
    TraceLabel stage_label("stage" + std::to_string(i + 1));
    {
      TraceLabel label("merge");
      x = patch_merge(x, sp, sc.stride, config_.norm_eps);
    }
    AttentionConfig attention;
    attention.mode = config_.mode;
    attention.spec = PartitionSpec{sc.pale_rows, sc.pale_cols, true};
    for (std::size_t b = 0; b < sp.blocks.size(); ++b) {
      TraceLabel label("block" + std::to_string(b));
      x = pale_block(x, sp.blocks[b], attention, static_cast<int>(b), config_.norm_eps);
    }
    if (outputs) outputs->push_back(x);
  }
  return x;
}

template <typename T>
Var<T> Model<T>::forward(const Var<T>& images) const {
  Var<T> x = run_stages(images, nullptr);
  TraceLabel label("head");
  x = layer_norm(x, norm_gamma_, norm_beta_, config_.norm_eps);
  x = mean_pool_spatial(x);
  x = reshape(x, Shape{x.dim(0), x.dim(3)});
  return linear(x, head_weight_, head_bias_);
}

template <typename T>
std::vector<Var<T>> Model<T>::stage_outputs(const Var<T>& images) const {
  std::vector<Var<T>> out;
  run_stages(images, &out);
  return out;
}

template <typename T>
NamedParams<T> Model<T>::named_parameters() const {
  NamedParams<T> out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const std::string prefix = "stage" + std::to_string(i + 1) + ".";
    const auto& sp = stages_[i];
    out.emplace_back(prefix + "merge.weight", sp.merge_weight);
    out.emplace_back(prefix + "merge.bias", sp.merge_bias);
    out.emplace_back(prefix + "merge.norm.gamma", sp.merge_gamma);
    out.emplace_back(prefix + "merge.norm.beta", sp.merge_beta);
    for (std::size_t b = 0; b < sp.blocks.size(); ++b) {
      sp.blocks[b].collect(prefix + "block" + std::to_string(b) + ".", out);
    }
  }
  out.emplace_back("norm.gamma", norm_gamma_);
  out.emplace_back("norm.beta", norm_beta_);
  out.emplace_back("head.weight", head_weight_);
  out.emplace_back("head.bias", head_bias_);
  return out;
}

template <typename T>
Index Model<T>::parameter_count() const {
  Index n = 0;
  for (const auto& [_, p] : named_parameters()) n += p.value().numel();
  return n;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& [_, p] : named_parameters()) p.zero_grad();
}

Model<float> init_variant(std::string_view name, Index num_classes, std::uint64_t seed) {
  return Model<float>::create(variant_config(name, num_classes), seed);
}

#define PALE_INSTANTIATE_BACKBONE(T)                                                                      \
  template struct BlockParams<T>;                                                                         \
  template BlockParams<T> make_block_params<T>(Index, int, Index, QkvKind, Rng&, double);                 \
  template Var<T> cpe(const Var<T>&, const Var<T>&, const Var<T>&);                                       \
  template Var<T> mlp(const Var<T>&, const BlockParams<T>&);                                              \
  template Var<T> pale_block(const Var<T>&, const BlockParams<T>&, const AttentionConfig&, int, double);  \
  template Var<T> patch_merge(const Var<T>&, const StageParams<T>&, Index, double);                       \
  template class Model<T>;

PALE_INSTANTIATE_BACKBONE(float)
PALE_INSTANTIATE_BACKBONE(double)

#undef PALE_INSTANTIATE_BACKBONE

}  // namespace pale
