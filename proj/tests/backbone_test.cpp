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

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "pale/backbone.hpp"
#include "pale/checkpoint.hpp"
#include "pale/complexity.hpp"
#include "pale/grad_check.hpp"
#include "pale/harness/verify.hpp"
#include "test_support.hpp"

namespace pale {
namespace {

using testing::random_tensor;

BlockParams<double> zero_block(Index c, int heads) {
  Rng rng(1);
  auto p = make_block_params<double>(c, heads, 4, QkvKind::kSeparable, rng);
  NamedParams<double> named;
  p.collect("", named);
  for (auto& [name, var] : named) {
    if (name.find("norm") == std::string::npos) var.mutable_value().fill(0.0);
  }
  return p;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("pale_backbone_test_" + name);
}

std::vector<char> file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(CpeTest, ZeroKernelIsIdentity) {
  const auto x = random_tensor<float>({1, 5, 4, 6}, 1);
  EXPECT_EQ(cpe(constant(x), constant(Tensor<float>({3, 3, 1, 6})), constant(Tensor<float>({6}))).value(), x);
}

TEST(CpeTest, CenterTapDoubles) {
  const auto x = random_tensor<double>({1, 5, 4, 3}, 2);
  Tensor<double> w({3, 3, 1, 3});
  for (Index c = 0; c < 3; ++c) w[4 * 3 + c] = 1.0;
  const auto y = cpe(constant(x), constant(w), constant(Tensor<double>({3}))).value();
  for (Index i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], 2.0 * x[i]);
}

TEST(CpeTest, AnySpatialSize) {
  const auto y = cpe(constant(Tensor<float>({1, 13, 9, 32})), constant(Tensor<float>({3, 3, 1, 32})),
                     constant(Tensor<float>({32})));
  EXPECT_EQ(y.shape(), (Shape{1, 13, 9, 32}));
}

TEST(MlpTest, HiddenWidthFollowsRatio) {
  Rng rng(1);
  const auto p = make_block_params<float>(8, 2, 4, QkvKind::kSeparable, rng);
  EXPECT_EQ(p.fc1_weight.shape(), (Shape{8, 32}));
  EXPECT_EQ(p.fc2_weight.shape(), (Shape{32, 8}));
}

TEST(MlpTest, ZeroWeightsGiveZero) {
  const auto p = zero_block(8, 2);
  const auto y = mlp(constant(random_tensor<double>({1, 3, 3, 8}, 3)), p).value();
  for (Index i = 0; i < y.numel(); ++i) EXPECT_EQ(y[i], 0.0);
}

TEST(MlpTest, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  auto p = make_block_params<double>(4, 2, 2, QkvKind::kSeparable, rng, 0.5);
  Var<double> in[3] = {testing::random_leaf<double>({1, 2, 3, 4}, 4), p.fc1_weight, p.fc2_weight};
  EXPECT_LT(grad_check_outputs([&] { return mlp(in[0], p); }, in).max_rel_error, 1e-6);
}

TEST(BlockTest, ZeroBranchesMakeIdentity) {
  const auto p = zero_block(8, 2);
  const auto x = random_tensor<double>({2, 4, 6, 8}, 5);
  for (AttentionMode mode : all_modes()) {
    EXPECT_EQ(pale_block(constant(x), p, {mode, {2, 2, true}}, 0).value(), x) << mode_name(mode);
  }
}

TEST(BlockTest, PreservesShape) {
  Rng rng(3);
  const auto p = make_block_params<float>(64, 2, 4, QkvKind::kSeparable, rng);
  const auto y = pale_block(constant(random_tensor<float>({2, 14, 14, 64}, 6)), p, {}, 0);
  EXPECT_EQ(y.shape(), (Shape{2, 14, 14, 64}));
}

TEST(BlockTest, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  auto p = make_block_params<double>(8, 2, 2, QkvKind::kSeparable, rng, 0.3);
  Var<double> in[4] = {testing::random_leaf<double>({1, 4, 4, 8}, 7), p.cpe_weight, p.attn.q.pointwise,
                       p.fc1_weight};
  const auto r = grad_check_outputs([&] { return pale_block(in[0], p, {AttentionMode::kPaleParallel, {2, 2, true}}, 0); },
                                    in, 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(BlockTest, StageOfZeroBlocksIsIdentity) {
  const auto p = zero_block(8, 2);
  const auto x = random_tensor<double>({1, 4, 4, 8}, 8);
  Var<double> y = constant(x);
  for (int b = 0; b < 4; ++b) y = pale_block(y, p, {AttentionMode::kPaleSequential, {2, 2, true}}, b);
  EXPECT_EQ(y.value(), x);
}

TEST(VariantTest, TableValues) {
  const VariantConfig t = variant_config("T");
  EXPECT_EQ(t.stages[2].depth, 16);
  EXPECT_EQ(t.stages[2].channels, 256);
  EXPECT_EQ(t.stages[2].heads, 8);
  const VariantConfig b = variant_config("B");
  EXPECT_EQ(b.stages[3].heads, 32);
  EXPECT_EQ(b.stages[3].channels, 1024);
  for (const char* name : {"T", "S", "B"}) {
    const VariantConfig c = variant_config(name);
    for (int i = 0; i < kStageCount; ++i) {
      const StageConfig& s = c.stages[static_cast<std::size_t>(i)];
      EXPECT_EQ(s.pale_rows, 7);
      EXPECT_EQ(s.mlp_ratio, 4);
      EXPECT_EQ(s.channels % s.heads, 0);
      if (i > 0) {
        EXPECT_EQ(s.channels, 2 * c.stages[static_cast<std::size_t>(i - 1)].channels);
      }
    }
    EXPECT_EQ(c.total_stride(), 32);
  }
  EXPECT_THROW(variant_config("XL"), ShapeError);
}

TEST(VariantTest, InitMatchesConfigAndAnalyticCount) {
  const Model<float> m = init_variant("T", 1000, 1);
  EXPECT_EQ(m.stage(2).blocks.size(), 16u);
  EXPECT_EQ(m.stage(2).blocks[0].attn.heads, 8);
  EXPECT_EQ(m.stage(2).blocks[0].attn.channels, 256);
  EXPECT_EQ(m.parameter_count(), model_params(m.config()).total);
  EXPECT_EQ(checkpoint_from_model(m).value_count(), model_params(m.config()).total);
}

TEST(PatchMergeTest, StageShapes) {
  const Model<float> m = Model<float>::create(variant_config("T"), 2);
  auto y = patch_merge(constant(Tensor<float>({1, 224, 224, 3})), m.stage(0), 4);
  EXPECT_EQ(y.shape(), (Shape{1, 56, 56, 64}));
  y = patch_merge(y, m.stage(1), 2);
  EXPECT_EQ(y.shape(), (Shape{1, 28, 28, 128}));
  y = patch_merge(y, m.stage(2), 2);
  EXPECT_EQ(y.shape(), (Shape{1, 14, 14, 256}));
}

TEST(ModelTest, StageOutputsFollowStrides) {
  const Model<float> m = Model<float>::create(variant_config("tiny", 10), 3);
  const auto outs = m.stage_outputs(constant(random_tensor<float>({1, 64, 96, 3}, 9)));
  ASSERT_EQ(outs.size(), 4u);
  for (int i = 0; i < 4; ++i) {
    const Index stride = 4 << i;
    EXPECT_EQ(outs[static_cast<std::size_t>(i)].shape(),
              (Shape{1, 64 / stride, 96 / stride, m.config().stages[static_cast<std::size_t>(i)].channels}));
  }
}

TEST(ModelTest, LogitShapeAndNonSquareInput) {
  const Model<float> m = Model<float>::create(variant_config("tiny", 1000), 4);
  const auto logits = m.forward(constant(random_tensor<float>({2, 224, 160, 3}, 10)));
  EXPECT_EQ(logits.shape(), (Shape{2, 1000}));
  EXPECT_TRUE(logits.value().all_finite());
}

TEST(ModelTest, DeterministicAndBatchSeparable) {
  const Model<double> m = Model<double>::create(variant_config("tiny", 5), 5);
  const auto images = random_tensor<double>({3, 32, 32, 3}, 11);
  const auto batch = m.forward(constant(images)).value();
  EXPECT_TRUE(bitwise_equal(batch, m.forward(constant(images)).value()));
  const Index per = 32 * 32 * 3;
  for (Index b = 0; b < 3; ++b) {
    Tensor<double> one({1, 32, 32, 3});
    for (Index i = 0; i < per; ++i) one[i] = images[b * per + i];
    const auto single = m.forward(constant(one)).value();
    for (Index k = 0; k < 5; ++k) EXPECT_NEAR(single[k], batch[b * 5 + k], 1e-13);
  }
}

TEST(ModelTest, BatchPermutationPermutesLogits) {
  const Model<float> m = Model<float>::create(variant_config("tiny", 4), 6);
  const auto images = random_tensor<float>({2, 32, 32, 3}, 12);
  const Index per = 32 * 32 * 3;
  Tensor<float> swapped(images.shape());
  for (Index i = 0; i < per; ++i) {
    swapped[i] = images[per + i];
    swapped[per + i] = images[i];
  }
  const auto a = m.forward(constant(images)).value();
  const auto b = m.forward(constant(swapped)).value();
  for (Index k = 0; k < 4; ++k) {
    EXPECT_NEAR(a[k], b[4 + k], 1e-6);
    EXPECT_NEAR(a[4 + k], b[k], 1e-6);
  }
}

TEST(ModelTest, TwoStageEndToEndGradient) {
  const harness::SuiteResult r = harness::run_gradcheck_suite();
  EXPECT_TRUE(r.passed()) << harness::describe(r);
}

TEST(CheckpointTest, SameSeedSameBytes) {
  const auto a = encode_checkpoint(checkpoint_from_model(init_variant("tiny", 10, 7)));
  const auto b = encode_checkpoint(checkpoint_from_model(init_variant("tiny", 10, 7)));
  const auto c = encode_checkpoint(checkpoint_from_model(init_variant("tiny", 10, 8)));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(CheckpointTest, HeaderLayout) {
  const auto bytes = encode_checkpoint(checkpoint_from_model(init_variant("tiny", 10, 1)));
  ASSERT_GT(bytes.size(), 12u);
  EXPECT_EQ(static_cast<char>(bytes[0]), 'P');
  EXPECT_EQ(static_cast<char>(bytes[3]), 'E');
  EXPECT_EQ(static_cast<int>(bytes[4]), 1);
  EXPECT_EQ(static_cast<int>(bytes[5]) | static_cast<int>(bytes[6]) | static_cast<int>(bytes[7]), 0);
}

TEST(CheckpointTest, SaveLoadSaveIsByteIdentical) {
  const VariantConfig config = variant_config("tiny", 10);
  const Model<float> m = Model<float>::create(config, 9);
  const auto first = temp_path("first.pale");
  const auto second = temp_path("second.pale");
  save_checkpoint(m, first);
  const Model<float> loaded = load_checkpoint<float>(first, config);
  save_checkpoint(loaded, second);
  EXPECT_EQ(file_bytes(first), file_bytes(second));
  const auto images = constant(random_tensor<float>({2, 32, 32, 3}, 13));
  EXPECT_TRUE(bitwise_equal(m.forward(images).value(), loaded.forward(images).value()));
  std::filesystem::remove(first);
  std::filesystem::remove(second);
}

TEST(CheckpointTest, DoublePrecisionRoundTrip) {
  const VariantConfig config = variant_config("tiny", 3);
  const Model<double> m = Model<double>::create(config, 10);
  const Checkpoint ck = decode_checkpoint(encode_checkpoint(checkpoint_from_model(m)));
  EXPECT_EQ(ck.entries.front().dtype, DType::kF64);
  Model<double> other = Model<double>::create(config, 11);
  load_into(other, ck);
  EXPECT_EQ(encode_checkpoint(checkpoint_from_model(other)), encode_checkpoint(checkpoint_from_model(m)));
  Model<float> wrong = Model<float>::create(config, 11);
  EXPECT_THROW(load_into(wrong, ck), FormatError);
}

TEST(CheckpointTest, CorruptDataIsRejected) {
  const auto good = encode_checkpoint(checkpoint_from_model(init_variant("tiny", 10, 1)));
  auto magic = good;
  magic[0] = std::byte{'X'};
  EXPECT_THROW(decode_checkpoint(magic), FormatError);
  auto version = good;
  version[4] = std::byte{9};
  EXPECT_THROW(decode_checkpoint(version), FormatError);
  auto truncated = good;
  truncated.pop_back();
  EXPECT_THROW(decode_checkpoint(truncated), FormatError);
  auto trailing = good;
  trailing.push_back(std::byte{0});
  EXPECT_THROW(decode_checkpoint(trailing), FormatError);
  EXPECT_THROW(read_checkpoint(temp_path("missing.pale")), FormatError);
}

TEST(CheckpointTest, MismatchLeavesModelUntouched) {
  const Model<float> source = init_variant("tiny", 10, 1);
  Checkpoint ck = checkpoint_from_model(source);
  ck.entries.back().name = "head.renamed";
  Model<float> target = init_variant("tiny", 10, 2);
  const auto before = encode_checkpoint(checkpoint_from_model(target));
  EXPECT_THROW(load_into(target, ck), FormatError);
  EXPECT_EQ(encode_checkpoint(checkpoint_from_model(target)), before);

  Checkpoint shape = checkpoint_from_model(source);
  shape.entries.front().shape.back() += 1;
  EXPECT_THROW(load_into(target, shape), FormatError);
  EXPECT_THROW(load_into(target, Checkpoint{}), FormatError);
}

}  // namespace
}  // namespace pale
