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

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "pale/attention.hpp"
#include "pale/complexity.hpp"
#include "pale/grad_check.hpp"
#include "pale/harness/oracles.hpp"
#include "pale/harness/verify.hpp"
#include "test_support.hpp"

namespace pale {
namespace {

using testing::random_tensor;

template <typename T>
AttentionParams<T> params_for(Index c, int heads, std::uint64_t seed, QkvKind kind = QkvKind::kSeparable) {
  Rng rng(seed);
  auto p = make_attention_params<T>(c, heads, kind, rng, 0.3);
  for (Var<T>* b : {&p.q.bias, &p.k.bias, &p.v.bias, &p.proj_bias}) {
    b->mutable_value() = harness::uniform_tensor<T>(b->shape(), rng, -0.1, 0.1);
  }
  return p;
}

template <typename T>
void set_identity(Var<T>& m) {
  Tensor<T>& t = m.mutable_value();
  t.fill(T{0});
  for (Index i = 0; i < t.dim(0); ++i) t.at(i, i) = T{1};
}

// Per head: softmax(q k^T / sqrt(d)) v, one query at a time.
Tensor<double> naive_msa(const Tensor<double>& q, const Tensor<double>& k, const Tensor<double>& v, int heads) {
  const Index n = q.dim(2), dim = q.dim(3), hd = dim / heads;
  Tensor<double> out(q.shape());
  for (int h = 0; h < heads; ++h) {
    for (Index i = 0; i < n; ++i) {
      std::vector<double> s(static_cast<std::size_t>(n));
      double top = -1e300;
      for (Index j = 0; j < n; ++j) {
        double dot = 0.0;
        for (Index e = 0; e < hd; ++e) dot += q.at(0, 0, i, h * hd + e) * k.at(0, 0, j, h * hd + e);
        s[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(hd));
        top = std::max(top, s[static_cast<std::size_t>(j)]);
      }
      double z = 0.0;
      for (double& x : s) z += (x = std::exp(x - top));
      for (Index e = 0; e < hd; ++e) {
        double acc = 0.0;
        for (Index j = 0; j < n; ++j) acc += s[static_cast<std::size_t>(j)] / z * v.at(0, 0, j, h * hd + e);
        out.at(0, 0, i, h * hd + e) = acc;
      }
    }
  }
  return out;
}

TEST(QkvTest, IdentityWeightsPassInputThrough) {
  auto p = params_for<double>(6, 2, 1);
  Tensor<double>& dw = p.q.depthwise.mutable_value();
  dw.fill(0.0);
  for (Index c = 0; c < 6; ++c) dw[4 * 6 + c] = 1.0;
  set_identity(p.q.pointwise);
  p.q.bias.mutable_value().fill(0.0);
  const auto x = random_tensor<double>({2, 5, 4, 6}, 2);
  EXPECT_EQ(qkv_separable(constant(x), p).q.value(), x);
}

TEST(QkvTest, ZeroPointwiseGivesZero) {
  auto p = params_for<float>(8, 2, 1);
  p.k.pointwise.mutable_value().fill(0.0f);
  p.k.bias.mutable_value().fill(0.0f);
  const auto k = qkv_separable(constant(random_tensor<float>({1, 3, 3, 8}, 3)), p).k.value();
  for (Index i = 0; i < k.numel(); ++i) EXPECT_EQ(k[i], 0.0f);
}

TEST(QkvTest, TraceMatchesSeparableCost) {
  const auto p = params_for<float>(16, 2, 1);
  FlopTrace trace;
  {
    TraceScope scope(trace);
    qkv_separable(constant(Tensor<float>({1, 8, 8, 16})), p);
  }
  EXPECT_EQ(trace.matching("qkv").multiply_adds(), 76800);
}

TEST(MsaGroupTest, SingleTokenReturnsValue) {
  const auto v = random_tensor<double>({1, 3, 1, 4}, 1);
  const auto y = msa_group(constant(random_tensor<double>({1, 3, 1, 4}, 2)),
                           constant(random_tensor<double>({1, 3, 1, 4}, 3)), constant(v), 2);
  EXPECT_EQ(y.value(), v);
}

TEST(MsaGroupTest, IdenticalKeysAverageValues) {
  Tensor<double> k({1, 1, 4, 2});
  for (Index j = 0; j < 4; ++j) {
    k.at(0, 0, j, 0) = 0.3;
    k.at(0, 0, j, 1) = -1.2;
  }
  const auto v = random_tensor<double>({1, 1, 4, 2}, 5);
  const auto y = msa_group(constant(random_tensor<double>({1, 1, 4, 2}, 4)), constant(k), constant(v), 1).value();
  for (Index e = 0; e < 2; ++e) {
    double mean = 0.0;
    for (Index j = 0; j < 4; ++j) mean += v.at(0, 0, j, e) / 4.0;
    for (Index i = 0; i < 4; ++i) EXPECT_NEAR(y.at(0, 0, i, e), mean, 1e-15);
  }
}

TEST(MsaGroupTest, HandComputedPair) {
  const auto zero = constant(Tensor<double>({1, 1, 2, 1}));
  const auto v = constant(testing::make<double>({1, 1, 2, 1}, {2.0, 4.0}));
  const auto y = msa_group(zero, zero, v, 1).value();
  EXPECT_EQ(y[0], 3.0);
  EXPECT_EQ(y[1], 3.0);
}

TEST(MsaGroupTest, MatchesNaivePerHeadLoop) {
  const auto q = random_tensor<double>({1, 1, 6, 8}, 1, -2, 2);
  const auto k = random_tensor<double>({1, 1, 6, 8}, 2, -2, 2);
  const auto v = random_tensor<double>({1, 1, 6, 8}, 3);
  const auto y = msa_group(constant(q), constant(k), constant(v), 2).value();
  EXPECT_LT(max_abs_diff(y, naive_msa(q, k, v, 2)), 1e-6);
}

TEST(MsaGroupTest, WeightsSumToOne) {
  const auto v = constant(Tensor<double>({2, 3, 5, 4}, 1.0));
  const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0, 1, 1, 1, 1, 1, 0, 0, 0, 0, 1};
  const auto y = msa_group(constant(random_tensor<double>({2, 3, 5, 4}, 1, -5, 5)),
                           constant(random_tensor<double>({2, 3, 5, 4}, 2, -5, 5)), v, 2, mask)
                     .value();
  for (Index i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], 1.0, 1e-14);
}

TEST(MsaGroupTest, PermutationEquivariant) {
  const auto q = random_tensor<double>({1, 1, 6, 4}, 1);
  const auto k = random_tensor<double>({1, 1, 6, 4}, 2);
  const auto v = random_tensor<double>({1, 1, 6, 4}, 3);
  const std::vector<Index> perm{3, 0, 5, 1, 4, 2};
  auto permute = [&](const Tensor<double>& t) {
    Tensor<double> out(t.shape());
    for (Index i = 0; i < 6; ++i) {
      for (Index e = 0; e < 4; ++e) out.at(0, 0, i, e) = t.at(0, 0, perm[static_cast<std::size_t>(i)], e);
    }
    return out;
  };
  const auto y = msa_group(constant(q), constant(k), constant(v), 2).value();
  const auto yp = msa_group(constant(permute(q)), constant(permute(k)), constant(permute(v)), 2).value();
  EXPECT_LT(max_abs_diff(yp, permute(y)), 1e-15);
}

TEST(ParallelTest, PreservesShape) {
  const auto p = params_for<float>(64, 4, 1);
  const auto y = ps_attention_parallel(constant(random_tensor<float>({2, 14, 14, 64}, 2)), {7, 7, true}, p);
  EXPECT_EQ(y.shape(), (Shape{2, 14, 14, 64}));
  EXPECT_TRUE(y.value().all_finite());
}

TEST(ParallelTest, RejectsOddHeadCount) {
  const auto p = params_for<float>(6, 3, 1);
  EXPECT_THROW(ps_attention_parallel(constant(Tensor<float>({1, 4, 4, 6})), {2, 2, true}, p), ShapeError);
}

TEST(ParallelTest, MatchesOracle) {
  const auto p = params_for<double>(8, 2, 3);
  const auto x = random_tensor<double>({2, 6, 8, 8}, 4);
  const PartitionSpec spec{3, 2, true};
  const auto fast = ps_attention_parallel(constant(x), spec, p).value();
  const auto slow = oracle_attention(
      x, harness::oracle_branches(AttentionMode::kPaleParallel, 6, 8, 8, 2, spec), p);
  EXPECT_LT(max_abs_diff(fast, slow), 1e-12);
}

TEST(VanillaTest, PaleCoversUnionOfRowsAndColumns) {
  const auto branches = harness::oracle_branches(AttentionMode::kPaleVanilla, 14, 14, 8, 2, {7, 7, true});
  ASSERT_EQ(branches.size(), 1u);
  ASSERT_EQ(branches[0].groups.size(), 4u);
  for (const TokenGroup& g : branches[0].groups) {
    EXPECT_EQ(g.keys.size(), 147u);
    EXPECT_EQ(g.queries.size(), 49u);
  }
}

TEST(VanillaTest, WholeMapPaleEqualsGlobal) {
  const auto p32 = params_for<float>(8, 2, 5);
  const auto x32 = random_tensor<float>({1, 5, 6, 8}, 6);
  EXPECT_LE(max_abs_diff(ps_attention_vanilla(constant(x32), {5, 6, true}, p32).value(),
                         global_attention(constant(x32), p32).value()),
            1e-6f);
  const auto p64 = params_for<double>(8, 2, 5);
  const auto x64 = random_tensor<double>({1, 5, 6, 8}, 6);
  EXPECT_LE(max_abs_diff(ps_attention_vanilla(constant(x64), {5, 6, true}, p64).value(),
                         global_attention(constant(x64), p64).value()),
            1e-12);
}

TEST(SequentialTest, AlternatesAxisByBlockParity) {
  const auto p = params_for<double>(8, 2, 7);
  const auto x = constant(random_tensor<double>({1, 4, 6, 8}, 8));
  const PartitionSpec spec{2, 3, true};
  const auto b0 = ps_attention_sequential(x, spec, p, 0).value();
  EXPECT_TRUE(bitwise_equal(b0, ps_attention_sequential(x, spec, p, 2).value()));
  EXPECT_GT(max_abs_diff(b0, ps_attention_sequential(x, spec, p, 1).value()), 1e-6);
  const auto rows = oracle_attention(
      x.value(), harness::oracle_branches(AttentionMode::kPaleSequential, 4, 6, 8, 2, spec, 0), p);
  EXPECT_LT(max_abs_diff(b0, rows), 1e-12);
}

TEST(ModeTest, AxialIsPaleOfOneLine) {
  const PartitionSpec axial = effective_spec(AttentionMode::kAxial, {7, 5, true});
  EXPECT_EQ(axial, (PartitionSpec{1, 1, true}));
  for (Axis a : {Axis::kRow, Axis::kColumn}) {
    EXPECT_EQ(build_groups(6, 4, axial, a).groups, build_groups(6, 4, {1, 1, true}, a).groups);
  }
  const auto p = params_for<double>(8, 2, 9);
  const auto x = constant(random_tensor<double>({1, 6, 4, 8}, 10));
  EXPECT_TRUE(bitwise_equal(attention_forward(x, {AttentionMode::kAxial, {7, 5, true}}, p).value(),
                            ps_attention_parallel(x, {1, 1, true}, p).value()));
}

TEST(ModeTest, CrossShapedUsesContiguousStripes) {
  const PartitionSpec cross = effective_spec(AttentionMode::kCrossShaped, {7, 7, true});
  EXPECT_FALSE(cross.interlaced);
  const IndexGroups g = build_groups(14, 14, cross, Axis::kRow);
  EXPECT_EQ(g.groups, (std::vector<std::vector<Index>>{{0, 1, 2, 3, 4, 5, 6}, {7, 8, 9, 10, 11, 12, 13}}));
}

TEST(ModeTest, GlobalOnTwoByTwoIsOneGroup) {
  const auto p = params_for<double>(4, 2, 11);
  const auto x = constant(random_tensor<double>({1, 2, 2, 4}, 12));
  const Qkv<double> qkv = qkv_separable(x, p);
  const auto as_group = [](const Var<double>& t) { return reshape(t, {1, 1, 4, 4}); };
  const auto attended = reshape(msa_group(as_group(qkv.q), as_group(qkv.k), as_group(qkv.v), 2), {1, 2, 2, 4});
  const auto direct = linear(attended, p.proj_weight, p.proj_bias).value();
  EXPECT_LT(max_abs_diff(global_attention(x, p).value(), direct), 1e-15);
}

TEST(ModeTest, ParseAndNameRoundTrip) {
  for (AttentionMode m : all_modes()) EXPECT_EQ(parse_mode(mode_name(m)), m);
  EXPECT_EQ(parse_mode("cross"), AttentionMode::kCrossShaped);
  EXPECT_FALSE(parse_mode("diagonal").has_value());
}

TEST(OracleTest, SingletonGroupsPassValuesThrough) {
  auto p = params_for<double>(4, 2, 13);
  set_identity(p.proj_weight);
  p.proj_bias.mutable_value().fill(0.0);
  const auto x = random_tensor<double>({1, 2, 3, 4}, 14);
  OracleBranch branch{0, 4, 2, {}};
  for (Index t = 0; t < 6; ++t) branch.groups.push_back({{t}, {t}});
  const auto y = oracle_attention(x, {branch}, p);
  const auto v = qkv_separable(constant(x), p).v.value();
  EXPECT_LT(max_abs_diff(y, v), 1e-15);
}

TEST(EquivalenceTest, EveryModeMatchesOracleOnReducedGrid) {
  harness::EquivOptions options;
  options.extents = {4, 7, 9};
  options.pales = {1, 2};
  options.channels = {8};
  options.heads = {2};
  for (harness::Precision precision : {harness::Precision::kF32, harness::Precision::kF64}) {
    options.precision = precision;
    const harness::SuiteResult r = harness::run_equiv_suite(options);
    EXPECT_TRUE(r.passed()) << harness::describe(r);
  }
}

TEST(PaddingTest, ValidOutputsIgnorePaddingAmount) {
  const harness::SuiteResult f64 = harness::run_padding_suite(harness::Precision::kF64, MaskPolicy::kApply, 0.0);
  EXPECT_TRUE(f64.passed()) << harness::describe(f64);
  const harness::SuiteResult f32 = harness::run_padding_suite(harness::Precision::kF32, MaskPolicy::kApply, 1e-6);
  EXPECT_TRUE(f32.passed()) << harness::describe(f32);
}

TEST(PaddingTest, SkippingTheMaskIsDetected) {
  const harness::SuiteResult r = harness::run_padding_suite(harness::Precision::kF32, MaskPolicy::kIgnore);
  EXPECT_FALSE(r.passed());
  ASSERT_FALSE(r.failures.empty());
  EXPECT_NE(r.failures.front().find("padding independence"), std::string::npos);
}

class ModeGradTest : public ::testing::TestWithParam<AttentionMode> {};

TEST_P(ModeGradTest, InputAndProjectionGradients) {
  auto p = params_for<double>(8, 2, 15);
  for (int block : {0, 1}) {
    Var<double> in[2] = {testing::random_leaf<double>({1, 4, 4, 8}, 16), p.proj_weight};
    const AttentionConfig config{GetParam(), {2, 2, true}, MaskPolicy::kApply};
    const auto r = grad_check_outputs([&] { return attention_forward(in[0], config, p, block); }, in, 1e-5);
    EXPECT_LT(r.max_rel_error, 1e-4) << mode_name(GetParam()) << " block " << block;
  }
}

INSTANTIATE_TEST_SUITE_P(AllModes, ModeGradTest, ::testing::ValuesIn(all_modes()),
                         [](const auto& info) { return std::string(mode_name(info.param)); });

}  // namespace
}  // namespace pale
