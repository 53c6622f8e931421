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

#include "pale/autograd.hpp"
#include "pale/flop_trace.hpp"
#include "pale/grad_check.hpp"
#include "pale/ops.hpp"
#include "pale/tensor.hpp"
#include "test_support.hpp"

namespace pale {
namespace {

using testing::make;
using testing::random_leaf;
using testing::random_tensor;

TEST(TensorTest, ShapeAndAccess) {
  Tensor<float> t({2, 3, 4, 5});
  EXPECT_EQ(t.numel(), 120);
  EXPECT_EQ(t.rank(), 4);
  t.at(1, 2, 3, 4) = 7.0f;
  EXPECT_EQ(t[119], 7.0f);
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  EXPECT_THROW(t.reshaped({7}), ShapeError);
  EXPECT_EQ(t.reshaped({120}).shape(), Shape{120});
}

TEST(TensorTest, BitwiseEqualSeesSignedZero) {
  const auto a = make<double>({2}, {0.0, 1.0});
  const auto b = make<double>({2}, {-0.0, 1.0});
  EXPECT_EQ(max_abs_diff(a, b), 0.0);
  EXPECT_FALSE(bitwise_equal(a, b));
  EXPECT_TRUE(bitwise_equal(a, a));
}

TEST(MatmulTest, IdentityLeftOperand) {
  const auto a = constant(make<double>({2, 2}, {1, 0, 0, 1}));
  const auto b = constant(make<double>({2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(matmul(a, b).value(), b.value());
}

TEST(MatmulTest, RowTimesColumn) {
  const auto a = constant(make<double>({1, 2}, {1, 2}));
  const auto b = constant(make<double>({2, 1}, {3, 4}));
  EXPECT_EQ(matmul(a, b).value()[0], 11.0);
}

TEST(MatmulTest, TraceCountsMultiplyAdds) {
  FlopTrace trace;
  {
    TraceScope scope(trace);
    matmul(constant(Tensor<float>({2, 4})), constant(Tensor<float>({4, 3})));
  }
  EXPECT_EQ(trace.total()[OpKind::kMatmul], 24);
  EXPECT_EQ(trace.total().multiply_adds(), 24);
}

TEST(MatmulTest, RejectsInnerMismatch) {
  EXPECT_THROW(matmul(constant(Tensor<float>({2, 3})), constant(Tensor<float>({4, 3}))), ShapeError);
}

TEST(SoftmaxTest, ClosedForms) {
  const auto even = softmax_lastdim(constant(make<double>({2}, {0, 0}))).value();
  EXPECT_DOUBLE_EQ(even[0], 0.5);
  EXPECT_DOUBLE_EQ(even[1], 0.5);
  const auto two_to_one = softmax_lastdim(constant(make<double>({2}, {std::log(2.0), 0}))).value();
  EXPECT_NEAR(two_to_one[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(two_to_one[1], 1.0 / 3.0, 1e-15);
}

TEST(SoftmaxTest, LargeLogitsDoNotOverflow) {
  const auto y = softmax_lastdim(constant(make<float>({2}, {1000.0f, 0.0f}))).value();
  EXPECT_TRUE(y.all_finite());
  EXPECT_NEAR(y[0], 1.0f, 1e-6);
  EXPECT_NEAR(y[1], 0.0f, 1e-6);
}

TEST(SoftmaxTest, MaskedPositionsAreExactlyZero) {
  const std::uint8_t mask[3] = {1, 0, 1};
  const auto y = softmax_lastdim(constant(make<double>({3}, {0.3, 9.0, -0.2})), KeyMask(mask, 3)).value();
  EXPECT_EQ(y[1], 0.0);
  EXPECT_NEAR(y[0] + y[2], 1.0, 1e-15);
  const std::uint8_t none[2] = {0, 0};
  EXPECT_THROW(softmax_lastdim(constant(make<double>({2}, {0, 0})), KeyMask(none, 2)), ShapeError);
}

TEST(SoftmaxTest, RowsSumToOne) {
  const auto y = softmax_lastdim(constant(random_tensor<double>({5, 7, 9}, 3, -20, 20))).value();
  for (Index r = 0; r < 35; ++r) {
    double total = 0.0;
    for (Index j = 0; j < 9; ++j) total += y[r * 9 + j];
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(LayerNormTest, TwoPointStandardization) {
  const auto y = layer_norm(constant(make<double>({1, 2}, {1, 3})), constant(make<double>({2}, {1, 1})),
                            constant(make<double>({2}, {0, 0})), 0.0)
                     .value();
  EXPECT_DOUBLE_EQ(y[0], -1.0);
  EXPECT_DOUBLE_EQ(y[1], 1.0);
}

TEST(LayerNormTest, ConstantInputGivesBeta) {
  const auto y = layer_norm(constant(Tensor<double>({3, 4}, 2.5)), constant(Tensor<double>({4}, 1.0)),
                            constant(Tensor<double>({4}, 0.75)))
                     .value();
  for (Index i = 0; i < y.numel(); ++i) EXPECT_DOUBLE_EQ(y[i], 0.75);
}

TEST(LayerNormTest, ZeroGammaGivesBeta) {
  const auto beta = make<double>({3}, {0.1, -0.2, 0.3});
  const auto y =
      layer_norm(constant(random_tensor<double>({4, 3}, 5)), constant(Tensor<double>({3})), constant(beta)).value();
  for (Index r = 0; r < 4; ++r) {
    for (Index j = 0; j < 3; ++j) EXPECT_EQ(y[r * 3 + j], beta[j]);
  }
}

TEST(Conv2dTest, PointwiseIdentity) {
  const auto x = random_tensor<float>({2, 5, 6, 4}, 1);
  Tensor<float> w({1, 1, 4, 4});
  for (Index c = 0; c < 4; ++c) w[c * 4 + c] = 1.0f;
  EXPECT_EQ(conv2d(constant(x), constant(w), Var<float>(), Conv2dOptions{}).value(), x);
}

TEST(Conv2dTest, DepthwiseCenterTapIdentity) {
  const auto x = random_tensor<float>({1, 7, 5, 3}, 2);
  Tensor<float> w({3, 3, 1, 3});
  for (Index c = 0; c < 3; ++c) w[(1 * 3 + 1) * 3 + c] = 1.0f;
  Conv2dOptions opt;
  opt.pad_h = opt.pad_w = 1;
  opt.groups = 3;
  EXPECT_EQ(conv2d(constant(x), constant(w), Var<float>(), opt).value(), x);
}

TEST(Conv2dTest, StemDownsamplesByFour) {
  Conv2dOptions opt;
  opt.stride_h = opt.stride_w = 4;
  opt.pad_h = opt.pad_w = 3;
  const auto y = conv2d(constant(Tensor<float>({1, 224, 224, 3})), constant(Tensor<float>({7, 7, 3, 8})),
                        Var<float>(), opt);
  EXPECT_EQ(y.shape(), (Shape{1, 56, 56, 8}));
}

TEST(Conv2dTest, MatchesDirectSum) {
  const auto x = random_tensor<double>({1, 4, 5, 2}, 3);
  const auto w = random_tensor<double>({3, 3, 2, 3}, 4);
  const auto b = random_tensor<double>({3}, 5);
  Conv2dOptions opt;
  opt.stride_h = 2;
  opt.pad_h = opt.pad_w = 1;
  const auto y = conv2d(constant(x), constant(w), constant(b), opt).value();
  ASSERT_EQ(y.shape(), (Shape{1, 2, 5, 3}));
  for (Index oi = 0; oi < 2; ++oi) {
    for (Index oj = 0; oj < 5; ++oj) {
      for (Index co = 0; co < 3; ++co) {
        double expect = b[co];
        for (Index ki = 0; ki < 3; ++ki) {
          for (Index kj = 0; kj < 3; ++kj) {
            const Index i = oi * 2 + ki - 1, j = oj + kj - 1;
            if (i < 0 || i >= 4 || j < 0 || j >= 5) continue;
            for (Index ci = 0; ci < 2; ++ci) expect += x.at(0, i, j, ci) * w[((ki * 3 + kj) * 2 + ci) * 3 + co];
          }
        }
        EXPECT_NEAR(y.at(0, oi, oj, co), expect, 1e-14);
      }
    }
  }
}

TEST(ElementwiseTest, GeluPoolSplitConcat) {
  EXPECT_EQ(gelu(constant(make<double>({1}, {0.0}))).value()[0], 0.0);
  EXPECT_NEAR(gelu(constant(make<double>({1}, {1.0}))).value()[0], 0.8413447460685429, 1e-15);

  const auto pooled = mean_pool_spatial(constant(Tensor<double>({2, 3, 5, 4}, 1.25))).value();
  EXPECT_EQ(pooled.shape(), (Shape{2, 1, 1, 4}));
  for (Index i = 0; i < pooled.numel(); ++i) EXPECT_DOUBLE_EQ(pooled[i], 1.25);

  const auto x = constant(random_tensor<float>({1, 3, 3, 64}, 9));
  const auto [a, b] = split_channels_half(x);
  EXPECT_EQ(a.shape(), (Shape{1, 3, 3, 32}));
  EXPECT_EQ(b.shape(), (Shape{1, 3, 3, 32}));
  EXPECT_TRUE(bitwise_equal(concat_channels(a, b).value(), x.value()));
  EXPECT_THROW(split_channels_half(constant(Tensor<float>({1, 1, 1, 3}))), ShapeError);
}

TEST(PadCropTest, RoundTrip) {
  const auto x = constant(random_tensor<float>({2, 3, 5, 4}, 4));
  const auto padded = pad_spatial(x, 2, 3);
  EXPECT_EQ(padded.shape(), (Shape{2, 5, 8, 4}));
  EXPECT_EQ(padded.value().at(1, 4, 7, 3), 0.0f);
  EXPECT_TRUE(bitwise_equal(crop_spatial(padded, 3, 5).value(), x.value()));
}

TEST(GatherScatterTest, RoundTrip) {
  const auto x = constant(random_tensor<double>({1, 2, 3, 2}, 8));
  const std::vector<Index> index{5, 1, 3, 0, 2, 4};
  const auto g = gather_tokens(x, index, 2);
  EXPECT_EQ(g.shape(), (Shape{1, 2, 3, 2}));
  EXPECT_EQ(g.value()[0], x.value()[10]);
  EXPECT_TRUE(bitwise_equal(scatter_tokens(g, index, 2, 3).value(), x.value()));
}

TEST(AutogradTest, ReusedInputAccumulates) {
  auto x = Var<double>::leaf(make<double>({3}, {1, -2, 0.5}), true);
  backward(sum(mul(x, x)));
  EXPECT_EQ(x.grad(), make<double>({3}, {2, -4, 1}));
}

TEST(AutogradTest, NoGradGuardBuildsNoGraph) {
  auto x = Var<double>::leaf(make<double>({2}, {1, 2}), true);
  NoGradGuard guard;
  EXPECT_FALSE(grad_mode_enabled());
  EXPECT_FALSE(square(x).requires_grad());
}

TEST(FlopTraceTest, LabelsNestAndMatch) {
  FlopTrace trace;
  {
    TraceScope scope(trace);
    TraceLabel outer("stage1");
    {
      TraceLabel inner("qkv");
      detail::record(OpKind::kMatmul, 10);
    }
    detail::record(OpKind::kSoftmax, 3);
  }
  detail::record(OpKind::kMatmul, 1000);
  EXPECT_EQ(trace.scope("stage1/qkv")[OpKind::kMatmul], 10);
  EXPECT_EQ(trace.matching("qkv").multiply_adds(), 10);
  EXPECT_EQ(trace.under("stage1")[OpKind::kSoftmax], 3);
  EXPECT_EQ(trace.total().multiply_adds(), 10);
}

TEST(GradCheckTest, Square) {
  EXPECT_LT(grad_check([](const Var<double>& x) { return square(x); }, random_tensor<double>({3, 4}, 1)), 1e-9);
}

TEST(GradCheckTest, SoftmaxOfMatmul) {
  const auto w = constant(random_tensor<double>({4, 5}, 2));
  EXPECT_LT(grad_check([&](const Var<double>& x) { return softmax_lastdim(matmul(x, w)); },
                       random_tensor<double>({3, 4}, 3)),
            1e-6);
}

TEST(GradCheckTest, ConvolutionAllInputs) {
  Var<double> in[3] = {random_leaf<double>({1, 5, 4, 4}, 1), random_leaf<double>({3, 3, 2, 6}, 2),
                       random_leaf<double>({6}, 3)};
  Conv2dOptions opt;
  opt.stride_h = 2;
  opt.pad_h = opt.pad_w = 1;
  opt.groups = 2;
  EXPECT_LT(grad_check_outputs([&] { return conv2d(in[0], in[1], in[2], opt); }, in).max_rel_error, 1e-6);
}

TEST(GradCheckTest, LayerNormAllInputs) {
  Var<double> in[3] = {random_leaf<double>({3, 6}, 1), random_leaf<double>({6}, 2), random_leaf<double>({6}, 3)};
  EXPECT_LT(grad_check_outputs([&] { return layer_norm(in[0], in[1], in[2]); }, in).max_rel_error, 1e-6);
}

TEST(GradCheckTest, GroupedAttentionWithMask) {
  Var<double> in[3] = {random_leaf<double>({2, 2, 3, 4}, 1), random_leaf<double>({2, 2, 5, 4}, 2),
                       random_leaf<double>({2, 2, 5, 4}, 3)};
  const std::vector<std::uint8_t> mask{1, 1, 0, 1, 0, 1, 0, 1, 1, 1};
  EXPECT_LT(grad_check_outputs([&] { return grouped_attention(in[0], in[1], in[2], 2, mask); }, in).max_rel_error,
            1e-6);
}

TEST(GradCheckTest, GeluPoolCrossEntropy) {
  EXPECT_LT(grad_check([](const Var<double>& x) { return mean_pool_spatial(gelu(x)); },
                       random_tensor<double>({2, 3, 3, 4}, 4, -3, 3)),
            1e-6);
  const std::vector<int> labels{2, 0, 1};
  EXPECT_LT(grad_check([&](const Var<double>& x) { return cross_entropy(x, labels); },
                       random_tensor<double>({3, 4}, 5)),
            1e-6);
}

TEST(CrossEntropyTest, UniformLogitsGiveLogClasses) {
  const std::vector<int> labels{0, 3};
  const auto loss = cross_entropy(constant(Tensor<double>({2, 4}, 0.7)), labels).value()[0];
  EXPECT_NEAR(loss, std::log(4.0), 1e-15);
  EXPECT_THROW(cross_entropy(constant(Tensor<double>({2, 4})), std::vector<int>{0, 4}), ShapeError);
}

}  // namespace
}  // namespace pale
