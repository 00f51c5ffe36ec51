// Copyright 2026 The xfnet Authors. All Rights Reserved.
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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "test_util.hpp"
#include "xfnet/gradsuite.hpp"
#include "xfnet/nn.hpp"
#include "xfnet/ops.hpp"

namespace xfnet {
namespace {

using testing::max_abs_diff;
using testing::random_tensor;

// Direct grouped convolution: six nested loops over output and kernel
// coordinates, zero padding on every side.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& k, std::size_t stride,
                           std::size_t pad, std::size_t groups) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = k.dim(0), KH = k.dim(2), KW = k.dim(3);
  const std::size_t OH = (H + 2 * pad - KH) / stride + 1;
  const std::size_t OW = (W + 2 * pad - KW) / stride + 1;
  const std::size_t cin = C / groups, cout = O / groups;
  Tensor<double> out(Shape{B, O, OH, OW});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t oy = 0; oy < OH; ++oy)
        for (std::size_t ox = 0; ox < OW; ++ox) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t ky = 0; ky < KH; ++ky)
              for (std::size_t kx = 0; kx < KW; ++kx) {
                const long iy = long(oy * stride + ky) - long(pad);
                const long ix = long(ox * stride + kx) - long(pad);
                if (iy < 0 || ix < 0 || iy >= long(H) || ix >= long(W)) continue;
                const std::size_t c = (o / cout) * cin + ci;
                acc += x.at({b, c, std::size_t(iy), std::size_t(ix)}) * k.at({o, ci, ky, kx});
              }
          out.at({b, o, oy, ox}) = acc;
        }
  return out;
}

Tensor<double> maxpool_oracle(const Tensor<double>& x, std::size_t win, std::size_t stride,
                              std::size_t pad) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t OH = (H + 2 * pad - win) / stride + 1, OW = (W + 2 * pad - win) / stride + 1;
  Tensor<double> out(Shape{B, C, OH, OW});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t oy = 0; oy < OH; ++oy)
        for (std::size_t ox = 0; ox < OW; ++ox) {
          double best = -std::numeric_limits<double>::infinity();
          for (std::size_t ky = 0; ky < win; ++ky)
            for (std::size_t kx = 0; kx < win; ++kx) {
              const long iy = long(oy * stride + ky) - long(pad);
              const long ix = long(ox * stride + kx) - long(pad);
              if (iy < 0 || ix < 0 || iy >= long(H) || ix >= long(W)) continue;
              best = std::max(best, x.at({b, c, std::size_t(iy), std::size_t(ix)}));
            }
          out.at({b, c, oy, ox}) = best;
        }
  return out;
}

Tensor<double> identity_kernel(std::size_t out, std::size_t in, std::size_t k, bool depthwise) {
  Tensor<double> t(Shape{out, depthwise ? 1 : in, k, k});
  for (std::size_t o = 0; o < out; ++o) t.at({o, depthwise ? 0 : o, k / 2, k / 2}) = 1.0;
  return t;
}

TEST(Conv2dTest, UnitKernelIsIdentity) {
  Rng rng(1);
  auto x = random_tensor(Shape{2, 1, 5, 4}, rng);
  Graph<double> g;
  auto y = conv2d(g.constant(x), Conv2dParams<double>{g.constant(Tensor<double>(Shape{1, 1, 1, 1}, 1.0))});
  EXPECT_EQ(y.value(), x);
}

TEST(Conv2dTest, OnesKernelOnConstantInput) {
  Graph<double> g;
  auto x = g.constant(Tensor<double>(Shape{1, 1, 5, 5}, 2.5));
  auto k = g.constant(Tensor<double>(Shape{1, 1, 3, 3}, 1.0));
  auto y = conv2d(x, Conv2dParams<double>{k, std::nullopt, 1, Padding::valid()}).value();
  EXPECT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 9 * 2.5);
}

TEST(Conv2dTest, MatchesNestedLoopOracle) {
  Rng rng(2);
  auto x = random_tensor(Shape{1, 3, 8, 8}, rng);
  auto k = random_tensor(Shape{4, 3, 3, 3}, rng);
  Graph<float> g;
  auto y = conv2d(g.constant(x.cast<float>()),
                  Conv2dParams<float>{g.constant(k.cast<float>()), std::nullopt, 2, Padding::same()});
  auto expected = conv_oracle(x, k, 2, 1, 1);
  ASSERT_EQ(y.shape(), expected.shape());
  EXPECT_LT(max_abs_diff(y.value().cast<double>(), expected), 1e-5);
}

TEST(Conv2dTest, BiasIsAddedPerChannel) {
  Rng rng(3);
  auto x = random_tensor(Shape{2, 2, 4, 4}, rng);
  auto k = random_tensor(Shape{3, 2, 3, 3}, rng);
  Tensor<double> b(Shape{3}, {1.0, -2.0, 0.5});
  Graph<double> g;
  auto y = conv2d(g.constant(x), Conv2dParams<double>{g.constant(k), g.constant(b)}).value();
  auto base = conv_oracle(x, k, 1, 1, 1);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
          EXPECT_NEAR(y.at({n, c, i, j}), base.at({n, c, i, j}) + b[c], 1e-12);
}

TEST(Conv2dTest, ChannelMismatchNamesBothShapes) {
  Graph<double> g;
  auto x = g.constant(Tensor<double>(Shape{1, 3, 4, 4}));
  auto k = g.constant(Tensor<double>(Shape{2, 4, 3, 3}));
  try {
    conv2d(x, Conv2dParams<double>{k});
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("1x3x4x4"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("2x4x3x3"), std::string::npos);
  }
}

TEST(Conv2dTest, SamePaddingPreservesSpatialSize) {
  Rng rng(4);
  for (std::size_t k : {1u, 3u, 5u, 7u}) {
    for (int trial = 0; trial < 3; ++trial) {
      const std::size_t h = 1 + rng.below(9), w = 1 + rng.below(9);
      Graph<double> g;
      auto y = conv2d(g.constant(Tensor<double>(Shape{1, 2, h, w})),
                      Conv2dParams<double>{g.constant(Tensor<double>(Shape{3, 2, k, k}))});
      EXPECT_EQ(y.shape(), (Shape{1, 3, h, w}));
    }
  }
}

TEST(Conv2dTest, SamePaddingRejectsEvenKernel) {
  Graph<double> g;
  EXPECT_THROW(conv2d(g.constant(Tensor<double>(Shape{1, 1, 4, 4})),
                      Conv2dParams<double>{g.constant(Tensor<double>(Shape{1, 1, 2, 2}))}),
               ShapeError);
}

TEST(Conv2dTest, InputSmallerThanKernelIsAShapeError) {
  Graph<double> g;
  EXPECT_THROW(conv2d(g.constant(Tensor<double>(Shape{1, 1, 2, 2})),
                      Conv2dParams<double>{g.constant(Tensor<double>(Shape{1, 1, 3, 3})),
                                           std::nullopt, 1, Padding::valid()}),
               ShapeError);
}

TEST(DepthwiseTest, IdentityKernels) {
  Rng rng(5);
  auto x = random_tensor(Shape{2, 3, 5, 5}, rng);
  Graph<double> g;
  auto y = depthwise_conv2d(g.constant(x), g.constant(identity_kernel(3, 3, 3, true)), 1,
                            Padding::same());
  EXPECT_EQ(y.value(), x);
}

TEST(DepthwiseTest, ZeroedChannelKernel) {
  Rng rng(6);
  auto x = random_tensor(Shape{1, 3, 4, 4}, rng);
  auto k = identity_kernel(3, 3, 3, true);
  for (std::size_t i = 0; i < 9; ++i) k[9 + i] = 0.0;  // channel 1
  Graph<double> g;
  auto y = depthwise_conv2d(g.constant(x), g.constant(k), 1, Padding::same()).value();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        EXPECT_EQ(y.at({0, c, i, j}), c == 1 ? 0.0 : x.at({0, c, i, j}));
}

TEST(DepthwiseTest, MatchesGroupedConvOracle) {
  Rng rng(7);
  auto x = random_tensor(Shape{2, 4, 7, 6}, rng);
  auto k = random_tensor(Shape{4, 1, 3, 3}, rng);
  for (std::size_t stride : {1u, 2u}) {
    Graph<float> g;
    auto y = depthwise_conv2d(g.constant(x.cast<float>()), g.constant(k.cast<float>()), stride,
                              Padding::same());
    auto expected = conv_oracle(x, k, stride, 1, 4);
    ASSERT_EQ(y.shape(), expected.shape());
    EXPECT_LT(max_abs_diff(y.value().cast<double>(), expected), 1e-5);
  }
}

TEST(DepthwiseTest, OutputChannelIgnoresOtherChannels) {
  Rng rng(8);
  auto x = random_tensor(Shape{1, 4, 5, 5}, rng);
  auto k = random_tensor(Shape{4, 1, 3, 3}, rng);
  Graph<double> g;
  auto base = depthwise_conv2d(g.constant(x), g.constant(k), 1, Padding::same()).value();
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t c = rng.below(4);
    auto perturbed = x;
    for (std::size_t ch = 0; ch < 4; ++ch) {
      if (ch == c) continue;
      for (std::size_t i = 0; i < 25; ++i) perturbed[ch * 25 + i] += rng.uniform(-5, 5);
    }
    auto y = depthwise_conv2d(g.constant(perturbed), g.constant(k), 1, Padding::same()).value();
    for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(y[c * 25 + i], base[c * 25 + i]);
  }
}

TEST(DepthwiseTest, ChannelMismatch) {
  Graph<double> g;
  EXPECT_THROW(depthwise_conv2d(g.constant(Tensor<double>(Shape{1, 3, 4, 4})),
                                g.constant(Tensor<double>(Shape{2, 1, 3, 3})), 1, Padding::same()),
               ShapeError);
}

TEST(SeparableTest, ParameterCountVersusStandard) {
  const Shape dw{3, 1, 3, 3}, pw{64, 3, 1, 1}, full{64, 3, 3, 3};
  EXPECT_EQ(dw.numel() + pw.numel(), 219u);
  EXPECT_EQ(full.numel(), 1728u);
}

TEST(SeparableTest, IdentityParts) {
  Rng rng(9);
  auto x = random_tensor(Shape{1, 3, 4, 4}, rng);
  Graph<double> g;
  auto y = separable_conv2d(g.constant(x), g.constant(identity_kernel(3, 3, 3, true)),
                            g.constant(identity_kernel(3, 3, 1, false)));
  EXPECT_EQ(y.value(), x);
}

TEST(SeparableTest, EqualsExplicitComposition) {
  Rng rng(10);
  auto x = random_tensor<float>(Shape{2, 3, 6, 6}, rng);
  auto dk = random_tensor<float>(Shape{3, 1, 3, 3}, rng);
  auto pk = random_tensor<float>(Shape{5, 3, 1, 1}, rng);
  Graph<float> g;
  auto fused = separable_conv2d(g.constant(x), g.constant(dk), g.constant(pk)).value();
  auto composed = pointwise_conv2d(depthwise_conv2d(g.constant(x), g.constant(dk), 1, Padding::same()),
                                   g.constant(pk))
                      .value();
  EXPECT_EQ(fused, composed);
}

TEST(BatchNormTest, TrainModeStandardizes) {
  Rng rng(11);
  auto x = random_tensor(Shape{4, 3, 5, 5}, rng, -3, 7);
  Graph<double> g;
  auto r = batch_norm(g.constant(x), g.constant(Tensor<double>(Shape{3}, 1.0)),
                      g.constant(Tensor<double>(Shape{3})), BatchNormState<double>::fresh(3),
                      Mode::train);
  const auto& y = r.output.value();
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 25; ++i) m += y[(b * 3 + c) * 25 + i];
    m /= 100;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 25; ++i) v += std::pow(y[(b * 3 + c) * 25 + i] - m, 2);
    v /= 100;
    EXPECT_NEAR(m, 0.0, 1e-4);
    // epsilon = 1e-3 shrinks the variance by var / (var + eps)
    const double bv = (*r.batch_var)[c];
    EXPECT_NEAR(v, bv / (bv + 1e-3), 1e-4);
    EXPECT_NEAR(v, 1.0, 1e-3);
  }
}

TEST(BatchNormTest, EvalWithUnitStatsIsNearIdentity) {
  Rng rng(12);
  auto x = random_tensor(Shape{2, 2, 3, 3}, rng);
  Graph<double> g;
  auto r = batch_norm(g.constant(x), g.constant(Tensor<double>(Shape{2}, 1.0)),
                      g.constant(Tensor<double>(Shape{2})), BatchNormState<double>::fresh(2),
                      Mode::eval);
  const double shrink = 1.0 / std::sqrt(1.0 + 1e-3);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(r.output.value()[i], x[i] * shrink, 1e-12);
  EXPECT_FALSE(r.batch_mean.has_value());
}

TEST(BatchNormTest, MomentumUpdate) {
  Rng rng(13);
  auto x = random_tensor(Shape{3, 2, 2, 2}, rng);
  BatchNormState<double> st{Tensor<double>(Shape{2}, {0.5, -1.0}), Tensor<double>(Shape{2}, {2.0, 0.5})};
  Graph<double> g;
  auto r = batch_norm(g.constant(x), g.constant(Tensor<double>(Shape{2}, 1.0)),
                      g.constant(Tensor<double>(Shape{2})), st, Mode::train);
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0;
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t i = 0; i < 4; ++i) m += x[(b * 2 + c) * 4 + i];
    m /= 12;
    EXPECT_NEAR(r.state.running_mean[c], 0.99 * st.running_mean[c] + 0.01 * m, 1e-12);
    EXPECT_NEAR(r.state.running_var[c], 0.99 * st.running_var[c] + 0.01 * (*r.batch_var)[c], 1e-12);
  }
  // the input state is not mutated
  EXPECT_EQ(st.running_mean[0], 0.5);
}

TEST(BatchNormTest, RecordedStatsReproduceEvalOutput) {
  Rng rng(14);
  auto x = random_tensor<float>(Shape{4, 3, 4, 4}, rng, -2, 5);
  auto gamma = random_tensor<float>(Shape{3}, rng, 0.5, 2);
  auto beta = random_tensor<float>(Shape{3}, rng);
  Graph<float> g;
  auto train = batch_norm(g.constant(x), g.constant(gamma), g.constant(beta),
                          BatchNormState<float>::fresh(3), Mode::train);
  BatchNormState<float> recorded{*train.batch_mean, *train.batch_var};
  auto eval = batch_norm(g.constant(x), g.constant(gamma), g.constant(beta), recorded, Mode::eval);
  EXPECT_LT(max_abs_diff(train.output.value(), eval.output.value()), 1e-4);
}

TEST(BatchNormTest, SingleValuePerChannelInTrainMode) {
  Graph<double> g;
  EXPECT_THROW(batch_norm(g.constant(Tensor<double>(Shape{1, 2, 1, 1})),
                          g.constant(Tensor<double>(Shape{2}, 1.0)), g.constant(Tensor<double>(Shape{2})),
                          BatchNormState<double>::fresh(2), Mode::train),
               ShapeError);
}

TEST(ActivationTest, Relu) {
  Graph<double> g;
  auto x = g.parameter("x", Tensor<double>(Shape{3}, {-1, 0, 2}));
  auto y = relu(x);
  EXPECT_EQ(y.value(), Tensor<double>(Shape{3}, {0, 0, 2}));
  EXPECT_EQ(g.backward(sum(y)).at("x"), Tensor<double>(Shape{3}, {0, 0, 1}));
}

TEST(ActivationTest, Sigmoid) {
  Graph<double> g;
  EXPECT_EQ(sigmoid(g.constant(Tensor<double>::scalar(0))).value().item(), 0.5);
  Rng rng(15);
  auto x = random_tensor(Shape{50}, rng, -20, 20);
  auto neg = x;
  for (auto& v : neg.data()) v = -v;
  auto a = sigmoid(g.constant(x)).value();
  auto b = sigmoid(g.constant(neg)).value();
  for (std::size_t i = 0; i < 50; ++i) EXPECT_NEAR(b[i], 1.0 - a[i], 1e-6);
}

TEST(PoolTest, MaxPoolConstant) {
  Graph<double> g;
  auto y = max_pool2d(g.constant(Tensor<double>(Shape{1, 2, 7, 7}, -3.5))).value();
  EXPECT_EQ(y.shape(), (Shape{1, 2, 4, 4}));
  for (double v : y.data()) EXPECT_EQ(v, -3.5);
}

TEST(PoolTest, MaxPoolCenterPeak) {
  Tensor<double> x(Shape{1, 1, 4, 4});
  x.at({0, 0, 1, 1}) = 9.0;
  Graph<double> g;
  auto y = max_pool2d(g.constant(x)).value();  // windows rows/cols {-1..1} and {1..3}
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (double v : y.data()) EXPECT_EQ(v, 9.0);
}

TEST(PoolTest, MaxPoolMatchesOracle) {
  Rng rng(16);
  auto x = random_tensor(Shape{1, 2, 9, 9}, rng, -5, 1);  // negative values exercise -inf padding
  Graph<double> g;
  auto y = max_pool2d(g.constant(x)).value();
  EXPECT_EQ(y, maxpool_oracle(x, 3, 2, 1));
}

TEST(PoolTest, GlobalPools) {
  Graph<double> g;
  auto c = g.constant(Tensor<double>(Shape{2, 3, 4, 4}, 1.25));
  EXPECT_EQ(global_avg_pool(c).value(), Tensor<double>(Shape{2, 3}, 1.25));
  EXPECT_EQ(global_max_pool(c).value(), Tensor<double>(Shape{2, 3}, 1.25));
  auto m = g.constant(Tensor<double>(Shape{1, 1, 2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(global_avg_pool(m).value().item(), 2.5);
  Rng rng(17);
  auto x = g.constant(random_tensor(Shape{3, 4, 5, 5}, rng));
  auto avg = global_avg_pool(x).value(), mx = global_max_pool(x).value();
  for (std::size_t i = 0; i < avg.size(); ++i) EXPECT_LE(avg[i], mx[i]);
}

TEST(FullyConnectedTest, IdentityAndBias) {
  Rng rng(18);
  auto x = random_tensor(Shape{3, 4}, rng);
  Tensor<double> eye(Shape{4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at({i, i}) = 1.0;
  Graph<double> g;
  EXPECT_EQ(fully_connected(g.constant(x), g.constant(eye), g.constant(Tensor<double>(Shape{4}))).value(), x);
  Tensor<double> bias(Shape{2}, {0.5, -1.5});
  auto y = fully_connected(g.constant(Tensor<double>(Shape{3, 4})),
                           g.constant(random_tensor(Shape{4, 2}, rng)), g.constant(bias))
               .value();
  for (std::size_t b = 0; b < 3; ++b) {
    EXPECT_EQ(y.at({b, 0}), 0.5);
    EXPECT_EQ(y.at({b, 1}), -1.5);
  }
}

TEST(FullyConnectedTest, MatchesMatmulPlusBias) {
  Rng rng(19);
  auto x = random_tensor(Shape{5, 6}, rng);
  auto w = random_tensor(Shape{6, 3}, rng);
  auto b = random_tensor(Shape{3}, rng);
  Graph<double> g;
  auto y = fully_connected(g.constant(x), g.constant(w), g.constant(b)).value();
  auto prod = matmul(g.constant(x), g.constant(w)).value();
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(y.at({i, j}), prod.at({i, j}) + b[j], 1e-12);
  EXPECT_THROW(fully_connected(g.constant(x), g.constant(random_tensor(Shape{5, 3}, rng)), g.constant(b)),
               ShapeError);
}

TEST(ConcatTest, ChannelsAreStacked) {
  Graph<double> g;
  auto a = g.constant(Tensor<double>(Shape{2, 1, 2, 2}, 1.0));
  auto b = g.constant(Tensor<double>(Shape{2, 2, 2, 2}, 2.0));
  auto y = concat_channels<double>({a, b}).value();
  EXPECT_EQ(y.shape(), (Shape{2, 3, 2, 2}));
  EXPECT_EQ(y.at({1, 0, 1, 1}), 1.0);
  EXPECT_EQ(y.at({1, 2, 0, 0}), 2.0);
}

TEST(TokensTest, RoundTrip) {
  Rng rng(20);
  auto x = random_tensor(Shape{2, 3, 2, 4}, rng);
  Graph<double> g;
  auto t = to_tokens(g.constant(x));
  EXPECT_EQ(t.shape(), (Shape{2, 8, 3}));
  EXPECT_EQ(t.value().at({1, 5, 2}), x.at({1, 2, 1, 1}));
  EXPECT_EQ(from_tokens(t, 2, 4).value(), x);
}

class GradientSuiteTest : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(GradientSuiteTest, EveryOpPassesFiniteDifferences) {
  for (const auto& check : run_gradient_suite(GetParam())) {
    EXPECT_LT(check.report.max_rel_error, 1e-3)
        << check.op << " analytic=" << check.report.analytic << " numeric=" << check.report.numeric;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, GradientSuiteTest, ::testing::Values(1u, 2u, 3u));

}  // namespace
}  // namespace xfnet
