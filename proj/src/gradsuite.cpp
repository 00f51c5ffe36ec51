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

#include "xfnet/gradsuite.hpp"

#include "xfnet/attention.hpp"
#include "xfnet/loss.hpp"
#include "xfnet/nn.hpp"
#include "xfnet/ops.hpp"
#include "xfnet/rng.hpp"

namespace xfnet {
namespace {

using G = Graph<double>;
using V = Var<double>;
using Inputs = std::vector<V>;

Tensor<double> uniform(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(s);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Magnitudes in [0.1, 1] with random sign, so relu never sits on its kink.
Tensor<double> off_zero(const Shape& s, Rng& rng) {
  Tensor<double> t(s);
  for (auto& v : t.data()) {
    const double m = rng.uniform(0.1, 1.0);
    v = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

// Scalar loss <y, R> with R fixed per check.
V project(V y, Rng& rng) {
  Rng local = rng.split(y.shape().numel());
  return sum(mul(y, y.graph().constant(uniform(y.shape(), local))));
}

class Suite {
 public:
  Suite(std::uint64_t seed, double eps) : rng_(seed), eps_(eps) {}

  template <typename Build>
  void check(std::string name, std::vector<Tensor<double>> inputs, Build build) {
    Rng proj = rng_.split(name);
    GraphBuilder<double> f = [&](G&, const Inputs& v) {
      Rng r = proj;
      return build(v, r);
    };
    results_.push_back({std::move(name), finite_diff_check(f, inputs, eps_)});
  }

  Rng& rng() { return rng_; }
  std::vector<OpCheck> take() { return std::move(results_); }

 private:
  Rng rng_;
  double eps_;
  std::vector<OpCheck> results_;
};

}  // namespace

std::vector<OpCheck> run_gradient_suite(std::uint64_t seed, double eps) {
  Suite s(seed, eps);
  Rng& r = s.rng();

  s.check("matmul", {uniform({4, 5}, r), uniform({5, 3}, r)},
          [](const Inputs& v, Rng& p) { return project(matmul(v[0], v[1]), p); });
  s.check("bmm_transpose", {uniform({2, 3, 4}, r), uniform({2, 5, 4}, r)},
          [](const Inputs& v, Rng& p) { return project(bmm(v[0], transpose_last2(v[1])), p); });
  s.check("softmax_rows", {uniform({4, 6}, r, -3, 3)},
          [](const Inputs& v, Rng& p) { return project(softmax_rows(v[0]), p); });
  s.check("conv2d", {uniform({2, 3, 6, 6}, r), uniform({4, 3, 3, 3}, r), uniform({4}, r)},
          [](const Inputs& v, Rng& p) {
            return project(conv2d(v[0], Conv2dParams<double>{v[1], v[2], 1, Padding::same()}), p);
          });
  s.check("conv2d_stride2_valid", {uniform({2, 2, 6, 5}, r), uniform({3, 2, 3, 3}, r)},
          [](const Inputs& v, Rng& p) {
            return project(conv2d(v[0], Conv2dParams<double>{v[1], std::nullopt, 2, Padding::valid()}), p);
          });
  s.check("depthwise_conv2d", {uniform({2, 3, 5, 6}, r), uniform({3, 1, 3, 3}, r)},
          [](const Inputs& v, Rng& p) {
            return project(depthwise_conv2d(v[0], v[1], 2, Padding::same()), p);
          });
  s.check("pointwise_conv2d", {uniform({2, 4, 5, 5}, r), uniform({3, 4, 1, 1}, r)},
          [](const Inputs& v, Rng& p) { return project(pointwise_conv2d(v[0], v[1]), p); });
  s.check("separable_conv2d",
          {uniform({2, 3, 5, 5}, r), uniform({3, 1, 3, 3}, r), uniform({4, 3, 1, 1}, r)},
          [](const Inputs& v, Rng& p) { return project(separable_conv2d(v[0], v[1], v[2]), p); });
  s.check("batch_norm_train", {uniform({3, 2, 4, 4}, r), uniform({2}, r, 0.5, 1.5), uniform({2}, r)},
          [](const Inputs& v, Rng& p) {
            auto bn = batch_norm(v[0], v[1], v[2], BatchNormState<double>::fresh(2), Mode::train);
            return project(bn.output, p);
          });
  s.check("batch_norm_eval", {uniform({2, 3, 3, 3}, r), uniform({3}, r, 0.5, 1.5), uniform({3}, r)},
          [](const Inputs& v, Rng& p) {
            BatchNormState<double> st{Tensor<double>(Shape{3}, {0.1, -0.2, 0.3}),
                                      Tensor<double>(Shape{3}, {0.5, 1.5, 2.0})};
            return project(batch_norm(v[0], v[1], v[2], st, Mode::eval).output, p);
          });
  s.check("relu", {off_zero({3, 4, 5}, r)},
          [](const Inputs& v, Rng& p) { return project(relu(v[0]), p); });
  s.check("sigmoid", {uniform({3, 4, 5}, r, -4, 4)},
          [](const Inputs& v, Rng& p) { return project(sigmoid(v[0]), p); });
  s.check("max_pool2d", {uniform({2, 2, 6, 6}, r)},
          [](const Inputs& v, Rng& p) { return project(max_pool2d(v[0]), p); });
  s.check("global_avg_pool", {uniform({2, 3, 4, 5}, r)},
          [](const Inputs& v, Rng& p) { return project(global_avg_pool(v[0]), p); });
  s.check("global_max_pool", {uniform({2, 3, 4, 5}, r)},
          [](const Inputs& v, Rng& p) { return project(global_max_pool(v[0]), p); });
  s.check("channel_mean_max", {uniform({2, 4, 3, 3}, r)},
          [](const Inputs& v, Rng& p) {
            return project(concat_channels<double>({channel_mean(v[0]), channel_max(v[0])}), p);
          });
  s.check("fully_connected", {uniform({3, 5}, r), uniform({5, 4}, r), uniform({4}, r)},
          [](const Inputs& v, Rng& p) { return project(fully_connected(v[0], v[1], v[2]), p); });
  s.check("scale_channels_spatial",
          {uniform({2, 3, 4, 4}, r), uniform({2, 3}, r), uniform({2, 1, 4, 4}, r)},
          [](const Inputs& v, Rng& p) {
            return project(scale_spatial(scale_channels(v[0], v[1]), v[2]), p);
          });
  const Shape cbam_in{2, 6, 5, 5};
  s.check("channel_attention",
          {uniform(cbam_in, r), off_zero({6, 3}, r), off_zero({3, 6}, r), uniform({1, 2, 3, 3}, r)},
          [](const Inputs& v, Rng& p) {
            return project(channel_attention(v[0], CbamParams<double>{v[1], v[2], v[3]}), p);
          });
  s.check("spatial_attention",
          {uniform(cbam_in, r), uniform({6, 3}, r), uniform({3, 6}, r), uniform({1, 2, 5, 5}, r)},
          [](const Inputs& v, Rng& p) {
            return project(spatial_attention(v[0], CbamParams<double>{v[1], v[2], v[3]}), p);
          });
  s.check("cbam",
          {uniform(cbam_in, r), off_zero({6, 2}, r), off_zero({2, 6}, r), uniform({1, 2, 3, 3}, r)},
          [](const Inputs& v, Rng& p) {
            return project(cbam(v[0], CbamParams<double>{v[1], v[2], v[3]}), p);
          });
  s.check("self_attention",
          {uniform({2, 4, 2, 3}, r), uniform({4, 3}, r), uniform({4, 3}, r), uniform({4, 2}, r),
           uniform({2, 5}, r)},
          [](const Inputs& v, Rng& p) {
            return project(self_attention(v[0], SelfAttentionParams<double>{v[1], v[2], v[3], v[4]}), p);
          });
  s.check("cross_entropy", {uniform({4, 3}, r, -2, 2)}, [](const Inputs& v, Rng&) {
    return cross_entropy_loss(v[0], std::vector<int>{0, 2, 1, 2});
  });
  return s.take();
}

}  // namespace xfnet
