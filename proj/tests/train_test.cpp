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

#include "test_util.hpp"
#include "xfnet/loss.hpp"
#include "xfnet/train.hpp"

namespace xfnet {
namespace {

TEST(CrossEntropyTest, UniformLogits) {
  Graph<double> g;
  auto l = cross_entropy_loss(g.constant(Tensor<double>(Shape{1, 2})), {1});
  EXPECT_NEAR(l.value().item(), 0.693147, 1e-6);
}

TEST(CrossEntropyTest, ExtremeLogitsStayFinite) {
  Graph<float> g;
  auto l = cross_entropy_loss(g.constant(Tensor<float>(Shape{1, 2}, {1000.0f, -1000.0f})), {0});
  EXPECT_EQ(l.value().item(), 0.0f);
  auto l1 = cross_entropy_loss(g.constant(Tensor<float>(Shape{1, 2}, {1000.0f, -1000.0f})), {1});
  EXPECT_NEAR(l1.value().item(), 2000.0f, 1e-3f);
}

TEST(CrossEntropyTest, BatchIsTheMeanOfSamples) {
  Graph<double> g;
  const Tensor<double> a(Shape{1, 3}, {0.2, -1.0, 0.5}), b(Shape{1, 3}, {2.0, 0.1, -0.3});
  const double la = cross_entropy_loss(g.constant(a), {2}).value().item();
  const double lb = cross_entropy_loss(g.constant(b), {0}).value().item();
  const double both = cross_entropy_loss(g.constant(Tensor<double>(Shape{2, 3}, {0.2, -1.0, 0.5, 2.0, 0.1, -0.3})), {2, 0})
                          .value()
                          .item();
  EXPECT_NEAR(both, (la + lb) / 2, 1e-15);
  const double direct = -(0.5 - std::log(std::exp(0.2) + std::exp(-1.0) + std::exp(0.5)));
  EXPECT_NEAR(la, direct, 1e-15);
}

TEST(CrossEntropyTest, LabelOutOfRange) {
  Graph<double> g;
  EXPECT_THROW(cross_entropy_loss(g.constant(Tensor<double>(Shape{1, 2})), {2}), Error);
  EXPECT_THROW(cross_entropy_loss(g.constant(Tensor<double>(Shape{1, 2})), {-1}), Error);
}

TEST(LearningRateTest, Examples) {
  EXPECT_EQ(lr_at_epoch(1e-4, 0, 5), 1e-4);
  EXPECT_EQ(lr_at_epoch(1e-4, 5, 5), 5e-5);
  EXPECT_EQ(lr_at_epoch(1e-4, 12, 5), 2.5e-5);
}

TEST(LearningRateTest, TwentyEpochScheduleIsExact) {
  std::vector<double> got;
  for (std::size_t e = 0; e < 20; ++e) got.push_back(lr_at_epoch(1e-4, e, 5));
  std::vector<double> expected;
  for (double lr : {1e-4, 5e-5, 2.5e-5, 1.25e-5}) expected.insert(expected.end(), 5, lr);
  EXPECT_EQ(got, expected);
  for (std::size_t e = 1; e < 100; ++e) EXPECT_LE(lr_at_epoch(1e-4, e, 5), lr_at_epoch(1e-4, e - 1, 5));
  EXPECT_THROW(lr_at_epoch(1e-4, 1, 0), ConfigError);
}

TEST(AdamTest, FirstStepClosedForm) {
  // m_hat = g and v_hat = g^2 after one step, so the move is -lr g / (|g| + eps).
  const double lr = 1e-3, eps = 1e-8;
  for (double g : {0.5, -2.0, 1e-6, 3e-9}) {
    ParamMap p{{"w", Tensor<float>(Shape{1}, 0.0f)}};
    GradientMap<float> grads{{"w", Tensor<float>(Shape{1}, float(g))}};
    AdamState st;
    adam_step(p, grads, st, lr, 0.9, 0.999, eps);
    const double gf = float(g);
    EXPECT_FLOAT_EQ(p.at("w")[0], float(-lr * gf / (std::abs(gf) + eps))) << g;
    EXPECT_EQ(st.t, 1u);
  }
}

TEST(AdamTest, MatchesReferenceOverSeveralSteps) {
  Rng rng(3);
  ParamMap p{{"a", testing::random_tensor<float>(Shape{2, 3}, rng)}, {"b", testing::random_tensor<float>(Shape{4}, rng)}};
  std::map<std::string, std::vector<double>> w, m, v;
  for (auto& [n, t] : p) {
    w[n].assign(t.data().begin(), t.data().end());
    m[n].assign(t.size(), 0.0);
    v[n].assign(t.size(), 0.0);
  }
  AdamState st;
  for (int step = 1; step <= 6; ++step) {
    GradientMap<float> grads;
    for (auto& [n, t] : p) grads.emplace(n, testing::random_tensor<float>(t.shape(), rng, -2, 2));
    adam_step(p, grads, st, 0.01, 0.9, 0.999, 1e-8);
    for (auto& [n, t] : p)
      for (std::size_t i = 0; i < t.size(); ++i) {
        const double g = grads.at(n)[i];
        m[n][i] = 0.9 * m[n][i] + 0.1 * g;
        v[n][i] = 0.999 * v[n][i] + 0.001 * g * g;
        const double mh = m[n][i] / (1 - std::pow(0.9, step)), vh = v[n][i] / (1 - std::pow(0.999, step));
        w[n][i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
        EXPECT_NEAR(t[i], w[n][i], 1e-5) << n << " step " << step;
        EXPECT_GE(st.v.at(n)[i], 0.0f);
      }
  }
}

TEST(AdamTest, ZeroGradientLeavesParametersUnchanged) {
  ParamMap p{{"w", Tensor<float>(Shape{3}, {1.0f, -2.0f, 0.25f})}};
  const auto before = p.at("w");
  AdamState st;
  for (int i = 0; i < 50; ++i) adam_step(p, {{"w", Tensor<float>(Shape{3})}}, st, 0.1, 0.9, 0.999, 1e-8);
  EXPECT_EQ(p.at("w"), before);
}

TEST(AdamTest, TwoInstancesAreBitIdentical) {
  Rng r1(9), r2(9);
  ParamMap p1{{"w", Tensor<float>(Shape{5}, 0.5f)}}, p2 = p1;
  AdamState s1, s2;
  for (int i = 0; i < 10; ++i) {
    adam_step(p1, {{"w", testing::random_tensor<float>(Shape{5}, r1)}}, s1, 0.01, 0.9, 0.999, 1e-8);
    adam_step(p2, {{"w", testing::random_tensor<float>(Shape{5}, r2)}}, s2, 0.01, 0.9, 0.999, 1e-8);
  }
  EXPECT_EQ(p1.at("w"), p2.at("w"));
  EXPECT_EQ(s1.m.at("w"), s2.m.at("w"));
}

TEST(AdamTest, NanGradientNamesParameterAndChangesNothing) {
  ParamMap p{{"fc.bias", Tensor<float>(Shape{2}, 1.0f)}, {"fc.weight", Tensor<float>(Shape{2}, 1.0f)}};
  GradientMap<float> grads{{"fc.bias", Tensor<float>(Shape{2}, 0.5f)},
                           {"fc.weight", Tensor<float>(Shape{2}, {0.1f, std::nanf("")})}};
  const ParamMap before = p;
  AdamState st;
  try {
    adam_step(p, grads, st, 0.1, 0.9, 0.999, 1e-8);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("fc.weight"), std::string::npos);
  }
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.t, 0u);
  EXPECT_TRUE(st.m.empty());
}

TEST(AdamTest, StepDecreasesAQuadratic) {
  // f(w) = (w - 3)^2
  for (float w0 : {-1.0f, 2.5f, 10.0f}) {
    ParamMap p{{"w", Tensor<float>(Shape{1}, w0)}};
    AdamState st;
    adam_step(p, {{"w", Tensor<float>(Shape{1}, 2 * (w0 - 3))}}, st, 1e-3, 0.9, 0.999, 1e-8);
    const float w1 = p.at("w")[0];
    EXPECT_LT((w1 - 3) * (w1 - 3), (w0 - 3) * (w0 - 3));
  }
}

TEST(RunHistoryTest, BestEpochIsEarliestArgmax) {
  RunHistory h;
  const double val[] = {0.5, 0.75, 0.6, 0.75, 0.7};
  for (std::size_t i = 0; i < 5; ++i) h.epochs.push_back({i + 1, 1e-4, 0.5, 0.5, val[i]});
  EXPECT_EQ(h.best_index(), 1u);
  EXPECT_THROW(RunHistory{}.best_index(), Error);
}

TEST(RunHistoryTest, TextTable) {
  RunHistory h;
  h.epochs.push_back({1, 1e-4, 0.693147, 0.5, 0.25});
  h.epochs.push_back({2, 5e-5, 0.5, 0.75, 0.5});
  EXPECT_EQ(h.to_text(),
            "# epoch lr train_loss train_acc val_acc\n"
            "1 0.0001 0.693147 0.5 0.25\n"
            "2 5e-05 0.5 0.75 0.5\n"
            "# best_epoch 2\n");
}

TEST(AucTest, Examples) {
  EXPECT_EQ(roc_auc({0.1, 0.2, 0.8, 0.9}, {false, false, true, true}), 1.0);
  EXPECT_EQ(roc_auc({0.3, 0.3, 0.3, 0.3}, {false, true, true, false}), 0.5);
  EXPECT_EQ(roc_auc({0.9, 0.4, 0.5, 0.1}, {true, true, false, false}), 0.75);
  EXPECT_EQ(roc_auc({0.9, 0.1}, {false, true}), 0.0);
}

TEST(AucTest, SingleClassIsUndefined) {
  EXPECT_FALSE(roc_auc({0.1, 0.5}, {true, true}).has_value());
  EXPECT_FALSE(roc_auc({0.1, 0.5}, {false, false}).has_value());
  EXPECT_THROW(roc_auc({0.1}, {true, false}), Error);
}

double brute_force_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
  long long twice = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (pos[i] && !pos[j]) {
        ++pairs;
        twice += s[i] > s[j] ? 2 : s[i] == s[j] ? 1 : 0;
      }
  return double(twice) / double(2 * pairs);
}

TEST(AucTest, MatchesAllPairsOracleExactly) {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<double> s(n);
    std::vector<bool> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = double(rng.below(trial % 2 ? 5 : 1000)) / 10.0;  // coarse grids force ties
      pos[i] = rng.below(2);
    }
    pos[0] = true;
    pos[1] = false;
    EXPECT_EQ(*roc_auc(s, pos), brute_force_auc(s, pos)) << trial;
  }
}

TEST(AucTest, InvariantUnderMonotoneTransform) {
  Rng rng(5);
  std::vector<double> s(40), t(40);
  std::vector<bool> pos(40);
  for (std::size_t i = 0; i < 40; ++i) {
    s[i] = double(rng.below(10));
    t[i] = std::exp(3 * s[i]) - 7;
    pos[i] = i % 3 == 0;
  }
  EXPECT_EQ(roc_auc(s, pos), roc_auc(t, pos));
}

Dataset tiny_data(std::size_t per_class, std::uint64_t seed) {
  SynthSpec s;
  s.per_class = per_class;
  s.height = s.width = 32;
  s.seed = seed;
  return synth_dataset(s);
}

TEST(EvaluateTest, OwnPredictionsGiveFullAccuracy) {
  const Model m(preset_config("tiny"), 4);
  Dataset d = tiny_data(6, 1);
  const auto first = evaluate(m, d, 5);
  d.labels = first.predictions;
  d.class_names = {"a", "b"};
  EXPECT_EQ(evaluate(m, d, 5).accuracy, 1.0);
  EXPECT_EQ(first.positive_scores.size(), d.size());
  for (double p : first.positive_scores) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(EvaluateTest, SingleClassAucIsFlagged) {
  const Model m(preset_config("tiny"), 4);
  Dataset d = tiny_data(3, 1);
  for (auto& l : d.labels) l = 0;
  const auto ev = evaluate(m, d);
  EXPECT_FALSE(ev.auc.has_value());
  EXPECT_FALSE(ev.auc_note.empty());
}

TEST(EvaluateTest, RepeatedEvaluationIsIdentical) {
  const Model m(preset_config("tiny"), 4);
  const Dataset d = tiny_data(5, 2);
  const auto a = evaluate(m, d, 3), b = evaluate(m, d, 4);
  EXPECT_EQ(a.positive_scores, b.positive_scores);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.auc, b.auc);
}

TEST(TrainTest, OneStepPerEpochAtFullBatch) {
  Model m(preset_config("tiny"), 1);
  TrainConfig tc;  // batch 64, 20 epochs, lr 1e-4 halving every 5
  const auto h = train(m, tiny_data(32, 1), tiny_data(4, 2), tc);
  EXPECT_EQ(h.optimizer_steps, 20u);
  ASSERT_EQ(h.epochs.size(), 20u);
  for (std::size_t e = 0; e < 20; ++e) EXPECT_EQ(h.epochs[e].lr, 1e-4 / double(1 << (e / 5)));
}

TEST(TrainTest, LastPartialBatchIsKept) {
  Model m(preset_config("tiny"), 1);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.epochs = 2;
  const auto h = train(m, tiny_data(5, 1), tiny_data(2, 2), tc);
  EXPECT_EQ(h.optimizer_steps, 6u);  // 10 samples -> 4 + 4 + 2
}

TEST(TrainTest, SameSeedSameHistory) {
  TrainConfig tc;
  tc.batch_size = 8;
  tc.epochs = 3;
  tc.initial_lr = 1e-3;
  tc.seed = 42;
  const auto tr = tiny_data(8, 1), va = tiny_data(4, 2);
  Model a(preset_config("tiny"), 7), b(preset_config("tiny"), 7);
  const auto ha = train(a, tr, va, tc), hb = train(b, tr, va, tc);
  EXPECT_EQ(ha.to_text(), hb.to_text());
  for (const auto& n : a.parameter_names()) EXPECT_EQ(a.parameter(n), b.parameter(n)) << n;
  tc.seed = 43;
  Model c(preset_config("tiny"), 7);
  EXPECT_NE(train(c, tr, va, tc).to_text(), ha.to_text());
}

TEST(TrainTest, RestoresBestValidationEpoch) {
  TrainConfig tc;
  tc.batch_size = 8;
  tc.epochs = 4;
  tc.initial_lr = 3e-3;
  const auto tr = tiny_data(8, 1), va = tiny_data(6, 2);
  Model m(preset_config("tiny"), 3);
  const auto h = train(m, tr, va, tc);
  EXPECT_EQ(evaluate(m, va, 8).accuracy, h.epochs[h.best_index()].val_acc);
}

TEST(TrainTest, DivergenceReportsLocation) {
  Model m(preset_config("tiny"), 3);
  m.set_parameter("fc.bias", Tensor<float>(Shape{2}, std::nanf("")));
  TrainConfig tc;
  tc.batch_size = 4;
  try {
    train(m, tiny_data(4, 1), tiny_data(2, 2), tc);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1, batch 1"), std::string::npos) << e.what();
  }
}

TEST(TrainTest, RejectsMismatchedData) {
  Model m(preset_config("tiny"), 3);
  SynthSpec s;
  s.per_class = 2;  // 64x64 images for a 32x32 model
  EXPECT_THROW(train(m, synth_dataset(s), tiny_data(2, 2), TrainConfig{}), ShapeError);
  TrainConfig bad;
  bad.beta1 = 1.0;
  EXPECT_THROW(train(m, tiny_data(2, 1), tiny_data(2, 2), bad), ConfigError);
}

}  // namespace
}  // namespace xfnet
