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

#include "xfnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "xfnet/loss.hpp"
#include "xfnet/rng.hpp"

namespace xfnet {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(initial_lr > 0)) throw ConfigError("initial learning rate must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (lr_halving_period == 0) throw ConfigError("lr halving period must be positive");
  if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in (0, 1)");
  if (!(epsilon > 0)) throw ConfigError("Adam epsilon must be positive");
}

double lr_at_epoch(double initial, std::size_t epoch, std::size_t period) {
  if (period == 0) throw ConfigError("lr halving period must be positive");
  // Exact: halving only moves the exponent.
  return std::ldexp(initial, -static_cast<int>(epoch / period));
}

void adam_step(ParamMap& params, const GradientMap<float>& grads, AdamState& state, double lr, double beta1,
               double beta2, double epsilon) {
  for (const auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw Error("adam_step: no gradient for parameter " + name);
    if (!(it->second.shape() == p.shape()))
      throw ShapeError("adam_step: gradient for " + name + " has shape " + it->second.shape().str() +
                       ", parameter has " + p.shape().str());
    if (!it->second.all_finite()) throw NumericError("adam_step: non-finite gradient for parameter " + name);
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correct1 = 1.0 - std::pow(beta1, t);
  const double correct2 = 1.0 - std::pow(beta2, t);
  for (auto& [name, p] : params) {
    const auto& g = grads.find(name)->second;
    auto [m_it, m_new] = state.m.try_emplace(name, p.shape());
    auto [v_it, v_new] = state.v.try_emplace(name, p.shape());
    auto m = m_it->second.data();
    auto v = v_it->second.data();
    auto w = p.data();
    auto gd = g.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = gd[i];
      const double mi = beta1 * m[i] + (1.0 - beta1) * gi;
      const double vi = beta2 * v[i] + (1.0 - beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      w[i] = static_cast<float>(w[i] - lr * (mi / correct1) / (std::sqrt(vi / correct2) + epsilon));
    }
  }
}

std::size_t RunHistory::best_index() const {
  if (epochs.empty()) throw Error("empty run history has no best epoch");
  std::size_t best = 0;
  for (std::size_t i = 1; i < epochs.size(); ++i)
    if (epochs[i].val_acc > epochs[best].val_acc) best = i;
  return best;
}

std::string RunHistory::to_text() const {
  std::ostringstream out;
  out << "# epoch lr train_loss train_acc val_acc\n";
  char line[160];
  for (const auto& e : epochs) {
    std::snprintf(line, sizeof line, "%zu %.9g %.9g %.9g %.9g\n", e.epoch, e.lr, e.train_loss, e.train_acc,
                  e.val_acc);
    out << line;
  }
  if (!epochs.empty()) out << "# best_epoch " << epochs[best_index()].epoch << '\n';
  return out.str();
}

namespace {

int argmax_row(const Tensor<float>& logits, std::size_t row) {
  const std::size_t k = logits.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j)
    if (logits[row * k + j] > logits[row * k + best]) best = j;
  return static_cast<int>(best);
}

void check_dataset(const Dataset& data, const ModelConfig& cfg, const char* what) {
  data.validate();
  if (data.height() != cfg.input_height || data.width() != cfg.input_width)
    throw ShapeError(std::string(what) + ": images are " + std::to_string(data.height()) + "x" +
                     std::to_string(data.width()) + ", model expects " + std::to_string(cfg.input_height) + "x" +
                     std::to_string(cfg.input_width));
  for (int label : data.labels)
    if (label < 0 || static_cast<std::size_t>(label) >= cfg.num_classes)
      throw Error(std::string(what) + ": label " + std::to_string(label) + " outside the model's " +
                  std::to_string(cfg.num_classes) + " classes");
}

struct Snapshot {
  ParamMap params;
  ParamMap buffers;
};

Snapshot snapshot(const Model& m) {
  Snapshot s;
  for (const auto& n : m.parameter_names()) s.params.emplace(n, m.parameter(n));
  for (const auto& n : m.buffer_names()) s.buffers.emplace(n, m.buffer(n));
  return s;
}

void restore(Model& m, Snapshot s) {
  for (auto& [n, t] : s.params) m.set_parameter(n, std::move(t));
  for (auto& [n, t] : s.buffers) m.set_buffer(n, std::move(t));
}

}  // namespace

RunHistory train(Model& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                 const EpochCallback& on_epoch) {
  cfg.validate();
  check_dataset(train_set, model.config(), "training set");
  check_dataset(val_set, model.config(), "validation set");

  RunHistory history;
  AdamState adam;
  Rng shuffle = Rng(cfg.seed).split("shuffle");
  std::vector<std::size_t> order(train_set.size());
  std::optional<Snapshot> best;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg.initial_lr, epoch, cfg.lr_halving_period);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0, batch_no = 1; start < order.size(); start += cfg.batch_size, ++batch_no) {
      const std::vector<std::size_t> idx(order.begin() + start,
                                         order.begin() + std::min(order.size(), start + cfg.batch_size));
      const auto labels = gather_labels(train_set, idx);
      Graph<float> graph;
      auto logits = model.forward(graph, gather_batch(train_set, idx), Mode::train);
      auto loss = cross_entropy_loss(logits, labels);
      const double batch_loss = loss.value().item();
      if (!std::isfinite(batch_loss))
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(batch_no));
      loss_sum += batch_loss * static_cast<double>(idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r)
        if (argmax_row(logits.value(), r) == labels[r]) ++correct;

      auto grads = graph.backward(loss);
      ParamMap params;
      for (const auto& n : model.parameter_names()) params.emplace(n, model.parameter(n));
      adam_step(params, grads, adam, lr, cfg.beta1, cfg.beta2, cfg.epsilon);
      ++history.optimizer_steps;
      for (auto& [n, t] : params) model.set_parameter(n, std::move(t));
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    rec.val_acc = evaluate(model, val_set, cfg.batch_size).accuracy;
    history.epochs.push_back(rec);
    if (history.best_index() == history.epochs.size() - 1) best = snapshot(model);
    if (on_epoch) on_epoch(rec);
  }
  restore(model, std::move(*best));
  return history;
}

std::optional<double> roc_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw Error("roc_auc: scores and labels differ in length");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of doubled mid-ranks over positives. A tie group occupying sorted
  // positions [i, j) has 1-based ranks i+1..j, mean (i + 1 + j) / 2.
  unsigned long long rank2_sum = 0, n_pos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i + 1;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    for (std::size_t k = i; k < j; ++k)
      if (positive[idx[k]]) {
        rank2_sum += i + 1 + j;
        ++n_pos;
      }
    i = j;
  }
  const unsigned long long n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  // 2U = sum(2 * rank) - n_pos (n_pos + 1)
  const unsigned long long u2 = rank2_sum - n_pos * (n_pos + 1);
  return static_cast<double>(u2) / static_cast<double>(2 * n_pos * n_neg);
}

Evaluation evaluate(const Model& model, const Dataset& data, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  check_dataset(data, model.config(), "evaluation set");
  Evaluation ev;
  std::vector<bool> positive;
  std::size_t correct = 0;
  const std::size_t k = model.config().num_classes;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    const auto logits = model.infer(gather_batch(data, idx));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const int pred = argmax_row(logits, r);
      const int label = data.labels[idx[r]];
      ev.predictions.push_back(pred);
      if (pred == label) ++correct;
      double mx = logits[r * k];
      for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, double(logits[r * k + j]));
      double z = 0.0;
      for (std::size_t j = 0; j < k; ++j) z += std::exp(double(logits[r * k + j]) - mx);
      ev.positive_scores.push_back(k > 1 ? std::exp(double(logits[r * k + 1]) - mx) / z : 1.0);
      positive.push_back(label == 1);
    }
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  ev.auc = roc_auc(ev.positive_scores, positive);
  if (!ev.auc) ev.auc_note = "AUC undefined: the dataset does not contain both class 1 and another class";
  return ev;
}

}  // namespace xfnet
