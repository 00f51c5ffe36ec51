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

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xfnet/data.hpp"
#include "xfnet/model.hpp"

namespace xfnet {

struct TrainConfig {
  std::size_t batch_size = 64;
  double initial_lr = 1e-4;
  std::size_t epochs = 20;
  std::size_t lr_halving_period = 5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

/// initial * 0.5^floor(epoch / period), epoch counted from 0.
double lr_at_epoch(double initial, std::size_t epoch, std::size_t period);

using ParamMap = std::map<std::string, Tensor<float>, std::less<>>;

struct AdamState {
  ParamMap m;
  ParamMap v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update of every entry in `params`, in place. All
/// gradients are checked before anything changes: a missing, mis-shaped or
/// non-finite gradient throws naming the parameter and leaves params and
/// state untouched. Moments are kept in float; the update is computed in
/// double per element.
void adam_step(ParamMap& params, const GradientMap<float>& grads, AdamState& state, double lr,
               double beta1, double beta2, double epsilon);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0;
  double train_loss = 0;
  double train_acc = 0;
  double val_acc = 0;
};

struct RunHistory {
  std::vector<EpochRecord> epochs;
  std::size_t optimizer_steps = 0;

  /// 0-based index of the highest validation accuracy, earliest on ties.
  std::size_t best_index() const;

  /// Whitespace-separated table with a '#' header line and a trailing
  /// "# best_epoch N" line. Values print with 9 significant digits.
  std::string to_text() const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains in place. Each epoch reshuffles with a generator derived from
/// cfg.seed, walks every sample once (the last batch may be short), then
/// scores val_set in eval mode. On return the model holds the parameters and
/// batch-norm statistics from the best validation epoch. A non-finite loss
/// throws NumericError naming the epoch and batch.
RunHistory train(Model& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                 const EpochCallback& on_epoch = {});

/// Mann-Whitney form: the fraction of (positive, negative) pairs where the
/// positive scores higher, ties counting one half. Computed from doubled
/// mid-ranks in integer arithmetic, so the only rounding is the final
/// division. Empty when either class is absent.
std::optional<double> roc_auc(const std::vector<double>& scores, const std::vector<bool>& positive);

struct Evaluation {
  double accuracy = 0;
  std::optional<double> auc;
  std::string auc_note;  // why auc is empty
  std::vector<double> positive_scores;  // softmax probability of class 1
  std::vector<int> predictions;
};

/// Eval-mode pass in batches. AUC treats class 1 as positive, one against
/// the rest.
Evaluation evaluate(const Model& model, const Dataset& data, std::size_t batch_size = 64);

}  // namespace xfnet
