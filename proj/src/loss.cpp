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

#include "xfnet/loss.hpp"

#include <algorithm>
#include <cmath>

namespace xfnet {

template <typename T>
Var<T> cross_entropy_loss(Var<T> logits, const std::vector<int>& labels) {
  const Shape& s = logits.shape();
  require_rank(s, 2, "cross_entropy_loss");
  const std::size_t batch = s[0], classes = s[1];
  if (labels.size() != batch) {
    throw ShapeError("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for logits " +
                     s.str());
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw Error("cross_entropy_loss: label " + std::to_string(label) + " outside [0, " +
                  std::to_string(classes) + ")");
    }
  }
  const auto z = logits.value().data();
  // softmax probabilities are kept for the backward pass
  std::vector<T> probs(z.size());
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const T* row = z.data() + b * classes;
    const T mx = *std::max_element(row, row + classes);
    double se = 0.0;
    for (std::size_t k = 0; k < classes; ++k) se += std::exp(static_cast<double>(row[k] - mx));
    const double lse = static_cast<double>(mx) + std::log(se);
    total += lse - static_cast<double>(row[labels[b]]);
    for (std::size_t k = 0; k < classes; ++k) {
      probs[b * classes + k] = static_cast<T>(std::exp(static_cast<double>(row[k]) - lse));
    }
  }
  const T loss = static_cast<T>(total / static_cast<double>(batch));
  return logits.graph().record(
      "cross_entropy", Tensor<T>::scalar(loss), {logits},
      [probs = std::move(probs), labels, batch, classes](BackwardContext<T>& ctx) {
        const T g = ctx.grad().item() / static_cast<T>(batch);
        Tensor<T> d(Shape{batch, classes});
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t k = 0; k < classes; ++k) {
            const T onehot = static_cast<std::size_t>(labels[b]) == k ? T{1} : T{0};
            d[b * classes + k] = g * (probs[b * classes + k] - onehot);
          }
        }
        ctx.accumulate(0, std::move(d));
      });
}

template Var<float> cross_entropy_loss<float>(Var<float>, const std::vector<int>&);
template Var<double> cross_entropy_loss<double>(Var<double>, const std::vector<int>&);

}  // namespace xfnet
