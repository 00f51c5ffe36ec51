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

#include <vector>

#include "xfnet/graph.hpp"

namespace xfnet {

/// Mean over the batch of -log softmax(logits)[label], via log-sum-exp.
/// logits is [B, K]; throws Error for labels outside [0, K).
template <typename T>
Var<T> cross_entropy_loss(Var<T> logits, const std::vector<int>& labels);

}  // namespace xfnet
