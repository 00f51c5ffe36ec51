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

#include <functional>
#include <string>
#include <vector>

#include "xfnet/graph.hpp"

namespace xfnet {

/// Builds a scalar loss from leaf inputs on a fresh graph. Must be
/// deterministic.
template <typename T>
using GraphBuilder = std::function<Var<T>(Graph<T>&, const std::vector<Var<T>>&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Compares backward() against central differences
/// (f(x+eps) - f(x-eps)) / (2 eps) on every coordinate of every input.
/// Relative error is |a - n| / max(|a|, |n|, 1e-8).
template <typename T>
GradCheckReport finite_diff_check(const GraphBuilder<T>& f, const std::vector<Tensor<T>>& inputs,
                                  T eps);

}  // namespace xfnet
