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

#include "xfnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace xfnet {
namespace {

std::string input_name(std::size_t i) { return "input" + std::to_string(i); }

template <typename T>
T evaluate(const GraphBuilder<T>& f, const std::vector<Tensor<T>>& inputs) {
  Graph<T> g;
  std::vector<Var<T>> vars;
  for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(g.parameter(input_name(i), inputs[i]));
  return f(g, vars).value().item();
}

}  // namespace

template <typename T>
GradCheckReport finite_diff_check(const GraphBuilder<T>& f, const std::vector<Tensor<T>>& inputs,
                                  T eps) {
  if (!(eps > T{0})) throw Error("finite_diff_check: eps must be positive");

  GradientMap<T> analytic;
  {
    Graph<T> g;
    std::vector<Var<T>> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(g.parameter(input_name(i), inputs[i]));
    analytic = g.backward(f(g, vars));
  }

  GradCheckReport report;
  std::vector<Tensor<T>> probe = inputs;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const Tensor<T>& grad = analytic.at(input_name(i));
    for (std::size_t k = 0; k < probe[i].size(); ++k) {
      const T original = probe[i][k];
      probe[i][k] = original + eps;
      const T up = evaluate(f, probe);
      probe[i][k] = original - eps;
      const T down = evaluate(f, probe);
      probe[i][k] = original;

      const double numeric = (static_cast<double>(up) - static_cast<double>(down)) / (2.0 * eps);
      const double a = grad[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      double err = std::abs(a - numeric) / denom;
      if (std::isnan(err)) err = std::numeric_limits<double>::infinity();
      ++report.coordinates;
      if (err > report.max_rel_error || report.coordinates == 1) {
        report.max_rel_error = err;
        report.worst_input = i;
        report.worst_index = k;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

template GradCheckReport finite_diff_check<float>(const GraphBuilder<float>&,
                                                  const std::vector<Tensor<float>>&, float);
template GradCheckReport finite_diff_check<double>(const GraphBuilder<double>&,
                                                   const std::vector<Tensor<double>>&, double);

}  // namespace xfnet
