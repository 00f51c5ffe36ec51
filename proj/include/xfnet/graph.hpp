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

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xfnet/tensor.hpp"

namespace xfnet {

enum class Mode { train, eval };

template <typename T>
class Graph;

/// Handle to a node recorded on a Graph. Cheap to copy; valid while the graph
/// lives.
template <typename T>
class Var {
 public:
  Var(Graph<T>* graph, std::size_t id) : graph_(graph), id_(id) {}

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  Graph<T>& graph() const { return *graph_; }
  std::size_t id() const { return id_; }

 private:
  Graph<T>* graph_;
  std::size_t id_;
};

template <typename T>
using GradientMap = std::map<std::string, Tensor<T>>;

/// What a node's backward function sees: the incoming gradient, its own
/// output value, its inputs' values, and a sink for input gradients.
template <typename T>
class BackwardContext {
 public:
  const Tensor<T>& grad() const { return *grad_; }
  const Tensor<T>& output() const { return *output_; }
  const Tensor<T>& input(std::size_t i) const;
  std::size_t num_inputs() const { return inputs_->size(); }
  bool needs(std::size_t i) const;

  /// Adds `g` into the gradient of input `i`. Multiple uses of one node sum.
  void accumulate(std::size_t i, Tensor<T> g);

 private:
  friend class Graph<T>;
  BackwardContext(const Graph<T>& graph, const std::vector<std::size_t>& inputs,
                  const Tensor<T>& output, const Tensor<T>& grad,
                  std::vector<std::optional<Tensor<T>>>& grads)
      : graph_(&graph), inputs_(&inputs), output_(&output), grad_(&grad), grads_(&grads) {}

  const Graph<T>* graph_;
  const std::vector<std::size_t>* inputs_;
  const Tensor<T>* output_;
  const Tensor<T>* grad_;
  std::vector<std::optional<Tensor<T>>>* grads_;
};

/// Append-only tape. Nodes are recorded in execution order, so every node's
/// inputs precede it and reverse iteration is a valid backward schedule.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(BackwardContext<T>&)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Named differentiable leaf. Names must be unique within the graph.
  Var<T> parameter(std::string name, Tensor<T> value);

  /// Non-differentiable leaf.
  Var<T> constant(Tensor<T> value);

  /// Records an operation output. `backward` may be empty for
  /// non-differentiable results.
  Var<T> record(std::string_view op, Tensor<T> value, std::vector<Var<T>> inputs,
                BackwardFn backward);

  /// Reverse-mode sweep from a single-element `loss`. Returns one gradient per
  /// parameter leaf; unreachable leaves get zeros.
  GradientMap<T> backward(Var<T> loss) const;

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::string_view op(std::size_t id) const { return nodes_.at(id).op; }
  std::size_t size() const { return nodes_.size(); }

  std::vector<std::string> parameter_names() const;
  std::optional<Var<T>> find_parameter(const std::string& name);

 private:
  struct Node {
    std::string op;
    Tensor<T> value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::string name;  // parameters only
  };

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> parameters_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph_->value(id_);
}

extern template class Graph<float>;
extern template class Graph<double>;
extern template class BackwardContext<float>;
extern template class BackwardContext<double>;

}  // namespace xfnet
