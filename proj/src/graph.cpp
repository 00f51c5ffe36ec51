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

#include "xfnet/graph.hpp"

namespace xfnet {

template <typename T>
const Tensor<T>& BackwardContext<T>::input(std::size_t i) const {
  return graph_->value(inputs_->at(i));
}

template <typename T>
bool BackwardContext<T>::needs(std::size_t i) const {
  return graph_->requires_grad(inputs_->at(i));
}

template <typename T>
void BackwardContext<T>::accumulate(std::size_t i, Tensor<T> g) {
  const std::size_t id = inputs_->at(i);
  if (!graph_->requires_grad(id)) return;
  require_same_shape(g.shape(), graph_->value(id).shape(), "gradient accumulation");
  auto& slot = (*grads_)[id];
  if (!slot) {
    slot = std::move(g);
    return;
  }
  auto dst = slot->data();
  auto src = g.data();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

template <typename T>
Var<T> Graph<T>::parameter(std::string name, Tensor<T> value) {
  if (parameters_.count(name)) throw Error("duplicate graph parameter '" + name + "'");
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{"parameter", std::move(value), {}, {}, true, name});
  parameters_.emplace(std::move(name), id);
  return Var<T>(this, id);
}

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, false, {}});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Graph<T>::record(std::string_view op, Tensor<T> value, std::vector<Var<T>> inputs,
                        BackwardFn backward) {
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  bool requires_grad = false;
  for (const auto& in : inputs) {
    if (&in.graph() != this) {
      throw Error("operation '" + std::string(op) + "' mixes nodes from different graphs");
    }
    ids.push_back(in.id());
    requires_grad = requires_grad || nodes_[in.id()].requires_grad;
  }
  if (!backward) requires_grad = false;
  nodes_.push_back(Node{std::string(op), std::move(value), std::move(ids),
                        requires_grad ? std::move(backward) : BackwardFn{}, requires_grad, {}});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
GradientMap<T> Graph<T>::backward(Var<T> loss) const {
  if (&loss.graph() != this) throw Error("backward: loss belongs to another graph");
  const auto& loss_value = nodes_.at(loss.id()).value;
  if (loss_value.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + loss_value.shape().str());
  }

  std::vector<std::optional<Tensor<T>>> grads(nodes_.size());
  grads[loss.id()] = Tensor<T>(loss_value.shape(), T{1});

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!grads[i] || !node.backward) continue;
    BackwardContext<T> ctx(*this, node.inputs, node.value, *grads[i], grads);
    node.backward(ctx);
    grads[i].reset();
  }

  GradientMap<T> out;
  for (const auto& [name, id] : parameters_) {
    if (grads[id]) {
      out.emplace(name, std::move(*grads[id]));
    } else {
      out.emplace(name, Tensor<T>(nodes_[id].value.shape()));
    }
  }
  return out;
}

template <typename T>
std::vector<std::string> Graph<T>::parameter_names() const {
  std::vector<std::string> names;
  for (const auto& [name, id] : parameters_) names.push_back(name);
  return names;
}

template <typename T>
std::optional<Var<T>> Graph<T>::find_parameter(const std::string& name) {
  auto it = parameters_.find(name);
  if (it == parameters_.end()) return std::nullopt;
  return Var<T>(this, it->second);
}

template class Graph<float>;
template class Graph<double>;
template class BackwardContext<float>;
template class BackwardContext<double>;

}  // namespace xfnet
