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
#include <string>
#include <string_view>
#include <vector>

#include "xfnet/config.hpp"
#include "xfnet/graph.hpp"
#include "xfnet/init.hpp"
#include "xfnet/nn.hpp"

namespace xfnet {

/// One traced layer output. Shapes are per sample: [C, H, W] for feature
/// maps, [C] after pooling, [num_classes] for the logits.
struct TraceEntry {
  std::string layer;
  Shape shape;
  bool operator==(const TraceEntry&) const = default;
};

using ShapeTrace = std::vector<TraceEntry>;

std::string format_trace(const ShapeTrace& trace);

struct TensorDecl {
  std::string name;
  Shape shape;
  InitScheme init;
};

/// Everything known about a config without allocating feature maps.
struct ModelStructure {
  ShapeTrace trace;
  std::vector<TensorDecl> parameters;
  std::vector<TensorDecl> buffers;  // batch-norm running statistics
  std::vector<std::string> residual_blocks;
  std::vector<std::string> cbam_modules;
};

/// Symbolic walk of the architecture. Throws ConfigError for invalid configs
/// and ShapeError naming the layer whose contract fails (e.g. an input too
/// small for the entry flow's downsampling).
ModelStructure describe(const ModelConfig& cfg);

inline ShapeTrace shape_trace(const ModelConfig& cfg) { return describe(cfg).trace; }

/// Receives named intermediate values during a forward pass, at the same
/// points shape_trace reports.
using ForwardObserver = std::function<void(const std::string& layer, const Tensor<float>& value)>;

/// The assembled network. Parameters are float and stored by dotted name in
/// declaration order; batch-norm running statistics live in a separate buffer
/// registry that is saved with the weights but not counted as parameters.
class Model {
 public:
  /// Each tensor is initialized from Rng(seed).split(name), so a parameter's
  /// initial value does not depend on what else the config contains.
  explicit Model(ModelConfig cfg, std::uint64_t seed = 0);

  const ModelConfig& config() const { return cfg_; }
  const ModelStructure& structure() const { return structure_; }

  const std::vector<std::string>& parameter_names() const { return param_names_; }
  const std::vector<std::string>& buffer_names() const { return buffer_names_; }
  bool has_parameter(std::string_view name) const;
  const Tensor<float>& parameter(std::string_view name) const;
  const Tensor<float>& buffer(std::string_view name) const;
  /// Shape must match the registered tensor.
  void set_parameter(std::string_view name, Tensor<float> value);
  void set_buffer(std::string_view name, Tensor<float> value);

  /// Records the network on `graph` with every parameter as a named leaf and
  /// returns logits [B, num_classes]. Train mode normalizes with batch
  /// statistics and commits the running-stat updates to this model.
  Var<float> forward(Graph<float>& graph, const Tensor<float>& batch, Mode mode,
                     const ForwardObserver& observer = {});

  /// Eval-mode logits. Const and safe to call from several threads at once.
  Tensor<float> infer(const Tensor<float>& batch, const ForwardObserver& observer = {}) const;

 private:
  Var<float> run(Graph<float>& graph, const Tensor<float>& batch, Mode mode, bool leaves,
                 const ForwardObserver& observer,
                 std::vector<std::pair<std::string, BatchNormState<float>>>* bn_updates) const;

  ModelConfig cfg_;
  ModelStructure structure_;
  std::vector<std::string> param_names_;
  std::vector<std::string> buffer_names_;
  std::map<std::string, Tensor<float>, std::less<>> params_;
  std::map<std::string, Tensor<float>, std::less<>> buffers_;
};

std::size_t param_count(const Model& model);

struct ParamDiff {
  std::vector<std::pair<std::string, std::size_t>> only_in_a;  // name, element count
  std::vector<std::pair<std::string, std::size_t>> only_in_b;
  long long count_delta = 0;  // param_count(a) - param_count(b)
};

ParamDiff diff(const Model& a, const Model& b);

struct Variant {
  std::string label;
  ModelConfig config;
};

/// Attention ablation rows derived from `base`: without both modules, without
/// self-attention, without CBAM, full.
std::vector<Variant> attention_ablation_variants(const ModelConfig& base);

/// Middle-flow rows: branches [1,2,3], [1,2,3,4], [1,2], [1], [2], [3], and the
/// original eight-block chain.
std::vector<Variant> middle_flow_variants(const ModelConfig& base);

/// Names in `a` but not `b`, and in `b` but not `a`, each sorted.
std::pair<std::vector<std::string>, std::vector<std::string>> name_diff(
    std::vector<std::string> a, std::vector<std::string> b);

}  // namespace xfnet
