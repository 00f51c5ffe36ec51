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

#include "xfnet/model.hpp"

#include <algorithm>
#include <sstream>

#include "xfnet/attention.hpp"
#include "xfnet/ops.hpp"
#include "xfnet/rng.hpp"

namespace xfnet {

namespace {

struct Widths {
  std::size_t conv1, conv2, block1, block2, middle, exit_block, exit_sep, exit_out;
  std::size_t key_dim, value_dim;
};

Widths widths_for(const ModelConfig& cfg) {
  const double m = cfg.width_multiplier;
  Widths w{};
  w.conv1 = scaled_width(32, m);
  w.conv2 = scaled_width(64, m);
  w.block1 = scaled_width(128, m);
  w.block2 = scaled_width(256, m);
  w.middle = scaled_width(728, m);
  w.exit_block = scaled_width(1024, m);
  w.exit_sep = scaled_width(1536, m);
  w.exit_out = scaled_width(cfg.attention_out_dim, m);
  const std::size_t derived = std::max<std::size_t>(1, w.exit_sep / 8);
  w.key_dim = cfg.attention_key_dim ? scaled_width(cfg.attention_key_dim, m) : derived;
  w.value_dim = cfg.attention_value_dim ? scaled_width(cfg.attention_value_dim, m) : derived;
  return w;
}

// The architecture, written once against an abstract backend. `Ops::Value`
// is a per-sample Shape for the symbolic pass and a Var for real execution.
template <class Ops>
typename Ops::Value entry_block(Ops& ops, const std::string& name, typename Ops::Value x,
                                std::size_t width, bool leading_relu) {
  ops.residual(name);
  auto shortcut = ops.shortcut(name + ".shortcut", x, width);
  auto y = leading_relu ? ops.relu(x) : x;
  y = ops.relu(ops.separable_bn(name + ".sep1", y, width));
  y = ops.max_pool(name + ".pool", ops.separable_bn(name + ".sep2", y, width));
  return ops.add(name, y, shortcut);
}

template <class Ops>
typename Ops::Value middle_block(Ops& ops, const std::string& name, typename Ops::Value x,
                                 std::size_t width) {
  ops.residual(name);
  auto y = x;
  for (int i = 1; i <= 3; ++i) y = ops.separable_bn(name + ".sep" + std::to_string(i), ops.relu(y), width);
  return ops.add(name, y, x);
}

template <class Ops>
typename Ops::Value run_architecture(const ModelConfig& cfg, Ops& ops, typename Ops::Value x) {
  const Widths w = widths_for(cfg);

  // Entry flow. The two plain convolutions are unpadded, as in the reference
  // Xception, which is what yields 14x14 at the end of the entry flow.
  x = ops.relu(ops.conv_bn("entry.conv1", x, w.conv1, 3, 2, Padding::valid()));
  ops.mark("entry.conv1", x);
  x = ops.relu(ops.conv_bn("entry.conv2", x, w.conv2, 3, 1, Padding::valid()));
  ops.mark("entry.conv2", x);
  x = entry_block(ops, "entry.block1", x, w.block1, false);
  ops.mark("entry.block1", x);
  x = entry_block(ops, "entry.block2", x, w.block2, true);
  ops.mark("entry.block2", x);
  x = entry_block(ops, "entry.block3", x, w.middle, true);
  ops.mark("entry.block3", x);
  ops.mark("entry.out", x);

  if (cfg.middle_flow_kind == MiddleFlowKind::fused) {
    // Every branch sees the same entry output.
    std::vector<typename Ops::Value> outs;
    for (std::size_t b = 0; b < cfg.middle_branches.size(); ++b) {
      auto y = x;
      for (std::size_t j = 0; j < cfg.middle_branches[b]; ++j) {
        const std::string name = "middle.branch" + std::to_string(b + 1) + ".block" + std::to_string(j + 1);
        y = middle_block(ops, name, y, w.middle);
        ops.mark(name, y);
        if (cfg.cbam_enabled) {
          y = ops.cbam(name + ".cbam", y);
          ops.mark(name + ".cbam", y);
        }
      }
      outs.push_back(y);
    }
    auto cat = ops.concat("middle.concat", outs);
    ops.mark("middle.concat", cat);
    x = ops.conv_bn("middle.fusion", cat, w.middle, 1, 1, Padding::valid());
    ops.mark("middle.fusion", x);
  } else {
    for (int n = 1; n <= 8; ++n) {
      const std::string name = "middle.block" + std::to_string(n);
      x = middle_block(ops, name, x, w.middle);
      ops.mark(name, x);
    }
  }

  {
    const std::string name = "exit.block1";
    ops.residual(name);
    auto shortcut = ops.shortcut(name + ".shortcut", x, w.exit_block);
    auto y = ops.separable_bn(name + ".sep1", ops.relu(x), w.middle);
    y = ops.separable_bn(name + ".sep2", ops.relu(y), w.exit_block);
    x = ops.add(name, ops.max_pool(name + ".pool", y), shortcut);
    ops.mark(name, x);
  }
  x = ops.relu(ops.separable_bn("exit.sep1", x, w.exit_sep));
  ops.mark("exit.sep1", x);

  if (cfg.self_attention_enabled) {
    auto global = ops.attention("exit.attn", x, w.key_dim, w.value_dim, w.exit_out);
    ops.mark("exit.attn", global);
    auto local = ops.relu(ops.separable_bn("exit.sep2", x, w.exit_out));
    ops.mark("exit.sep2", local);
    x = ops.add("exit.add", global, local);
    ops.mark("exit.add", x);
  } else {
    x = ops.relu(ops.separable_bn("exit.sep2", x, w.exit_out));
    ops.mark("exit.sep2", x);
  }

  x = ops.global_avg_pool(x);
  ops.mark("exit.gap", x);
  x = ops.fully_connected("fc", x, cfg.num_classes);
  ops.mark("fc", x);
  return x;
}

// Symbolic backend: propagates per-sample shapes and declares tensors.
class DeclareOps {
 public:
  using Value = Shape;

  explicit DeclareOps(const ModelConfig& cfg) : cfg_(cfg) {}

  ModelStructure take() { return std::move(out_); }

  void mark(const std::string& name, const Shape& s) { out_.trace.push_back({name, s}); }
  void residual(const std::string& name) { out_.residual_blocks.push_back(name); }

  Shape relu(const Shape& s) { return s; }

  Shape conv_bn(const std::string& name, const Shape& x, std::size_t out, std::size_t k,
                std::size_t stride, Padding pad) {
    param(name + ".kernel", Shape{out, x[0], k, k}, InitScheme::he_normal);
    batch_norm(name + ".bn", out);
    return spatial(name, x, out, k, stride, pad.resolve(k));
  }

  Shape shortcut(const std::string& name, const Shape& x, std::size_t out) {
    return conv_bn(name, x, out, 1, 2, Padding::valid());
  }

  Shape separable_bn(const std::string& name, const Shape& x, std::size_t out) {
    param(name + ".depthwise", Shape{x[0], 1, 3, 3}, InitScheme::he_normal);
    param(name + ".pointwise", Shape{out, x[0], 1, 1}, InitScheme::he_normal);
    batch_norm(name + ".bn", out);
    return spatial(name, x, out, 3, 1, 1);
  }

  Shape max_pool(const std::string& name, const Shape& x) { return spatial(name, x, x[0], 3, 2, 1); }

  Shape add(const std::string& name, const Shape& a, const Shape& b) {
    if (!(a == b)) throw ShapeError(name + ": cannot add " + a.str() + " and " + b.str());
    return a;
  }

  Shape cbam(const std::string& name, const Shape& x) {
    const std::size_t hidden = cbam_hidden_width(x[0], cfg_.cbam_reduction);
    const std::size_t k = cfg_.cbam_kernel;
    param(name + ".mlp_w1", Shape{x[0], hidden}, InitScheme::glorot_uniform);
    param(name + ".mlp_w2", Shape{hidden, x[0]}, InitScheme::glorot_uniform);
    param(name + ".spatial_kernel", Shape{1, 2, k, k}, InitScheme::he_normal);
    out_.cbam_modules.push_back(name);
    return x;
  }

  Shape concat(const std::string& name, const std::vector<Shape>& parts) {
    std::size_t channels = 0;
    for (const auto& p : parts) {
      if (p[1] != parts[0][1] || p[2] != parts[0][2])
        throw ShapeError(name + ": spatial sizes differ: " + p.str() + " vs " + parts[0].str());
      channels += p[0];
    }
    return Shape{channels, parts[0][1], parts[0][2]};
  }

  Shape attention(const std::string& name, const Shape& x, std::size_t dk, std::size_t dv,
                  std::size_t out) {
    param(name + ".w_q", Shape{x[0], dk}, InitScheme::glorot_uniform);
    param(name + ".w_k", Shape{x[0], dk}, InitScheme::glorot_uniform);
    param(name + ".w_v", Shape{x[0], dv}, InitScheme::glorot_uniform);
    param(name + ".w_out", Shape{dv, out}, InitScheme::glorot_uniform);
    return Shape{out, x[1], x[2]};
  }

  Shape global_avg_pool(const Shape& x) { return Shape{x[0]}; }

  Shape fully_connected(const std::string& name, const Shape& x, std::size_t classes) {
    param(name + ".weight", Shape{x[0], classes}, InitScheme::glorot_uniform);
    param(name + ".bias", Shape{classes}, InitScheme::zeros);
    return Shape{classes};
  }

 private:
  void param(std::string name, Shape s, InitScheme init) {
    out_.parameters.push_back({std::move(name), std::move(s), init});
  }

  void batch_norm(const std::string& name, std::size_t ch) {
    param(name + ".scale", Shape{ch}, InitScheme::ones);
    param(name + ".shift", Shape{ch}, InitScheme::zeros);
    out_.buffers.push_back({name + ".running_mean", Shape{ch}, InitScheme::zeros});
    out_.buffers.push_back({name + ".running_var", Shape{ch}, InitScheme::ones});
  }

  static Shape spatial(const std::string& name, const Shape& x, std::size_t out, std::size_t k,
                       std::size_t stride, std::size_t pad) {
    return Shape{out, conv_output_size(x[1], k, stride, pad, name.c_str()),
                 conv_output_size(x[2], k, stride, pad, name.c_str())};
  }

  const ModelConfig& cfg_;
  ModelStructure out_;
};

using BnUpdates = std::vector<std::pair<std::string, BatchNormState<float>>>;

// Real backend: executes on a Graph using the model's tensors.
class GraphOps {
 public:
  using Value = Var<float>;
  using Lookup = std::function<const Tensor<float>&(const std::string&)>;

  GraphOps(Graph<float>& g, Mode mode, bool leaves, Lookup params,
           Lookup buffers, const ForwardObserver& observer, BnUpdates* updates)
      : g_(g), mode_(mode), leaves_(leaves), params_(std::move(params)),
        buffers_(std::move(buffers)), observer_(observer), updates_(updates) {}

  void mark(const std::string& name, const Var<float>& v) {
    if (observer_) observer_(name, v.value());
  }
  void residual(const std::string&) {}

  Var<float> relu(Var<float> x) { return xfnet::relu(x); }

  Var<float> conv_bn(const std::string& name, Var<float> x, std::size_t, std::size_t, std::size_t stride,
                     Padding pad) {
    return guard(name, [&] {
      Conv2dParams<float> p{param(name + ".kernel"), std::nullopt, stride, pad};
      return batch_norm(name + ".bn", conv2d(x, p));
    });
  }

  Var<float> shortcut(const std::string& name, Var<float> x, std::size_t out) {
    return conv_bn(name, x, out, 1, 2, Padding::valid());
  }

  Var<float> separable_bn(const std::string& name, Var<float> x, std::size_t) {
    return guard(name, [&] {
      auto y = separable_conv2d(x, param(name + ".depthwise"), param(name + ".pointwise"));
      return batch_norm(name + ".bn", y);
    });
  }

  Var<float> max_pool(const std::string& name, Var<float> x) {
    return guard(name, [&] { return max_pool2d(x, 3, 2, Padding::same()); });
  }

  Var<float> add(const std::string& name, Var<float> a, Var<float> b) {
    return guard(name, [&] { return xfnet::add(a, b); });
  }

  Var<float> cbam(const std::string& name, Var<float> x) {
    return guard(name, [&] {
      CbamParams<float> p{param(name + ".mlp_w1"), param(name + ".mlp_w2"), param(name + ".spatial_kernel")};
      return xfnet::cbam(x, p);
    });
  }

  Var<float> concat(const std::string& name, const std::vector<Var<float>>& parts) {
    return guard(name, [&] { return concat_channels(parts); });
  }

  Var<float> attention(const std::string& name, Var<float> x, std::size_t, std::size_t, std::size_t) {
    return guard(name, [&] {
      SelfAttentionParams<float> p{param(name + ".w_q"), param(name + ".w_k"), param(name + ".w_v"),
                                   param(name + ".w_out")};
      return self_attention(x, p);
    });
  }

  Var<float> global_avg_pool(Var<float> x) { return xfnet::global_avg_pool(x); }

  Var<float> fully_connected(const std::string& name, Var<float> x, std::size_t) {
    return guard(name, [&] { return xfnet::fully_connected(x, param(name + ".weight"), param(name + ".bias")); });
  }

 private:
  template <class F>
  Var<float> guard(const std::string& name, F&& f) {
    try {
      return f();
    } catch (const ShapeError& e) {
      throw ShapeError(name + ": " + e.what());
    }
  }

  Var<float> param(const std::string& name) {
    return leaves_ ? g_.parameter(name, params_(name)) : g_.constant(params_(name));
  }

  Var<float> batch_norm(const std::string& name, Var<float> x) {
    BatchNormState<float> state{buffers_(name + ".running_mean"), buffers_(name + ".running_var")};
    auto r = xfnet::batch_norm(x, param(name + ".scale"), param(name + ".shift"), state, mode_);
    if (mode_ == Mode::train && updates_) updates_->emplace_back(name, std::move(r.state));
    return r.output;
  }

  Graph<float>& g_;
  Mode mode_;
  bool leaves_;
  Lookup params_;
  Lookup buffers_;
  const ForwardObserver& observer_;
  BnUpdates* updates_;
};

template <class Map>
auto& lookup(Map& map, std::string_view name, const char* what) {
  auto it = map.find(name);
  if (it == map.end()) throw Error(std::string("no ") + what + " named '" + std::string(name) + "'");
  return it->second;
}

}  // namespace

std::string format_trace(const ShapeTrace& trace) {
  std::size_t width = 0;
  for (const auto& e : trace) width = std::max(width, e.layer.size());
  std::ostringstream out;
  for (const auto& e : trace) {
    out << e.layer << std::string(width + 2 - e.layer.size(), ' ') << e.shape.str() << '\n';
  }
  return out.str();
}

ModelStructure describe(const ModelConfig& cfg) {
  cfg.validate();
  DeclareOps ops(cfg);
  run_architecture(cfg, ops, Shape{3, cfg.input_height, cfg.input_width});
  return ops.take();
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), structure_(describe(cfg_)) {
  const Rng root(seed);
  for (const auto& d : structure_.parameters) {
    Rng rng = root.split(d.name);
    if (!params_.emplace(d.name, init_tensor<float>(d.shape, d.init, rng)).second)
      throw Error("duplicate parameter name " + d.name);
    param_names_.push_back(d.name);
  }
  for (const auto& d : structure_.buffers) {
    Rng rng = root.split(d.name);
    buffers_.emplace(d.name, init_tensor<float>(d.shape, d.init, rng));
    buffer_names_.push_back(d.name);
  }
}

bool Model::has_parameter(std::string_view name) const { return params_.find(name) != params_.end(); }

const Tensor<float>& Model::parameter(std::string_view name) const { return lookup(params_, name, "parameter"); }

const Tensor<float>& Model::buffer(std::string_view name) const { return lookup(buffers_, name, "buffer"); }

void Model::set_parameter(std::string_view name, Tensor<float> value) {
  auto& slot = lookup(params_, name, "parameter");
  if (!(slot.shape() == value.shape()))
    throw ShapeError(std::string(name) + ": expected " + slot.shape().str() + ", got " + value.shape().str());
  slot = std::move(value);
}

void Model::set_buffer(std::string_view name, Tensor<float> value) {
  auto& slot = lookup(buffers_, name, "buffer");
  if (!(slot.shape() == value.shape()))
    throw ShapeError(std::string(name) + ": expected " + slot.shape().str() + ", got " + value.shape().str());
  slot = std::move(value);
}

Var<float> Model::run(Graph<float>& graph, const Tensor<float>& batch, Mode mode, bool leaves,
                      const ForwardObserver& observer, BnUpdates* bn_updates) const {
  const Shape& s = batch.shape();
  if (s.rank() != 4 || s[1] != 3 || s[2] != cfg_.input_height || s[3] != cfg_.input_width) {
    throw ShapeError("input: expected [B, 3, " + std::to_string(cfg_.input_height) + ", " +
                     std::to_string(cfg_.input_width) + "], got " + s.str());
  }
  GraphOps ops(
      graph, mode, leaves, [this](const std::string& n) -> const Tensor<float>& { return parameter(n); },
      [this](const std::string& n) -> const Tensor<float>& { return buffer(n); }, observer, bn_updates);
  return run_architecture(cfg_, ops, graph.constant(batch));
}

Var<float> Model::forward(Graph<float>& graph, const Tensor<float>& batch, Mode mode,
                          const ForwardObserver& observer) {
  BnUpdates updates;
  Var<float> logits = run(graph, batch, mode, true, observer, &updates);
  for (auto& [name, state] : updates) {
    set_buffer(name + ".running_mean", std::move(state.running_mean));
    set_buffer(name + ".running_var", std::move(state.running_var));
  }
  return logits;
}

Tensor<float> Model::infer(const Tensor<float>& batch, const ForwardObserver& observer) const {
  Graph<float> graph;
  return run(graph, batch, Mode::eval, false, observer, nullptr).value();
}

std::size_t param_count(const Model& model) {
  std::size_t n = 0;
  for (const auto& name : model.parameter_names()) n += model.parameter(name).size();
  return n;
}

std::pair<std::vector<std::string>, std::vector<std::string>> name_diff(std::vector<std::string> a,
                                                                         std::vector<std::string> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<std::string> only_a, only_b;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(only_a));
  std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::back_inserter(only_b));
  return {only_a, only_b};
}

ParamDiff diff(const Model& a, const Model& b) {
  auto [only_a, only_b] = name_diff(a.parameter_names(), b.parameter_names());
  ParamDiff d;
  for (auto& n : only_a) d.only_in_a.emplace_back(n, a.parameter(n).size());
  for (auto& n : only_b) d.only_in_b.emplace_back(n, b.parameter(n).size());
  d.count_delta = static_cast<long long>(param_count(a)) - static_cast<long long>(param_count(b));
  return d;
}

std::vector<Variant> attention_ablation_variants(const ModelConfig& base) {
  auto with = [&](bool cbam_on, bool attn_on) {
    ModelConfig c = base;
    c.cbam_enabled = cbam_on;
    c.self_attention_enabled = attn_on;
    return c;
  };
  return {{"w/o CBAM & self-attention", with(false, false)},
          {"w/o self-attention", with(true, false)},
          {"w/o CBAM", with(false, true)},
          {"full model", with(true, true)}};
}

std::vector<Variant> middle_flow_variants(const ModelConfig& base) {
  auto branches = [&](std::vector<std::size_t> b) {
    ModelConfig c = base;
    c.middle_flow_kind = MiddleFlowKind::fused;
    c.middle_branches = std::move(b);
    return c;
  };
  ModelConfig original = base;
  original.middle_flow_kind = MiddleFlowKind::original_xception;
  return {{"branches [1,2,3]", branches({1, 2, 3})},
          {"add 4th branch [1,2,3,4]", branches({1, 2, 3, 4})},
          {"remove 3rd branch [1,2]", branches({1, 2})},
          {"1st branch only [1]", branches({1})},
          {"2nd branch only [2]", branches({2})},
          {"3rd branch only [3]", branches({3})},
          {"original middle flow", original}};
}

}  // namespace xfnet
