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

#include <optional>
#include <vector>

#include "xfnet/graph.hpp"

namespace xfnet {

/// Spatial padding rule. `same` requires an odd kernel and pads (k-1)/2 on
/// every side, giving ceil(input/stride) outputs; `valid` pads nothing.
struct Padding {
  enum class Kind { same, valid, explicit_amount };
  Kind kind = Kind::same;
  std::size_t amount = 0;

  static Padding same() { return {Kind::same, 0}; }
  static Padding valid() { return {Kind::valid, 0}; }
  static Padding explicit_(std::size_t n) { return {Kind::explicit_amount, n}; }

  /// Per-side padding for a kernel extent; throws ShapeError for an even
  /// kernel under `same`.
  std::size_t resolve(std::size_t kernel) const;
};

/// floor((in + 2 pad - kernel) / stride) + 1; throws ShapeError when the
/// padded input is smaller than the kernel. `what` names the layer.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t pad, const char* what);

template <typename T>
struct Conv2dParams {
  Var<T> kernel;                 // [out_ch, in_ch, kh, kw]
  std::optional<Var<T>> bias;    // [out_ch]
  std::size_t stride = 1;
  Padding padding = Padding::same();
};

/// Cross-correlation (no kernel flip) of x[B, C, H, W].
template <typename T>
Var<T> conv2d(Var<T> x, const Conv2dParams<T>& p);

/// Per-channel convolution with kernel [C, 1, kh, kw].
template <typename T>
Var<T> depthwise_conv2d(Var<T> x, Var<T> kernel, std::size_t stride, Padding padding);

/// 1x1 convolution with kernel [out_ch, in_ch, 1, 1], stride 1.
template <typename T>
Var<T> pointwise_conv2d(Var<T> x, Var<T> kernel);

/// Depthwise then pointwise, with no activation in between.
template <typename T>
Var<T> separable_conv2d(Var<T> x, Var<T> depthwise_kernel, Var<T> pointwise_kernel,
                        std::size_t stride = 1, Padding padding = Padding::same());

template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.01);
  T epsilon = T(1e-3);

  static BatchNormState fresh(std::size_t channels);
};

template <typename T>
struct BatchNormResult {
  Var<T> output;
  /// Train mode: running stats moved toward the batch statistics. Eval mode:
  /// the input state unchanged.
  BatchNormState<T> state;
  /// Per-channel biased batch statistics (train mode only).
  std::optional<Tensor<T>> batch_mean;
  std::optional<Tensor<T>> batch_var;
};

/// Per-channel normalization of x[B, C, H, W] followed by scale*xhat + shift.
/// Train mode uses the biased batch variance over (B, H, W) and updates the
/// running stats as (1 - momentum) * old + momentum * batch.
template <typename T>
BatchNormResult<T> batch_norm(Var<T> x, Var<T> scale, Var<T> shift,
                              const BatchNormState<T>& state, Mode mode);

/// max(0, x); the derivative at 0 is 0.
template <typename T> Var<T> relu(Var<T> x);
template <typename T> Var<T> sigmoid(Var<T> x);

/// Windowed maximum over x[B, C, H, W]; padded cells never win.
template <typename T>
Var<T> max_pool2d(Var<T> x, std::size_t window = 3, std::size_t stride = 2,
                  Padding padding = Padding::same());

/// [B, C, H, W] -> [B, C]
template <typename T> Var<T> global_avg_pool(Var<T> x);
template <typename T> Var<T> global_max_pool(Var<T> x);

/// [B, C, H, W] -> [B, 1, H, W]
template <typename T> Var<T> channel_mean(Var<T> x);
template <typename T> Var<T> channel_max(Var<T> x);

/// x[B, F] * weight[F, K] + bias[K]
template <typename T>
Var<T> fully_connected(Var<T> x, Var<T> weight, Var<T> bias);

/// Concatenates feature maps along the channel axis.
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

/// x[B, C, H, W] * w[B, C] broadcast over H, W.
template <typename T>
Var<T> scale_channels(Var<T> x, Var<T> weights);

/// x[B, C, H, W] * m[B, 1, H, W] broadcast over C.
template <typename T>
Var<T> scale_spatial(Var<T> x, Var<T> map);

/// [B, C, H, W] -> [B, H*W, C] (position-major tokens).
template <typename T> Var<T> to_tokens(Var<T> x);
/// [B, H*W, C] -> [B, C, H, W]
template <typename T> Var<T> from_tokens(Var<T> tokens, std::size_t height, std::size_t width);

}  // namespace xfnet
