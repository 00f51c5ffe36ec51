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

#include "xfnet/rng.hpp"
#include "xfnet/tensor.hpp"

namespace xfnet {

enum class InitScheme { he_normal, glorot_uniform, zeros, ones };

struct Fans {
  std::size_t fan_in = 1;
  std::size_t fan_out = 1;
};

/// Fan convention by rank: a rank-4 tensor is a conv kernel
/// [out, in, kh, kw]; a rank-2 tensor is a projection matrix [in, out]; a
/// rank-1 tensor uses its length for both.
Fans default_fans(const Shape& shape);

/// he_normal: N(0, 2/fan_in). glorot_uniform: U(+-sqrt(6/(fan_in+fan_out))).
/// Draws are taken in row-major order from `rng`.
template <typename T>
Tensor<T> init_tensor(const Shape& shape, InitScheme scheme, Rng& rng, Fans fans);

template <typename T>
Tensor<T> init_tensor(const Shape& shape, InitScheme scheme, Rng& rng) {
  return init_tensor<T>(shape, scheme, rng, default_fans(shape));
}

}  // namespace xfnet
