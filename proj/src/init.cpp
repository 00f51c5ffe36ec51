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

#include "xfnet/init.hpp"

#include <cmath>

namespace xfnet {

Fans default_fans(const Shape& shape) {
  if (shape.rank() >= 3) {
    std::size_t receptive = 1;
    for (std::size_t a = 2; a < shape.rank(); ++a) receptive *= shape[a];
    return {shape[1] * receptive, shape[0] * receptive};
  }
  if (shape.rank() == 2) return {shape[0], shape[1]};
  return {shape[0], shape[0]};
}

template <typename T>
Tensor<T> init_tensor(const Shape& shape, InitScheme scheme, Rng& rng, Fans fans) {
  Tensor<T> t(shape);
  auto data = t.data();
  switch (scheme) {
    case InitScheme::zeros:
      break;
    case InitScheme::ones:
      for (auto& v : data) v = T{1};
      break;
    case InitScheme::he_normal: {
      const double stddev = std::sqrt(2.0 / static_cast<double>(fans.fan_in));
      for (auto& v : data) v = static_cast<T>(stddev * rng.normal());
      break;
    }
    case InitScheme::glorot_uniform: {
      const double bound = std::sqrt(6.0 / static_cast<double>(fans.fan_in + fans.fan_out));
      for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
      break;
    }
  }
  return t;
}

template Tensor<float> init_tensor<float>(const Shape&, InitScheme, Rng&, Fans);
template Tensor<double> init_tensor<double>(const Shape&, InitScheme, Rng&, Fans);

}  // namespace xfnet
