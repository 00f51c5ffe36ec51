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
#include <string>
#include <vector>

#include "xfnet/gradcheck.hpp"

namespace xfnet {

struct OpCheck {
  std::string op;
  GradCheckReport report;
};

/// Finite-difference checks in 64-bit mode for every differentiable
/// operation, on random inputs with every dimension <= 6. Each op's output is
/// reduced to a scalar through a fixed random projection so no gradient is
/// trivially zero.
std::vector<OpCheck> run_gradient_suite(std::uint64_t seed, double eps = 1e-6);

}  // namespace xfnet
