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

#include <array>
#include <cstdint>
#include <string_view>

namespace xfnet {

/// xoshiro256** seeded through splitmix64. Uses only integer arithmetic plus
/// sqrt/log for normals, so sequences are reproducible across platforms for a
/// given seed and call order.
///
/// Streams are split by seed derivation, not by state jumping: `split(k)`
/// depends only on the original seed and `k`, never on how many values the
/// parent has produced.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal, Marsaglia polar method.
  double normal();

  /// Uniform integer in [0, n), unbiased. n must be > 0.
  std::uint64_t below(std::uint64_t n);

  Rng split(std::uint64_t stream) const;
  Rng split(std::string_view stream) const;

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// 64-bit FNV-1a; stable names -> stream ids and config fingerprints.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace xfnet
