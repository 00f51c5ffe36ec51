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
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace xfnet {

enum class MiddleFlowKind { fused, original_xception };

// Widths are given at multiplier 1 and scaled by width_multiplier at build
// time. A key or value dimension of 0 means "derive from the attention input
// width" (C/8, floored, at least 1).
struct ModelConfig {
  std::size_t input_height = 224;
  std::size_t input_width = 224;
  double width_multiplier = 1.0;
  std::vector<std::size_t> middle_branches{1, 2, 3};
  bool cbam_enabled = true;
  bool self_attention_enabled = true;
  MiddleFlowKind middle_flow_kind = MiddleFlowKind::fused;
  std::size_t num_classes = 2;
  std::size_t attention_key_dim = 0;
  std::size_t attention_value_dim = 0;
  std::size_t attention_out_dim = 2048;
  std::size_t cbam_reduction = 16;
  std::size_t cbam_kernel = 7;

  /// Throws ConfigError on the first violated invariant.
  void validate() const;

  /// Canonical text in the config-file grammar; parse_config(to_text()) == *this.
  std::string to_text() const;

  /// FNV-1a of the canonical text. Equal for configs building identical
  /// parameter registries and layer graphs.
  std::uint64_t fingerprint() const;

  bool operator==(const ModelConfig&) const = default;
};

/// round(base * multiplier), never below 1.
std::size_t scaled_width(std::size_t base, double multiplier);

std::string_view to_string(MiddleFlowKind kind);

/// Config file grammar, one setting per line:
///
///   line    := blank | comment | setting
///   comment := '#' anything
///   setting := key '=' value [comment]
///
/// Values are typed by key:
///   input_size              N | HxW                 (e.g. 224 or 64x48)
///   width_multiplier        real | a/b              (0, 1]
///   middle_branches         '[' n (',' n)* ']'
///   cbam_enabled            true | false
///   self_attention_enabled  true | false
///   middle_flow_kind        fused | original_xception
///   num_classes             positive integer
///   attention_key_dim       auto | positive integer
///   attention_value_dim     auto | positive integer
///   attention_out_dim       positive integer
///   cbam_reduction          positive integer
///   cbam_kernel             odd positive integer
///   preset                  default | desk | tiny   (must come first)
///
/// Unset keys keep their defaults. Unknown or repeated keys are errors; every
/// error message carries the line number.
ModelConfig parse_config(std::string_view text);

ModelConfig load_config(const std::string& path);

/// "default": 224x224 at width 1. "desk": 64x64 at width 1/8. "tiny": 32x32
/// at width 1/8.
ModelConfig preset_config(std::string_view name);

/// A preset name or a path to a config file.
ModelConfig resolve_config(const std::string& preset_or_path);

}  // namespace xfnet
