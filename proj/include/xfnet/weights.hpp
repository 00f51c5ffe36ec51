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

#include "xfnet/model.hpp"

namespace xfnet {

/// Weight file layout, all integers little-endian:
///
///   "XFN1"                     4 bytes
///   version                    u32 (currently 1)
///   config fingerprint         u64, ModelConfig::fingerprint()
///   record count               u32
///   per record:
///     name length, name bytes  u32, UTF-8
///     rank, dims               u32, rank x u32
///     payload                  IEEE-754 binary32, row-major
///
/// Records hold every parameter in declaration order followed by every
/// batch-norm buffer.
inline constexpr std::uint32_t kWeightFormatVersion = 1;

std::vector<std::uint8_t> serialize_weights(const Model& model);

/// Parses and validates everything before touching `model`, so any error
/// leaves it unchanged. Rejects bad magic or version, truncation, trailing
/// bytes, and name-set or shape mismatches (listing every missing and
/// unexpected name). A fingerprint mismatch is an error unless
/// `ignore_fingerprint`; its message also carries the name diff.
void deserialize_weights(const std::vector<std::uint8_t>& bytes, Model& model, bool ignore_fingerprint = false);

/// Written to a sibling temporary file and renamed into place.
void save_weights(const Model& model, const std::string& path);
void load_weights(const std::string& path, Model& model, bool ignore_fingerprint = false);

/// Writes `contents` to `path` through a temporary file and rename, so the
/// target is either untouched or complete.
void write_file_atomically(const std::string& path, const std::string& contents);

}  // namespace xfnet
