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

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "test_util.hpp"
#include "xfnet/weights.hpp"

namespace fs = std::filesystem;

namespace xfnet {
namespace {

using Snapshot = std::map<std::string, Tensor<float>>;

Snapshot snapshot(const Model& m) {
  Snapshot s;
  for (const auto& n : m.parameter_names()) s.emplace(n, m.parameter(n));
  for (const auto& n : m.buffer_names()) s.emplace(n, m.buffer(n));
  return s;
}

Model perturbed(const ModelConfig& c, std::uint64_t seed) {
  Model m(c, seed);
  Rng rng(seed + 100);
  for (const auto& n : m.buffer_names())
    m.set_buffer(n, testing::random_tensor<float>(m.buffer(n).shape(), rng, 0.1, 2.0));
  return m;
}

TEST(WeightsTest, RoundTripIsBitExact) {
  const auto c = preset_config("tiny");
  const Model src = perturbed(c, 1);
  Model dst(c, 2);
  deserialize_weights(serialize_weights(src), dst);
  const auto a = snapshot(src), b = snapshot(dst);
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [n, t] : a) {
    ASSERT_EQ(t.shape(), b.at(n).shape()) << n;
    EXPECT_EQ(std::memcmp(t.data().data(), b.at(n).data().data(), t.size() * sizeof(float)), 0) << n;
  }
  EXPECT_EQ(serialize_weights(src), serialize_weights(dst));
}

TEST(WeightsTest, ByteLayout) {
  const auto c = preset_config("tiny");
  const Model m(c, 1);
  const auto bytes = serialize_weights(m);
  auto u32 = [&](std::size_t at) {
    return std::uint32_t(bytes[at]) | std::uint32_t(bytes[at + 1]) << 8 | std::uint32_t(bytes[at + 2]) << 16 |
           std::uint32_t(bytes[at + 3]) << 24;
  };
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "XFN1");
  EXPECT_EQ(u32(4), 1u);
  EXPECT_EQ(u32(8) | std::uint64_t(u32(12)) << 32, c.fingerprint());
  EXPECT_EQ(u32(16), m.parameter_names().size() + m.buffer_names().size());
  // first record: entry.conv1.kernel, [4, 3, 3, 3]
  const std::string first = m.parameter_names()[0];
  EXPECT_EQ(first, "entry.conv1.kernel");
  EXPECT_EQ(u32(20), first.size());
  EXPECT_EQ(std::string(bytes.begin() + 24, bytes.begin() + 24 + long(first.size())), first);
  std::size_t at = 24 + first.size();
  EXPECT_EQ(u32(at), 4u);
  EXPECT_EQ(u32(at + 4), 4u);
  EXPECT_EQ(u32(at + 8), 3u);
  float f;
  const std::uint32_t raw = u32(at + 20);
  std::memcpy(&f, &raw, 4);
  EXPECT_EQ(f, m.parameter(first)[0]);

  std::size_t expected = 20;
  for (const auto& [n, t] : snapshot(m)) expected += 4 + n.size() + 4 + 4 * t.rank() + 4 * t.size();
  EXPECT_EQ(bytes.size(), expected);
}

TEST(WeightsTest, CrossConfigLoadListsEveryCbamTensor) {
  auto with = preset_config("tiny");
  auto without = with;
  without.cbam_enabled = false;
  const auto bytes = serialize_weights(Model(with, 1));
  Model target(without, 2);
  const auto before = snapshot(target);
  try {
    deserialize_weights(bytes, target);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    std::set<std::string> groups;
    std::size_t listed = 0;
    const Model source(with, 1);
    for (const auto& n : source.parameter_names()) {
      if (n.find(".cbam.") == std::string::npos) continue;
      EXPECT_NE(msg.find(n), std::string::npos) << n;
      groups.insert(n.substr(0, n.find(".cbam.")));
      ++listed;
    }
    EXPECT_EQ(groups.size(), 6u);
    EXPECT_EQ(listed, 18u);
    EXPECT_NE(msg.find("unexpected in file (18)"), std::string::npos) << msg;
  }
  EXPECT_EQ(snapshot(target), before);
  // overriding the fingerprint does not bypass the name check
  EXPECT_THROW(deserialize_weights(bytes, target, true), ConfigError);
}

TEST(WeightsTest, FingerprintMismatchCanBeOverridden) {
  auto a = preset_config("tiny");
  auto b = a;
  b.input_height = b.input_width = 40;  // same tensors, different config
  const Model src = perturbed(a, 1);
  Model dst(b, 2);
  EXPECT_THROW(deserialize_weights(serialize_weights(src), dst), ConfigError);
  deserialize_weights(serialize_weights(src), dst, true);
  EXPECT_EQ(dst.parameter("fc.weight"), src.parameter("fc.weight"));
}

TEST(WeightsTest, CorruptFilesLeaveModelUntouched) {
  const auto c = preset_config("tiny");
  const auto good = serialize_weights(perturbed(c, 1));
  Model target(c, 2);
  const auto before = snapshot(target);
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, std::size_t{30}, good.size() / 2, good.size() - 1}) {
    std::vector<std::uint8_t> truncated(good.begin(), good.begin() + long(cut));
    EXPECT_THROW(deserialize_weights(truncated, target), FormatError) << cut;
  }
  auto bad_magic = good;
  bad_magic[0] = 'Y';
  EXPECT_THROW(deserialize_weights(bad_magic, target), FormatError);
  auto bad_version = good;
  bad_version[4] = 9;
  EXPECT_THROW(deserialize_weights(bad_version, target), FormatError);
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(deserialize_weights(trailing, target), FormatError);
  EXPECT_EQ(snapshot(target), before);
}

TEST(WeightsTest, FileRoundTripIsAtomic) {
  const fs::path dir = fs::path(::testing::TempDir()) / "xfnet_weights_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto c = preset_config("tiny");
  const Model src = perturbed(c, 1);
  const std::string path = (dir / "w.xfn").string();
  save_weights(src, path);
  EXPECT_FALSE(fs::exists(path + ".tmp"));
  Model dst(c, 3);
  load_weights(path, dst);
  EXPECT_EQ(snapshot(dst), snapshot(src));

  // a failed save leaves no file behind
  const std::string nowhere = (dir / "missing" / "w.xfn").string();
  EXPECT_THROW(save_weights(src, nowhere), Error);
  EXPECT_FALSE(fs::exists(nowhere));

  std::ofstream(path, std::ios::binary | std::ios::trunc) << "XFN1";
  try {
    load_weights(path, dst);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(path), std::string::npos);
  }
  fs::remove_all(dir);
}

}  // namespace
}  // namespace xfnet
