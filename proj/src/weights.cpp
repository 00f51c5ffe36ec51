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

#include "xfnet/weights.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>

namespace xfnet {

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    u32(v);
  }
  void raw(std::string_view s) { bytes.insert(bytes.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b_[pos_++]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b_[pos_++]} << (8 * i);
    return v;
  }
  float f32() {
    const std::uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw FormatError("weight file truncated at byte " + std::to_string(pos_));
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

void write_record(Writer& w, const std::string& name, const Tensor<float>& t) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.raw(name);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape().dims()) w.u32(static_cast<std::uint32_t>(d));
  for (float v : t.data()) w.f32(v);
}

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += "\n  " + n;
  return out;
}

std::string describe_name_diff(const std::vector<std::string>& missing, const std::vector<std::string>& unexpected) {
  std::string out;
  if (!missing.empty()) out += "\nmissing from file (" + std::to_string(missing.size()) + "):" + join(missing);
  if (!unexpected.empty()) out += "\nunexpected in file (" + std::to_string(unexpected.size()) + "):" + join(unexpected);
  return out;
}

}  // namespace

std::vector<std::uint8_t> serialize_weights(const Model& model) {
  Writer w;
  w.raw("XFN1");
  w.u32(kWeightFormatVersion);
  w.u64(model.config().fingerprint());
  w.u32(static_cast<std::uint32_t>(model.parameter_names().size() + model.buffer_names().size()));
  for (const auto& n : model.parameter_names()) write_record(w, n, model.parameter(n));
  for (const auto& n : model.buffer_names()) write_record(w, n, model.buffer(n));
  return std::move(w.bytes);
}

void deserialize_weights(const std::vector<std::uint8_t>& bytes, Model& model, bool ignore_fingerprint) {
  Reader r(bytes);
  if (bytes.size() < 4 || r.str(4) != "XFN1") throw FormatError("not a weight file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kWeightFormatVersion)
    throw FormatError("unsupported weight file version " + std::to_string(version));
  const std::uint64_t fingerprint = r.u64();
  const std::uint32_t count = r.u32();

  std::map<std::string, Tensor<float>> records;
  std::vector<std::string> file_names;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    if (name_len > r.remaining()) throw FormatError("weight file truncated in record " + std::to_string(i));
    std::string name = r.str(name_len);
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw FormatError("record " + name + " has invalid rank " + std::to_string(rank));
    std::vector<std::size_t> dims;
    std::size_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      dims.push_back(r.u32());
      if (dims.back() == 0) throw FormatError("record " + name + " has a zero dimension");
      numel *= dims.back();
      if (numel > r.remaining() / 4) throw FormatError("weight file truncated in record " + name);
    }
    std::vector<float> values(numel);
    for (auto& v : values) v = r.f32();
    if (records.count(name)) throw FormatError("duplicate record " + name);
    file_names.push_back(name);
    records.emplace(std::move(name), Tensor<float>(Shape(dims), std::move(values)));
  }
  if (!r.done()) throw FormatError("weight file has " + std::to_string(r.remaining()) + " trailing bytes");

  std::vector<std::string> model_names = model.parameter_names();
  model_names.insert(model_names.end(), model.buffer_names().begin(), model.buffer_names().end());
  const auto [missing, unexpected] = name_diff(model_names, file_names);
  const std::string diff_text = describe_name_diff(missing, unexpected);

  if (fingerprint != model.config().fingerprint() && !ignore_fingerprint)
    throw ConfigError("weight file was saved from a different model config" +
                      (diff_text.empty() ? std::string("; parameter names agree") : diff_text));
  if (!diff_text.empty()) throw ConfigError("weight file does not match the model's tensors" + diff_text);
  for (const auto& n : model_names) {
    const Tensor<float>& expected = model.has_parameter(n) ? model.parameter(n) : model.buffer(n);
    if (!(records.at(n).shape() == expected.shape()))
      throw ShapeError("weight record " + n + " is " + records.at(n).shape().str() + ", model expects " +
                       expected.shape().str());
  }

  for (auto& [n, t] : records) {
    if (model.has_parameter(n)) model.set_parameter(n, std::move(t));
    else model.set_buffer(n, std::move(t));
  }
}

void write_file_atomically(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.close();
    if (!out) {
      std::filesystem::remove(tmp);
      throw Error("write to " + tmp + " failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot rename " + tmp + " to " + path + ": " + ec.message());
  }
}

void save_weights(const Model& model, const std::string& path) {
  const auto bytes = serialize_weights(model);
  write_file_atomically(path, std::string(bytes.begin(), bytes.end()));
}

void load_weights(const std::string& path, Model& model, bool ignore_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open weight file " + path);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    deserialize_weights(bytes, model, ignore_fingerprint);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace xfnet
