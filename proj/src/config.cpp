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

#include "xfnet/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "xfnet/error.hpp"
#include "xfnet/rng.hpp"

namespace xfnet {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

class LineError {
 public:
  explicit LineError(std::size_t line) : line_(line) {}
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("config line " + std::to_string(line_) + ": " + msg);
  }

 private:
  std::size_t line_;
};

std::size_t parse_count(std::string_view v, const LineError& at) {
  std::size_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty()) at.fail("expected an integer, got '" + std::string(v) + "'");
  return out;
}

double parse_real(std::string_view v, const LineError& at) {
  const auto slash = v.find('/');
  if (slash != std::string_view::npos) {
    const double num = parse_real(trim(v.substr(0, slash)), at);
    const double den = parse_real(trim(v.substr(slash + 1)), at);
    if (den == 0.0) at.fail("zero denominator");
    return num / den;
  }
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty()) at.fail("expected a number, got '" + std::string(v) + "'");
  return out;
}

bool parse_bool(std::string_view v, const LineError& at) {
  if (v == "true") return true;
  if (v == "false") return false;
  at.fail("expected true or false, got '" + std::string(v) + "'");
}

std::size_t parse_auto_dim(std::string_view v, const LineError& at) {
  if (v == "auto") return 0;
  const std::size_t n = parse_count(v, at);
  if (n == 0) at.fail("dimension must be positive or auto");
  return n;
}

std::vector<std::size_t> parse_list(std::string_view v, const LineError& at) {
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') at.fail("expected a list like [1, 2, 3]");
  std::vector<std::size_t> out;
  std::string_view body = trim(v.substr(1, v.size() - 2));
  if (body.empty()) return out;
  while (true) {
    const auto comma = body.find(',');
    out.push_back(parse_count(trim(body.substr(0, comma)), at));
    if (comma == std::string_view::npos) break;
    body = body.substr(comma + 1);
  }
  return out;
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

std::size_t scaled_width(std::size_t base, double multiplier) {
  const long w = std::lround(static_cast<double>(base) * multiplier);
  return w < 1 ? 1 : static_cast<std::size_t>(w);
}

std::string_view to_string(MiddleFlowKind kind) {
  return kind == MiddleFlowKind::fused ? "fused" : "original_xception";
}

void ModelConfig::validate() const {
  if (input_height == 0 || input_width == 0) throw ConfigError("input_size must be positive");
  if (!(width_multiplier > 0.0 && width_multiplier <= 1.0))
    throw ConfigError("width_multiplier must lie in (0, 1], got " + format_real(width_multiplier));
  if (middle_flow_kind == MiddleFlowKind::fused) {
    if (middle_branches.empty()) throw ConfigError("middle_branches must not be empty for a fused middle flow");
    for (std::size_t n : middle_branches)
      if (n == 0) throw ConfigError("every middle branch needs at least one block");
  }
  if (num_classes == 0) throw ConfigError("num_classes must be positive");
  if (attention_out_dim == 0) throw ConfigError("attention_out_dim must be positive");
  if (cbam_reduction == 0) throw ConfigError("cbam_reduction must be positive");
  if (cbam_kernel == 0 || cbam_kernel % 2 == 0) throw ConfigError("cbam_kernel must be odd");
}

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  out << "input_size = " << input_height << 'x' << input_width << '\n';
  out << "width_multiplier = " << format_real(width_multiplier) << '\n';
  out << "middle_branches = [";
  for (std::size_t i = 0; i < middle_branches.size(); ++i) out << (i ? ", " : "") << middle_branches[i];
  out << "]\n";
  out << "cbam_enabled = " << (cbam_enabled ? "true" : "false") << '\n';
  out << "self_attention_enabled = " << (self_attention_enabled ? "true" : "false") << '\n';
  out << "middle_flow_kind = " << to_string(middle_flow_kind) << '\n';
  out << "num_classes = " << num_classes << '\n';
  auto dim = [](std::size_t d) { return d == 0 ? std::string("auto") : std::to_string(d); };
  out << "attention_key_dim = " << dim(attention_key_dim) << '\n';
  out << "attention_value_dim = " << dim(attention_value_dim) << '\n';
  out << "attention_out_dim = " << attention_out_dim << '\n';
  out << "cbam_reduction = " << cbam_reduction << '\n';
  out << "cbam_kernel = " << cbam_kernel << '\n';
  return out.str();
}

std::uint64_t ModelConfig::fingerprint() const { return fnv1a64(to_text()); }

ModelConfig parse_config(std::string_view text) {
  ModelConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const LineError at(line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) at.fail("expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (!seen.insert(std::string(key)).second) at.fail("repeated key '" + std::string(key) + "'");

    if (key == "preset") {
      if (seen.size() != 1) at.fail("preset must be the first setting");
      cfg = preset_config(value);
    } else if (key == "input_size") {
      const auto x = value.find('x');
      if (x == std::string_view::npos) {
        cfg.input_height = cfg.input_width = parse_count(value, at);
      } else {
        cfg.input_height = parse_count(trim(value.substr(0, x)), at);
        cfg.input_width = parse_count(trim(value.substr(x + 1)), at);
      }
    } else if (key == "width_multiplier") {
      cfg.width_multiplier = parse_real(value, at);
    } else if (key == "middle_branches") {
      cfg.middle_branches = parse_list(value, at);
    } else if (key == "cbam_enabled") {
      cfg.cbam_enabled = parse_bool(value, at);
    } else if (key == "self_attention_enabled") {
      cfg.self_attention_enabled = parse_bool(value, at);
    } else if (key == "middle_flow_kind") {
      if (value == "fused") cfg.middle_flow_kind = MiddleFlowKind::fused;
      else if (value == "original_xception") cfg.middle_flow_kind = MiddleFlowKind::original_xception;
      else at.fail("middle_flow_kind must be fused or original_xception");
    } else if (key == "num_classes") {
      cfg.num_classes = parse_count(value, at);
    } else if (key == "attention_key_dim") {
      cfg.attention_key_dim = parse_auto_dim(value, at);
    } else if (key == "attention_value_dim") {
      cfg.attention_value_dim = parse_auto_dim(value, at);
    } else if (key == "attention_out_dim") {
      cfg.attention_out_dim = parse_count(value, at);
    } else if (key == "cbam_reduction") {
      cfg.cbam_reduction = parse_count(value, at);
    } else if (key == "cbam_kernel") {
      cfg.cbam_kernel = parse_count(value, at);
    } else {
      at.fail("unknown key '" + std::string(key) + "'");
    }
  }
  cfg.validate();
  return cfg;
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

ModelConfig preset_config(std::string_view name) {
  ModelConfig cfg;
  if (name == "default") return cfg;
  if (name == "desk") {
    cfg.input_height = cfg.input_width = 64;
    cfg.width_multiplier = 0.125;
    return cfg;
  }
  if (name == "tiny") {
    cfg.input_height = cfg.input_width = 32;
    cfg.width_multiplier = 0.125;
    return cfg;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected default, desk or tiny)");
}

ModelConfig resolve_config(const std::string& preset_or_path) {
  if (preset_or_path == "default" || preset_or_path == "desk" || preset_or_path == "tiny")
    return preset_config(preset_or_path);
  return load_config(preset_or_path);
}

}  // namespace xfnet
