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

#include "xfnet/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>

#include "xfnet/rng.hpp"

namespace fs = std::filesystem;

namespace xfnet {

void Dataset::validate() const {
  if (images.empty()) throw Error("dataset is empty");
  if (images.size() != labels.size()) throw Error("dataset has different numbers of images and labels");
  const Shape first = images[0].shape();
  if (first.rank() != 3 || first[0] != 3) throw ShapeError("dataset images must be [3, H, W], got " + first.str());
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!(images[i].shape() == first))
      throw ShapeError("dataset image " + std::to_string(i) + " is " + images[i].shape().str() + ", expected " +
                       first.str());
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_names.size())
      throw Error("dataset label " + std::to_string(labels[i]) + " outside " + std::to_string(class_names.size()) +
                  " classes");
  }
}

Tensor<float> gather_batch(const Dataset& data, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw Error("empty batch");
  const Shape s = data.images.at(indices[0]).shape();
  Tensor<float> out(Shape{indices.size(), s[0], s[1], s[2]});
  const std::size_t per = s.numel();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& img = data.images.at(indices[i]);
    std::copy(img.data().begin(), img.data().end(), out.data().begin() + i * per);
  }
  return out;
}

std::vector<int> gather_labels(const Dataset& data, const std::vector<std::size_t>& indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(data.labels.at(i));
  return out;
}

namespace {

class HeaderReader {
 public:
  HeaderReader(std::istream& in, const std::string& path) : in_(in), path_(path) {}

  std::string token() {
    std::string tok;
    int c;
    while ((c = in_.get()) != EOF) {
      if (c == '#') {
        while ((c = in_.get()) != EOF && c != '\n') {
        }
        if (!tok.empty()) break;
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) fail("truncated header");
    return tok;
  }

  std::size_t number() {
    const std::string tok = token();
    if (tok.find_first_not_of("0123456789") != std::string::npos || tok.size() > 9) fail("bad header field '" + tok + "'");
    return std::stoul(tok);
  }

  [[noreturn]] void fail(const std::string& msg) const { throw FormatError(path_ + ": " + msg); }

 private:
  std::istream& in_;
  const std::string& path_;
};

}  // namespace

Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open");
  HeaderReader header(in, path);
  const std::string magic = header.token();
  Image img;
  if (magic == "P6") img.channels = 3;
  else if (magic == "P5") img.channels = 1;
  else header.fail("not a binary PPM/PGM (magic '" + magic + "')");
  img.width = header.number();
  img.height = header.number();
  const std::size_t maxval = header.number();
  if (img.width == 0 || img.height == 0) header.fail("zero image extent");
  if (maxval == 0 || maxval > 65535) header.fail("maxval must be in 1..65535");
  // the token reader consumed exactly one whitespace byte after maxval

  const std::size_t samples = img.width * img.height * img.channels;
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(samples * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) header.fail("truncated pixel data");
  img.pixels.resize(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t v = bytes_per == 2 ? (std::size_t{raw[2 * i]} << 8) | raw[2 * i + 1] : raw[i];
    if (v > maxval) header.fail("sample exceeds maxval");
    img.pixels[i] = static_cast<std::uint8_t>((v * 255 + maxval / 2) / maxval);
  }
  return img;
}

void write_pnm(const std::string& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw FormatError(path + ": only 1 or 3 channels can be written");
  if (image.pixels.size() != image.width * image.height * image.channels)
    throw FormatError(path + ": pixel buffer does not match the image extent");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out << (image.channels == 3 ? "P6" : "P5") << '\n' << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw FormatError(path + ": write failed");
}

Tensor<float> resize_bilinear(const Tensor<float>& x, std::size_t height, std::size_t width) {
  require_rank(x.shape(), 3, "resize_bilinear");
  if (height == 0 || width == 0) throw ShapeError("resize_bilinear: zero target extent");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor<float> out(Shape{C, height, width});
  auto src = [](std::size_t i, std::size_t in, std::size_t outn) {
    return outn == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(outn - 1);
  };
  for (std::size_t i = 0; i < height; ++i) {
    const double sy = src(i, H, height);
    const std::size_t y0 = std::min(static_cast<std::size_t>(sy), H - 1);
    const std::size_t y1 = std::min(y0 + 1, H - 1);
    const float ty = static_cast<float>(sy - static_cast<double>(y0));
    for (std::size_t j = 0; j < width; ++j) {
      const double sx = src(j, W, width);
      const std::size_t x0 = std::min(static_cast<std::size_t>(sx), W - 1);
      const std::size_t x1 = std::min(x0 + 1, W - 1);
      const float tx = static_cast<float>(sx - static_cast<double>(x0));
      for (std::size_t c = 0; c < C; ++c) {
        const float* p = x.data().data() + c * H * W;
        const float a = p[y0 * W + x0], b = p[y0 * W + x1];
        const float d = p[y1 * W + x0], e = p[y1 * W + x1];
        const float top = a + (b - a) * tx;
        const float bottom = d + (e - d) * tx;
        out[(c * height + i) * width + j] = top + (bottom - top) * ty;
      }
    }
  }
  return out;
}

Tensor<float> image_to_tensor(const Image& image) {
  const std::size_t H = image.height, W = image.width;
  Tensor<float> out(Shape{3, H, W});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < H * W; ++p) {
      const std::size_t src_c = image.channels == 3 ? c : 0;
      out[c * H * W + p] = static_cast<float>(image.pixels[p * image.channels + src_c]) / 255.0f;
    }
  return out;
}

Image tensor_to_image(const Tensor<float>& x) {
  require_rank(x.shape(), 3, "tensor_to_image");
  if (x.dim(0) != 3) throw ShapeError("tensor_to_image: expected 3 channels, got " + x.shape().str());
  Image img{x.dim(2), x.dim(1), 3, {}};
  const std::size_t HW = img.width * img.height;
  img.pixels.resize(HW * 3);
  for (std::size_t p = 0; p < HW; ++p)
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(x[c * HW + p], 0.0f, 1.0f);
      img.pixels[p * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  return img;
}

namespace {

bool is_image_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

std::vector<fs::path> sorted_entries(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });
  return out;
}

}  // namespace

Dataset load_dataset(const std::string& root, std::size_t height, std::size_t width) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error("dataset root " + root + " is not a directory");
  Dataset data;
  for (const auto& dir : sorted_entries(root)) {
    if (!fs::is_directory(dir)) continue;
    const int label = static_cast<int>(data.class_names.size());
    data.class_names.push_back(dir.filename().string());
    std::size_t found = 0;
    for (const auto& file : sorted_entries(dir)) {
      if (!fs::is_regular_file(file) || !is_image_file(file)) continue;
      const Image img = read_pnm(file.string());
      Tensor<float> t = image_to_tensor(img);
      if (img.height != height || img.width != width) t = resize_bilinear(t, height, width);
      data.images.push_back(std::move(t));
      data.labels.push_back(label);
      ++found;
    }
    if (found == 0) throw Error("class directory " + dir.string() + " contains no .ppm/.pgm/.pnm images");
  }
  if (data.class_names.empty()) throw Error("dataset root " + root + " has no class subdirectories");
  return data;
}

void write_dataset(const Dataset& data, const std::string& root) {
  data.validate();
  std::vector<std::size_t> counters(data.class_names.size(), 0);
  for (const auto& name : data.class_names) fs::create_directories(fs::path(root) / name);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto label = static_cast<std::size_t>(data.labels[i]);
    char file[32];
    std::snprintf(file, sizeof file, "%06zu.ppm", counters[label]++);
    write_pnm((fs::path(root) / data.class_names[label] / file).string(), tensor_to_image(data.images[i]));
  }
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Wave {
  double kx, ky, phase, amplitude;
};

Wave random_wave(Rng& rng, double min_cycles, double max_cycles, double amplitude, std::size_t extent) {
  const double cycles = rng.uniform(min_cycles, max_cycles);
  const double angle = rng.uniform(0.0, std::numbers::pi);
  const double k = kTwoPi * cycles / static_cast<double>(extent);
  return {k * std::cos(angle), k * std::sin(angle), rng.uniform(0.0, kTwoPi), amplitude};
}

Tensor<float> render(std::size_t H, std::size_t W, Rng& rng,
                     const std::function<double(double y, double x)>& pattern) {
  double gain[3];
  for (double& g : gain) g = rng.uniform(0.7, 1.3);
  Tensor<float> img(Shape{3, H, W});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const double v = pattern(static_cast<double>(y), static_cast<double>(x));
      for (std::size_t c = 0; c < 3; ++c) {
        const double pixel = 0.5 + gain[c] * v + 0.02 * rng.normal();
        img[(c * H + y) * W + x] = static_cast<float>(std::clamp(pixel, 0.0, 1.0));
      }
    }
  return img;
}

Tensor<float> frequency_texture(std::size_t H, std::size_t W, int label, Rng& rng) {
  const std::size_t extent = std::max(H, W);
  std::vector<Wave> waves{random_wave(rng, 0.5, 2.0, 0.15, extent), random_wave(rng, 0.5, 2.0, 0.15, extent)};
  if (label == 1) waves.push_back(random_wave(rng, extent / 8.0, extent / 4.0, 0.12, extent));
  return render(H, W, rng, [&](double y, double x) {
    double v = 0.0;
    for (const auto& w : waves) v += w.amplitude * std::sin(w.kx * x + w.ky * y + w.phase);
    return v;
  });
}

Tensor<float> blob_or_stripe(std::size_t H, std::size_t W, int label, Rng& rng) {
  const double extent = static_cast<double>(std::max(H, W));
  if (label == 1) {
    const Wave w = random_wave(rng, 3.0, 6.0, 0.3, std::max(H, W));
    return render(H, W, rng, [&](double y, double x) { return w.amplitude * std::sin(w.kx * x + w.ky * y + w.phase); });
  }
  struct Blob {
    double cy, cx, inv_two_sigma2, amplitude;
  };
  std::vector<Blob> blobs;
  for (int i = 0; i < 3; ++i) {
    const double sigma = rng.uniform(extent / 10.0, extent / 5.0);
    blobs.push_back({rng.uniform(0.0, double(H)), rng.uniform(0.0, double(W)), 1.0 / (2.0 * sigma * sigma),
                     rng.uniform() < 0.5 ? -0.3 : 0.3});
  }
  return render(H, W, rng, [&](double y, double x) {
    double v = 0.0;
    for (const auto& b : blobs) v += b.amplitude * std::exp(-((y - b.cy) * (y - b.cy) + (x - b.cx) * (x - b.cx)) * b.inv_two_sigma2);
    return v;
  });
}

}  // namespace

Dataset synth_dataset(const SynthSpec& spec) {
  if (spec.per_class == 0 || spec.height == 0 || spec.width == 0) throw ConfigError("synthetic spec needs positive sizes");
  Dataset data;
  data.class_names = spec.kind == SynthKind::frequency_texture ? std::vector<std::string>{"0_real", "1_fake"}
                                                               : std::vector<std::string>{"0_blob", "1_stripe"};
  const Rng root(spec.seed);
  for (std::size_t i = 0; i < 2 * spec.per_class; ++i) {
    const int label = static_cast<int>(i % 2);
    Rng rng = root.split(i);
    data.images.push_back(spec.kind == SynthKind::frequency_texture ? frequency_texture(spec.height, spec.width, label, rng)
                                                                    : blob_or_stripe(spec.height, spec.width, label, rng));
    data.labels.push_back(label);
  }
  return data;
}

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "frequency" || name == "frequency-texture") return SynthKind::frequency_texture;
  if (name == "blob" || name == "blob-vs-stripe") return SynthKind::blob_vs_stripe;
  throw ConfigError("unknown synthetic kind '" + name + "' (expected frequency-texture or blob-vs-stripe)");
}

double high_pass_energy(const Tensor<float>& image) {
  require_rank(image.shape(), 3, "high_pass_energy");
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const float v = image[(c * H + y) * W + x];
        if (x + 1 < W) {
          const double d = image[(c * H + y) * W + x + 1] - v;
          sum += d * d;
          ++n;
        }
        if (y + 1 < H) {
          const double d = image[(c * H + y + 1) * W + x] - v;
          sum += d * d;
          ++n;
        }
      }
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace xfnet
