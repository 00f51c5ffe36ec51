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

#include "xfnet/tensor.hpp"

namespace xfnet {

/// Labelled images, each [3, H, W] with values in [0, 1].
struct Dataset {
  std::vector<Tensor<float>> images;
  std::vector<int> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return images.size(); }
  std::size_t height() const { return images.at(0).dim(1); }
  std::size_t width() const { return images.at(0).dim(2); }

  /// Non-empty, equal image shapes, labels within the class range.
  void validate() const;
};

/// Stacks the selected samples into [n, 3, H, W].
Tensor<float> gather_batch(const Dataset& data, const std::vector<std::size_t>& indices);
std::vector<int> gather_labels(const Dataset& data, const std::vector<std::size_t>& indices);

/// 8-bit raster as stored on disk, interleaved channels (1 or 3).
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;
};

/// Binary netpbm: P6 (RGB) or P5 (grey), maxval up to 65535, '#' comments in
/// the header. 16-bit samples are reduced to 8 bits with rounding.
Image read_pnm(const std::string& path);
/// P6 for 3 channels, P5 for 1.
void write_pnm(const std::string& path, const Image& image);

/// Corner-aligned bilinear resize of x[C, H, W]: output pixel (i, j) samples
/// the source at (i * (H-1)/(H'-1), j * (W-1)/(W'-1)), or 0 along an axis of
/// output extent 1. Coordinates are computed in double; interpolation runs in
/// float as top = a + (b - a) * tx, bottom likewise, out = top + (bottom -
/// top) * ty, so constant inputs stay exactly constant.
Tensor<float> resize_bilinear(const Tensor<float>& x, std::size_t height, std::size_t width);

/// [3, H, W] in [0, 1]; grey images are replicated to three channels.
Tensor<float> image_to_tensor(const Image& image);
/// Rounds to the nearest 8-bit level.
Image tensor_to_image(const Tensor<float>& x);

/// One subdirectory per class, named in label order by lexicographic sort.
/// Files ending in .ppm, .pgm or .pnm are loaded in lexicographic order and
/// resized to height x width; other files are ignored. A class directory
/// without images or an unreadable image is an error naming the path.
Dataset load_dataset(const std::string& root, std::size_t height, std::size_t width);

/// Writes `data` in the layout load_dataset reads, one PPM per sample.
void write_dataset(const Dataset& data, const std::string& root);

enum class SynthKind { frequency_texture, blob_vs_stripe };

struct SynthSpec {
  std::size_t per_class = 64;
  std::size_t height = 64;
  std::size_t width = 64;
  SynthKind kind = SynthKind::frequency_texture;
  std::uint64_t seed = 0;
};

/// Two classes, samples interleaved 0, 1, 0, 1, ... Frequency textures: class
/// 0 ("0_real") is a sum of low-frequency sinusoids, class 1 ("1_fake") adds
/// fine periodic detail; both carry seeded noise. Blob-vs-stripe: Gaussian
/// blobs against oriented stripes.
Dataset synth_dataset(const SynthSpec& spec);

SynthKind parse_synth_kind(const std::string& name);

/// Mean squared first difference, horizontal and vertical pairs pooled over
/// all channels. Fine periodic detail raises it; the separability witness
/// for frequency textures.
double high_pass_energy(const Tensor<float>& image);

}  // namespace xfnet
