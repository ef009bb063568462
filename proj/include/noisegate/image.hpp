// Copyright 2026 The noisegate Authors. All rights reserved.
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
#include <filesystem>
#include <span>
#include <vector>

namespace noisegate {

/// H x W x 3 sRGB image, row-major with interleaved channels, values in [-1, 1].
struct ImageTensor {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  ImageTensor() = default;
  ImageTensor(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  bool operator==(const ImageTensor&) const = default;
};

/// [-1,1] -> 0..255 with round-half-up after clamping.
std::uint8_t to_u8(float v);
float from_u8(std::uint8_t v);
std::vector<std::uint8_t> quantize(const ImageTensor& img);
ImageTensor dequantize(int height, int width, std::span<const std::uint8_t> rgb);

/// Mean of squared differences over all pixels and channels.
double pixel_mse(const ImageTensor& a, const ImageTensor& b);

/// Lossless 8-bit RGB PNG. Output bytes are a pure function of the quantized
/// pixels (fixed compression level, no timestamps or text chunks).
std::vector<std::uint8_t> encode_png(const ImageTensor& img);

/// PNG or baseline JPEG, detected from the leading bytes. Grayscale and
/// alpha inputs are converted to RGB. Throws FormatError when undecodable.
ImageTensor decode_image(std::span<const std::uint8_t> bytes);

ImageTensor load_image(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const ImageTensor& img);

}  // namespace noisegate
