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

#include "noisegate/data/image_ops.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "noisegate/error.hpp"

namespace noisegate::data {

namespace {

struct Taps {
  int first = 0;
  std::vector<double> weights;
};

// Output sample i covers input position (i + 0.5) * in / out - 0.5.
std::vector<Taps> compute_taps(int in, int out) {
  const double scale = static_cast<double>(in) / out;
  const double stretch = std::max(1.0, scale);
  const double support = 2.0 * stretch;
  std::vector<Taps> taps(static_cast<std::size_t>(out));
  for (int i = 0; i < out; ++i) {
    const double center = (i + 0.5) * scale - 0.5;
    const int lo = static_cast<int>(std::floor(center - support)) + 1;
    const int hi = static_cast<int>(std::ceil(center + support)) - 1;
    std::vector<double> raw;
    std::vector<int> index;
    for (int k = lo; k <= hi; ++k) {
      const double w = cubic_kernel((k - center) / stretch);
      if (w == 0.0) continue;
      raw.push_back(w);
      index.push_back(std::clamp(k, 0, in - 1));
    }
    // Fold clamped edge taps into dense weights over [first, last].
    const int first = *std::min_element(index.begin(), index.end());
    const int last = *std::max_element(index.begin(), index.end());
    Taps t;
    t.first = first;
    t.weights.assign(static_cast<std::size_t>(last - first + 1), 0.0);
    double sum = 0.0;
    for (std::size_t k = 0; k < raw.size(); ++k) {
      t.weights[index[k] - first] += raw[k];
      sum += raw[k];
    }
    for (auto& w : t.weights) w /= sum;
    taps[i] = std::move(t);
  }
  return taps;
}

std::map<std::string, SrBackend>& registry() {
  static std::map<std::string, SrBackend> r = {
      {"bicubic", [](const ImageTensor& img) { return resample(img, img.height * 2, img.width * 2); }}};
  return r;
}

std::mutex& registry_mutex() {
  static std::mutex mu;
  return mu;
}

}  // namespace

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

ImageTensor resample(const ImageTensor& img, int out_height, int out_width) {
  if (out_height < 1 || out_width < 1) throw InvalidArgument("resample target must be positive");
  if (img.height < 1 || img.width < 1) throw InvalidArgument("resample source is empty");
  if (out_height == img.height && out_width == img.width) return img;

  const auto tx = compute_taps(img.width, out_width);
  const auto ty = compute_taps(img.height, out_height);

  // Horizontal pass into double storage.
  std::vector<double> mid(static_cast<std::size_t>(img.height) * out_width * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      const auto& t = tx[x];
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < t.weights.size(); ++k) acc += t.weights[k] * img.at(y, t.first + static_cast<int>(k), c);
        mid[(static_cast<std::size_t>(y) * out_width + x) * 3 + c] = acc;
      }
    }
  }
  ImageTensor out(out_height, out_width);
  for (int y = 0; y < out_height; ++y) {
    const auto& t = ty[y];
    for (int x = 0; x < out_width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < t.weights.size(); ++k) {
          acc += t.weights[k] * mid[((static_cast<std::size_t>(t.first) + k) * out_width + x) * 3 + c];
        }
        out.at(y, x, c) = static_cast<float>(std::clamp(acc, -1.0, 1.0));
      }
    }
  }
  return out;
}

ImageTensor crop(const ImageTensor& img, const CropBox& box) {
  if (box.width < 1 || box.height < 1 || box.x < 0 || box.y < 0 || box.x + box.width > img.width ||
      box.y + box.height > img.height) {
    throw InvalidArgument("crop box (" + std::to_string(box.x) + ", " + std::to_string(box.y) + ", " +
                          std::to_string(box.width) + "x" + std::to_string(box.height) + ") outside " +
                          std::to_string(img.width) + "x" + std::to_string(img.height) + " image");
  }
  ImageTensor out(box.height, box.width);
  for (int y = 0; y < box.height; ++y) {
    const float* src = &img.pixels[(static_cast<std::size_t>(box.y + y) * img.width + box.x) * 3];
    std::copy(src, src + static_cast<std::size_t>(box.width) * 3, &out.pixels[static_cast<std::size_t>(y) * box.width * 3]);
  }
  return out;
}

ImageTensor crop_and_resample(const ImageTensor& img, const CropBox& box, int target_res) {
  if (!is_power_of_two(target_res)) {
    throw InvalidArgument("target resolution " + std::to_string(target_res) + " is not a power of two");
  }
  return resample(crop(img, box), target_res, target_res);
}

void register_sr_backend(const std::string& name, SrBackend backend) {
  if (name.empty() || !backend) throw InvalidArgument("SR backend needs a name and a callable");
  std::lock_guard lock(registry_mutex());
  registry()[name] = std::move(backend);
}

std::vector<std::string> sr_backends() {
  std::lock_guard lock(registry_mutex());
  std::vector<std::string> out;
  for (const auto& [name, fn] : registry()) out.push_back(name);
  return out;
}

ImageTensor super_resolve_2x(const ImageTensor& img, const std::string& backend) {
  SrBackend fn;
  {
    std::lock_guard lock(registry_mutex());
    auto it = registry().find(backend);
    if (it == registry().end()) throw ConfigError("no super-resolution backend named '" + backend + "'");
    fn = it->second;
  }
  auto out = fn(img);
  if (out.height != img.height * 2 || out.width != img.width * 2) {
    throw NumericFailure("SR backend '" + backend + "' did not double the image size");
  }
  return out;
}

}  // namespace noisegate::data
