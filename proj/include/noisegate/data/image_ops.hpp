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

#include <functional>
#include <string>
#include <vector>

#include "noisegate/data/manifest.hpp"
#include "noisegate/image.hpp"

namespace noisegate::data {

/// Catmull-Rom cubic (a = -0.5).
double cubic_kernel(double x);

/// Separable bicubic resize. When shrinking, the kernel is stretched by the
/// scale factor (antialiasing). Weights are normalized per output sample
/// and accumulated in double; the result is clamped to [-1, 1]. Same-size
/// requests return a copy.
ImageTensor resample(const ImageTensor& img, int out_height, int out_width);

ImageTensor crop(const ImageTensor& img, const CropBox& box);

/// crop, then resample to target_res x target_res. target_res must be a
/// power of two; the crop must lie inside the image.
ImageTensor crop_and_resample(const ImageTensor& img, const CropBox& box, int target_res);

using SrBackend = std::function<ImageTensor(const ImageTensor&)>;

/// "bicubic" is always registered: resample to twice the size.
void register_sr_backend(const std::string& name, SrBackend backend);
std::vector<std::string> sr_backends();

/// Doubles both dimensions with the named backend. An unknown backend throws
/// ConfigError.
ImageTensor super_resolve_2x(const ImageTensor& img, const std::string& backend = "bicubic");

}  // namespace noisegate::data
