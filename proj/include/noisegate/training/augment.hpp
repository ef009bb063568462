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

#include <torch/torch.h>

#include <cstdint>

#include "json.hpp"

namespace noisegate::training {

/// Discriminator augmentation inventory. Only the blit, geometric and color
/// categories exist; each transform fires independently per image with
/// probability p. Ranges follow the usual ADA choices and are overridable.
struct AugmentConfig {
  bool blit = true;
  bool geometric = true;
  bool color = true;

  // blit: exact pixel moves
  bool xflip = true;
  bool rotate90 = true;
  bool int_translate = true;
  double int_translate_max = 0.125;  // fraction of image size

  // geometric: bilinear resampling with reflection padding
  bool iso_scale = true;
  double iso_scale_std = 0.2;  // log2 units
  bool rotate = true;
  double rotate_max = 1.0;  // fraction of pi
  bool aniso_scale = true;
  double aniso_scale_std = 0.2;  // log2 units
  bool frac_translate = true;
  double frac_translate_std = 0.125;  // fraction of image size

  // color: affine map in RGB, result clamped to [-1, 1]
  bool brightness = true;
  double brightness_mean = 0.0;
  double brightness_std = 0.2;
  bool contrast = true;
  double contrast_std = 0.5;  // log2 units
  bool luma_flip = true;
  bool hue_rotate = true;
  double hue_max = 1.0;  // fraction of pi
  bool saturation = true;
  double saturation_std = 1.0;  // log2 units

  /// Every transform off; callers switch single transforms back on.
  static AugmentConfig none();

  nlohmann::json to_json() const;
  static AugmentConfig from_json(const nlohmann::json& j);
};

/// Augments a [B, 3, H, W] batch. p == 0 returns the input tensor itself.
/// Differentiable w.r.t. `batch`. Random draws come from Rng(seed).
torch::Tensor apply_augmentations(const torch::Tensor& batch, double p, const AugmentConfig& cfg, std::uint64_t seed);

}  // namespace noisegate::training
