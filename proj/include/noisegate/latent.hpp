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
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace noisegate {

/// One noise-injection site of the synthesis network: every synthesis
/// convolution owns exactly one.
struct NoiseSite {
  int index = 0;
  int resolution = 0;
};

/// Architecture hyper-parameters stored in every checkpoint.
struct ArchConfig {
  int resolution = 64;
  /// D: dimension of both z and w.
  int latent_dim = 64;
  int mapping_layers = 2;
  /// Channels at resolution r are min(channel_base / r, channel_max).
  int channel_base = 1024;
  int channel_max = 64;
  float mapping_lr_mul = 0.01f;
  /// Std of the random initial per-channel noise weights.
  float noise_strength_init = 0.1f;

  /// L = 2 * (log2(resolution) - 1): one style input per synthesis conv
  /// plus the final toRGB.
  int num_layers() const;
  /// 4, 8, ..., resolution.
  std::vector<int> resolutions() const;
  int channels_at(int res) const;
  std::vector<NoiseSite> noise_sites() const;
  void validate() const;

  nlohmann::json to_json() const;
  static ArchConfig from_json(const nlohmann::json& j);
  bool operator==(const ArchConfig&) const = default;
};

/// Per-resolution on/off switches for noise injection. A disabled
/// resolution contributes exactly nothing to the synthesized image, in
/// training and at inference.
class NoiseGateConfig {
 public:
  NoiseGateConfig() = default;

  static NoiseGateConfig all_on(const ArchConfig& arch);
  static NoiseGateConfig all_off(const ArchConfig& arch);
  /// Off at 4..32, on from 64 up.
  static NoiseGateConfig fine_only(const ArchConfig& arch);

  /// Accepts "fine-only", "all-on", "all-off", or comma-separated clauses
  /// `on|off:<lo>-<hi>`, `on|off:<res>`, `on|off:all`, applied left to right
  /// on top of all-on. Example: "off:4-32".
  static NoiseGateConfig parse(std::string_view spec, const ArchConfig& arch);

  bool enabled(int resolution) const;
  void set(int resolution, bool on);
  const std::map<int, bool>& by_resolution() const { return enabled_; }
  bool covers(const ArchConfig& arch) const;
  /// Canonical clause form, e.g. "off:4-32" or "all-on".
  std::string to_string() const;

  nlohmann::json to_json() const;
  static NoiseGateConfig from_json(const nlohmann::json& j);
  bool operator==(const NoiseGateConfig&) const = default;

 private:
  std::map<int, bool> enabled_;
};

struct LatentZ {
  std::vector<float> values;
};

struct LatentW {
  std::vector<float> values;
  bool operator==(const LatentW&) const = default;
};

/// Per-layer stack of w vectors; index 0 drives the 4x4 layer.
struct LatentWPlus {
  std::vector<LatentW> layers;

  std::size_t size() const { return layers.size(); }
  int dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().values.size()); }
  std::vector<float> flatten() const;
  static LatentWPlus unflatten(const std::vector<float>& flat, int num_layers, int dim);
  bool operator==(const LatentWPlus&) const = default;
};

struct NoiseBuffer {
  int resolution = 0;
  std::vector<float> values;  // resolution x resolution, row-major
  bool operator==(const NoiseBuffer&) const = default;
};

/// One buffer per noise site, in site order. Buffers at gated-off sites
/// still exist so that layouts agree across gate configurations.
struct NoiseBuffers {
  std::uint64_t seed = 0;
  std::vector<NoiseBuffer> buffers;
  bool operator==(const NoiseBuffers&) const = default;
};

struct StyleMixSpec {
  int cutoff = 0;
  float strength = 0.0f;
  std::uint64_t mix_seed = 0;
};

/// Standard-normal z drawn from `seed` (see Rng for the exact algorithm).
LatentZ sample_latent(std::uint64_t seed, int dim);

LatentWPlus broadcast(const LatentW& w, int num_layers);

/// Layers below `cutoff_layers` move to mean + psi * (w - mean); the rest are
/// copied. Evaluated with std::lerp so psi = 0 and psi = 1 are exact.
LatentWPlus truncate(const LatentWPlus& w, float psi, const LatentW& mean, int cutoff_layers);

/// Layers below spec.cutoff come from `identity`; the rest blend
/// (1 - strength) * identity + strength * style.
LatentWPlus style_mix(const LatentWPlus& identity, const LatentWPlus& style, const StyleMixSpec& spec);

/// Site k holds normal_vector(derive_seed(seed, k), r * r).
NoiseBuffers sample_noise(std::uint64_t seed, const ArchConfig& arch);

/// All-zero buffers with the layout of `arch`.
NoiseBuffers zero_noise(const ArchConfig& arch);

}  // namespace noisegate
