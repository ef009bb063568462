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
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "noisegate/eval/features.hpp"
#include "noisegate/eval/fid.hpp"
#include "noisegate/model.hpp"

namespace noisegate::eval {

enum class NoiseMode { kConstant, kRandomPerLatent };

std::string to_string(NoiseMode mode);  // "constant" | "random"
NoiseMode parse_noise_mode(const std::string& s);

/// Latent i is sample_latent(derive_seed(latent_seed, i)). Noise is
/// sample_noise(noise_seed) for every latent in constant mode and
/// sample_noise(derive_seed(noise_seed, i)) in random mode.
struct SampleSpec {
  int n = 2000;
  std::uint64_t latent_seed = 0;
  NoiseMode mode = NoiseMode::kRandomPerLatent;
  std::uint64_t noise_seed = 1;
  float psi = 1.0f;
  int batch = 32;
};

/// Images [count, 3, R, R] for latents [start, start + count) of `spec`.
torch::Tensor generate_images(const Generator& g, const SampleSpec& spec, int start, int count);

FeatureStats generated_stats(const Generator& g, const FeatureExtractor& extractor, const SampleSpec& spec);
FeatureStats image_stats(const torch::Tensor& images, const FeatureExtractor& extractor, int batch = 64);

/// FID between two sets of the same `n` latents: set A with constant noise
/// from seed_a, set B with per-latent noise from seed_b.
double noise_sensitivity(const Generator& g, const FeatureExtractor& extractor, int n, std::uint64_t seed_a,
                         std::uint64_t seed_b, std::uint64_t latent_seed = 0, int batch = 32);

struct AblationRow {
  std::string label;
  std::string checkpoint;
  std::string gates;  // expected gate spec of the checkpoint
  NoiseMode mode = NoiseMode::kRandomPerLatent;
  int n_samples = 2000;
};

struct AblationSpec {
  std::string extractor = "random-conv";
  std::string reference;  // stats file or dataset, resolved by the caller
  std::uint64_t latent_seed = 0;
  std::uint64_t noise_seed = 1;
  int batch = 32;
  std::vector<AblationRow> rows;

  /// Throws ConfigError on duplicate labels, empty rows or n_samples < 2.
  void validate() const;
  nlohmann::json to_json() const;
  static AblationSpec from_json(const nlohmann::json& j);
};

struct AblationResult {
  std::string label;
  std::string gates;
  NoiseMode mode;
  int n_samples;
  double fid;
};

struct AblationTable {
  std::string extractor;
  std::int64_t reference_n = 0;
  std::vector<AblationResult> rows;

  nlohmann::json to_json() const;
  /// Aligned columns: configuration, gates, inference noise, n, FID.
  std::string to_text() const;
};

using ModelResolver = std::function<std::shared_ptr<const Generator>(const std::string& checkpoint)>;

/// Loads each row's checkpoint through `resolve` (default: load_checkpoint
/// from disk, cached per path), verifies its gates, samples under the row's
/// noise mode and reports FID against `reference`. A missing checkpoint or a
/// gate mismatch throws ConfigError.
AblationTable run_ablation(const AblationSpec& spec, const FeatureStats& reference, const ModelResolver& resolve = {});

}  // namespace noisegate::eval
