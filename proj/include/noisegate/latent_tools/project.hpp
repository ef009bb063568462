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
#include <functional>
#include <utility>
#include <vector>

#include "json.hpp"
#include "noisegate/image.hpp"
#include "noisegate/latent.hpp"

namespace noisegate {
class Generator;
}

namespace noisegate::latent_tools {

struct ProjectOptions {
  int steps = 1000;
  double lr = 0.02;
  double lr_rampup = 0.05;    // fraction of steps with linear warmup
  double lr_rampdown = 0.75;  // fraction of steps with cosine cooldown
  double perceptual_weight = 1.0;
  double pixel_weight = 0.1;
  bool optimize_noise = true;  // gated-on buffers only
  double noise_lr_mul = 1.0;   // noise buffers step at lr * noise_lr_mul
  bool normalize_noise = true;  // rescale noise buffers to zero mean, unit variance after each step
  std::uint64_t noise_seed = 0;  // initial noise
  int divergence_patience = 100;
  double divergence_factor = 10.0;

  void validate() const;
  nlohmann::json to_json() const;
  static ProjectOptions from_json(const nlohmann::json& j);
};

struct ProjectionResult {
  LatentWPlus w_plus;
  NoiseBuffers noise;
  std::vector<std::pair<int, double>> loss_trace;  // loss before the update at each step
  ImageTensor final_image;                          // synthesize(w_plus, noise)
  int best_step = 0;
  double best_loss = 0.0;
};

/// Called after every step with (step, loss); returning false stops early.
using ProjectProgress = std::function<bool(int, double)>;

/// Adam over W+ (initialized at the broadcast latent mean) and, optionally,
/// the noise buffers of gated-on sites. Returns the best iterate. Gated-off
/// buffers keep their initial values. Throws InvalidArgument on a target
/// of the wrong size and NumericFailure on a non-finite loss or when the
/// loss stays above divergence_factor x the initial loss for
/// divergence_patience consecutive steps.
ProjectionResult project(const ImageTensor& target, const Generator& g, const ProjectOptions& opts,
                         const ProjectProgress& progress = {});

/// Trailing moving average over full windows: entry i is the mean of
/// trace[i, i + window). Empty when the trace is shorter than the window.
std::vector<double> smooth_trace(const std::vector<std::pair<int, double>>& trace, int window = 50);

/// |coarse| x |fine| grid; cell (i, j) synthesizes
/// style_mix(coarse[i], fine[j], {cutoff, 1}) with `noise`.
std::vector<std::vector<ImageTensor>> mix_grid(const Generator& g, const std::vector<LatentWPlus>& coarse,
                                               const std::vector<LatentWPlus>& fine, int cutoff,
                                               const NoiseBuffers& noise);

}  // namespace noisegate::latent_tools
