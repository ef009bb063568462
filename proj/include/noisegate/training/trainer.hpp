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
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "json.hpp"
#include "noisegate/model.hpp"
#include "noisegate/training/augment.hpp"

namespace noisegate::training {

struct LrDecay {
  enum class Kind { kConstant, kCosine };
  Kind kind = Kind::kCosine;
  double start_fraction = 0.5;  // decay begins at this fraction of total steps
  double lr_final = 0.0005;
};

struct TrainConfig {
  int batch_size = 8;
  double lr_initial = 0.0025;
  LrDecay lr_decay;
  double adam_beta1 = 0.0;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-8;
  double r1_gamma = 10.0;
  int r1_interval = 16;
  bool ada_enabled = true;
  double ada_target = 0.6;
  int ada_adjust_interval = 4;
  double ada_speed = 20000.0;  // images for a full 0 -> 1 sweep of p
  double ada_p_init = 0.0;
  AugmentConfig augment;
  bool ema_enabled = true;
  double ema_halflife_kimg = 1.0;
  double ema_rampup = 0.05;  // <= 0 disables the rampup
  double style_mixing_prob = 0.0;
  double pl_weight = 0.0;  // path-length regularization, off unless > 0
  int pl_interval = 4;
  double pl_decay = 0.01;
  std::int64_t total_images = 16000;
  int snapshot_interval = 500;  // steps; <= 0 keeps only the final snapshot
  std::uint64_t seed = 0;

  int total_steps() const;
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Constant lr until the decay window, then cosine down to lr_final at
/// total_steps.
double lr_schedule(int step, const TrainConfig& cfg);

struct AdaState {
  double p = 0.0;
  double rt_estimate = 0.0;
};

/// rt_estimate = mean sign(real_scores); p moves by
/// interval * batch / ada_speed in the direction of sign(rt - target).
AdaState ada_update(const AdaState& state, const torch::Tensor& real_scores, const TrainConfig& cfg);

struct StepMetrics {
  int step = 0;
  std::int64_t images = 0;
  double g_loss = 0.0;
  double d_loss = 0.0;
  std::optional<double> r1;
  std::optional<double> pl;
  double rt = 0.0;
  double ada_p = 0.0;
  double lr = 0.0;

  nlohmann::json to_json() const;
};

/// G, D and the EMA copy of G with their optimizers. One instance is one
/// training run; the gate configuration is fixed at construction.
class Trainer {
 public:
  Trainer(const ArchConfig& arch, const NoiseGateConfig& gates, const TrainConfig& cfg);

  /// One G update followed by one D update (with lazy R1) on `real_batch`
  /// [B, 3, R, R] in [-1, 1]. On a non-finite loss a diagnostic snapshot is
  /// written to the diagnostics directory (if set) and NumericFailure is
  /// rethrown.
  StepMetrics step(const torch::Tensor& real_batch);

  const Generator& generator() const { return *g_; }
  Generator& generator() { return *g_; }
  const Generator& ema() const { return *g_ema_; }
  Discriminator& discriminator() { return d_; }
  const AdaState& ada() const { return ada_; }
  const TrainConfig& config() const { return cfg_; }
  int steps_done() const { return step_; }
  std::int64_t images_seen() const { return images_; }

  void set_diagnostics_dir(std::filesystem::path dir) { diagnostics_dir_ = std::move(dir); }

  /// Writes the EMA generator (or the raw one with EMA disabled) together
  /// with the discriminator. w_mean is re-estimated first.
  void save_snapshot(const std::filesystem::path& path, int w_mean_samples = 10000);

 private:
  torch::Tensor make_ws(int batch);
  std::vector<torch::Tensor> make_noise(int batch);
  torch::Tensor run_generator(int batch, torch::Tensor* ws_out = nullptr);
  torch::Tensor augment(const torch::Tensor& x, std::uint64_t stream) const;
  void update_ema();
  void write_diagnostics(const std::string& what);

  ArchConfig arch_;
  NoiseGateConfig gates_;
  TrainConfig cfg_;
  std::shared_ptr<Generator> g_;
  std::shared_ptr<Generator> g_ema_;
  Discriminator d_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g_;
  std::unique_ptr<torch::optim::Adam> opt_d_;
  at::Generator torch_rng_;
  AdaState ada_;
  std::vector<torch::Tensor> rt_window_;
  double pl_mean_ = 0.0;
  int step_ = 0;
  std::int64_t images_ = 0;
  std::optional<std::filesystem::path> diagnostics_dir_;
};

/// Draws batches from an in-memory dataset [N, 3, R, R] in seeded shuffled
/// epochs.
class BatchSampler {
 public:
  BatchSampler(torch::Tensor images, int batch_size, std::uint64_t seed);
  torch::Tensor next();

 private:
  torch::Tensor images_;
  int batch_size_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

struct TrainResult {
  std::vector<StepMetrics> metrics;
  std::filesystem::path final_checkpoint;
};

using SnapshotHook = std::function<void(const Trainer&, int step)>;

/// Full loop: writes `metrics.jsonl`, `snapshot-<step>.ngar` every
/// snapshot_interval steps and `final.ngar` into `out_dir`.
TrainResult train_loop(const ArchConfig& arch, const NoiseGateConfig& gates, const TrainConfig& cfg,
                       const torch::Tensor& dataset, const std::filesystem::path& out_dir,
                       const SnapshotHook& on_snapshot = {});

}  // namespace noisegate::training
