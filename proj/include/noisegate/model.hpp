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
#include <optional>
#include <vector>

#include "noisegate/image.hpp"
#include "noisegate/latent.hpp"
#include "noisegate/rng.hpp"

namespace noisegate {

/// Fully connected layer with runtime weight scaling (equalized learning
/// rate): the stored weight is N(0, 1/lr_mul^2) and is multiplied by
/// lr_mul / sqrt(fan_in) on every forward pass.
class EqualLinearImpl : public torch::nn::Module {
 public:
  EqualLinearImpl(int in_features, int out_features, Rng& rng, float lr_mul = 1.0f, float bias_init = 0.0f,
                  bool activate = false);
  torch::Tensor forward(torch::Tensor x);

  torch::Tensor weight;
  torch::Tensor bias;

 private:
  float weight_gain_;
  float bias_gain_;
  bool activate_;
};
TORCH_MODULE(EqualLinear);

class EqualConv2dImpl : public torch::nn::Module {
 public:
  EqualConv2dImpl(int in_channels, int out_channels, int kernel, Rng& rng, bool bias = true, bool activate = true);
  torch::Tensor forward(torch::Tensor x);

  torch::Tensor weight;
  torch::Tensor bias;

 private:
  float weight_gain_;
  bool activate_;
  int padding_;
};
TORCH_MODULE(EqualConv2d);

/// z -> w. Input rows are first projected onto the sphere of radius sqrt(D).
class MappingNetworkImpl : public torch::nn::Module {
 public:
  MappingNetworkImpl(const ArchConfig& arch, Rng& rng);
  torch::Tensor forward(torch::Tensor z);

  torch::nn::ModuleList layers;
};
TORCH_MODULE(MappingNetwork);

/// Convolution whose input channels are scaled by a per-sample style and,
/// when `demodulate`, whose output channels are rescaled to unit expected
/// variance (weight demodulation).
class ModulatedConvImpl : public torch::nn::Module {
 public:
  ModulatedConvImpl(int in_channels, int out_channels, int kernel, int w_dim, bool demodulate, bool upsample,
                    Rng& rng);
  torch::Tensor forward(torch::Tensor x, torch::Tensor w);

  EqualLinear affine{nullptr};
  torch::Tensor weight;

 private:
  float weight_gain_;
  bool demodulate_;
  bool upsample_;
  int padding_;
};
TORCH_MODULE(ModulatedConv);

/// Modulated 3x3 conv, additive per-channel-weighted noise, bias, lrelu.
class SynthesisLayerImpl : public torch::nn::Module {
 public:
  SynthesisLayerImpl(int in_channels, int out_channels, int w_dim, bool upsample, float noise_strength_init,
                     Rng& rng);
  /// `noise` is [B|1, 1, H, W]; an undefined tensor means the site is gated
  /// off and contributes nothing.
  torch::Tensor forward(torch::Tensor x, torch::Tensor w, const torch::Tensor& noise);

  ModulatedConv conv{nullptr};
  torch::Tensor noise_strength;
  torch::Tensor bias;
};
TORCH_MODULE(SynthesisLayer);

class ToRgbImpl : public torch::nn::Module {
 public:
  ToRgbImpl(int in_channels, int w_dim, Rng& rng);
  torch::Tensor forward(torch::Tensor x, torch::Tensor w);

  ModulatedConv conv{nullptr};
  torch::Tensor bias;
};
TORCH_MODULE(ToRgb);

/// Style-driven synthesis network with a skip (per-resolution toRGB)
/// output path.
class SynthesisNetworkImpl : public torch::nn::Module {
 public:
  SynthesisNetworkImpl(const ArchConfig& arch, Rng& rng);

  /// ws: [B, L, D]. noise: one tensor per noise site (see ArchConfig::
  /// noise_sites), each [B|1, 1, r, r]. Sites whose resolution is gated off
  /// are skipped entirely and may hold undefined tensors. Returns the raw
  /// (unclamped) image batch [B, 3, R, R].
  torch::Tensor forward(torch::Tensor ws, const std::vector<torch::Tensor>& noise, const NoiseGateConfig& gates);

  torch::Tensor const_input;
  torch::nn::ModuleList layers;  // SynthesisLayer, in noise-site order
  torch::nn::ModuleList to_rgb;  // one per resolution

 private:
  ArchConfig arch_;
  std::vector<NoiseSite> sites_;
};
TORCH_MODULE(SynthesisNetwork);

/// Residual discriminator with a minibatch-stddev epilogue. Returns one
/// logit per image.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  DiscriminatorImpl(const ArchConfig& arch, Rng& rng);
  torch::Tensor forward(torch::Tensor img);

  EqualConv2d from_rgb{nullptr};
  torch::nn::ModuleList conv0;
  torch::nn::ModuleList conv1;
  torch::nn::ModuleList skip;
  EqualConv2d epilogue_conv{nullptr};
  EqualLinear fc{nullptr};
  EqualLinear out{nullptr};
};
TORCH_MODULE(Discriminator);

torch::Tensor to_tensor(const LatentWPlus& w);  // [1, L, D]
torch::Tensor to_tensor(const ImageTensor& img);  // [1, 3, H, W]
/// [3, H, W] or [1, 3, H, W] -> ImageTensor, clamped to [-1, 1].
ImageTensor image_from_tensor(torch::Tensor t);
/// One [1, 1, r, r] tensor per site; gated-off sites get undefined tensors.
std::vector<torch::Tensor> noise_tensors(const NoiseBuffers& noise, const ArchConfig& arch,
                                         const NoiseGateConfig& gates);

struct GenerateResult {
  ImageTensor image;
  LatentWPlus w_plus;
  NoiseBuffers noise;
};

/// Mapping + synthesis networks with their architecture, gate
/// configuration and latent mean. Inference entry points are const, keep no
/// hidden state, and may be called concurrently.
class Generator {
 public:
  Generator(const ArchConfig& arch, const NoiseGateConfig& gates, std::uint64_t init_seed);

  const ArchConfig& arch() const { return arch_; }
  const NoiseGateConfig& gates() const { return gates_; }
  int num_layers() const { return arch_.num_layers(); }

  MappingNetwork& mapping() { return mapping_; }
  SynthesisNetwork& synthesis() { return synthesis_; }
  const MappingNetwork& mapping() const { return mapping_; }
  const SynthesisNetwork& synthesis() const { return synthesis_; }

  const LatentW& w_mean() const { return w_mean_; }
  void set_w_mean(LatentW w) { w_mean_ = std::move(w); }
  /// Average of map_latent over `n` latents drawn from `seed`.
  void estimate_w_mean(int n = 10000, std::uint64_t seed = 0x5745414Eull);

  LatentW map_latent(const LatentZ& z) const;
  ImageTensor synthesize(const LatentWPlus& w_plus, const NoiseBuffers& noise) const;
  ImageTensor synthesize(const LatentWPlus& w_plus, const NoiseBuffers& noise, const NoiseGateConfig& gates) const;
  /// Batched inference without gradient: ws [B, L, D], one NoiseBuffers per
  /// sample. Returns clamped images [B, 3, R, R].
  torch::Tensor synthesize_batch(torch::Tensor ws, const std::vector<const NoiseBuffers*>& noise,
                                 const NoiseGateConfig& gates) const;

  /// map -> broadcast to W+ -> truncate all layers toward w_mean -> synthesize.
  GenerateResult generate(std::uint64_t latent_seed, std::uint64_t noise_seed, float psi) const;

  /// Parameters of mapping and synthesis, prefixed "mapping." / "synthesis.".
  std::vector<std::pair<std::string, torch::Tensor>> named_parameters() const;
  std::vector<torch::Tensor> parameters() const;
  void copy_parameters_from(const Generator& other);

 private:
  ArchConfig arch_;
  NoiseGateConfig gates_;
  MappingNetwork mapping_;
  SynthesisNetwork synthesis_;
  LatentW w_mean_;
};

float discriminate(const ImageTensor& img, Discriminator& d);
std::vector<float> discriminate(const std::vector<ImageTensor>& batch, Discriminator& d);

/// Serialized generator (+ optional discriminator), see Archive for the
/// container layout. Tensors are named "mapping.*", "synthesis.*",
/// "discriminator.*" and "w_mean"; the manifest meta carries
/// format_version, arch_config, gate_config, ema_decay and free-form `extra`.
struct CheckpointInfo {
  static constexpr int kFormatVersion = 1;
  float ema_decay = 0.0f;
  nlohmann::json extra = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Generator& g, const Discriminator* d,
                     const CheckpointInfo& info);
std::vector<std::uint8_t> encode_checkpoint(const Generator& g, const Discriminator* d, const CheckpointInfo& info);

struct LoadedCheckpoint {
  std::shared_ptr<Generator> generator;
  Discriminator discriminator{nullptr};
  CheckpointInfo info;
};

/// Throws FormatError on container damage and InvalidArgument when the
/// stored tensors disagree with arch_config.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
LoadedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace noisegate
