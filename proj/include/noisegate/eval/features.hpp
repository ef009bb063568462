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

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "noisegate/image.hpp"

namespace noisegate::eval {

/// Maps an image batch [N, 3, H, W] in [-1, 1] to features [N, F].
/// Implementations are deterministic and differentiable where the backing
/// network is.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string id() const = 0;
  virtual torch::Tensor features(const torch::Tensor& images) const = 0;
};

/// Flattened HWC pixels. Feature count depends on the image size.
class IdentityExtractor final : public FeatureExtractor {
 public:
  std::string id() const override { return "identity"; }
  torch::Tensor features(const torch::Tensor& images) const override;
};

/// Box-downsample to 16x16 then a fixed Gaussian projection to 64 dims.
class RandomProjectionExtractor final : public FeatureExtractor {
 public:
  static constexpr int kSide = 16;
  static constexpr int kDim = 64;
  RandomProjectionExtractor();
  std::string id() const override { return "random-projection"; }
  torch::Tensor features(const torch::Tensor& images) const override;

 private:
  torch::Tensor projection_;  // [3 * kSide * kSide, kDim]
};

/// Fixed random three-stage conv net (3 -> 16 -> 32 -> 64 channels, lrelu,
/// 2x average pooling between stages). Images larger than 64x64 are first
/// box-downsampled to 64x64. Features are the per-channel spatial mean and
/// standard deviation of every stage (224 values).
class RandomConvExtractor final : public FeatureExtractor {
 public:
  static constexpr int kMaxSide = 64;
  RandomConvExtractor();
  std::string id() const override { return "random-conv"; }
  torch::Tensor features(const torch::Tensor& images) const override;
  /// Stage activations, each [N, C, h, w].
  std::vector<torch::Tensor> stages(const torch::Tensor& images) const;

 private:
  std::vector<torch::Tensor> weights_;
  std::vector<torch::Tensor> biases_;
};

/// TorchScript module whose forward maps [N, 3, H, W] to [N, F].
class TorchScriptExtractor final : public FeatureExtractor {
 public:
  explicit TorchScriptExtractor(const std::string& path);
  ~TorchScriptExtractor() override;
  std::string id() const override { return "torchscript:" + path_; }
  torch::Tensor features(const torch::Tensor& images) const override;

 private:
  struct Impl;
  std::string path_;
  std::unique_ptr<Impl> impl_;
};

/// "identity", "random-projection", "random-conv" or "torchscript:<path>".
/// Unknown ids throw ConfigError.
std::shared_ptr<const FeatureExtractor> make_extractor(const std::string& id);

/// Features as a double matrix, one row per image. Batches internally.
Eigen::MatrixXd extract_features(const torch::Tensor& images, const FeatureExtractor& extractor, int batch = 64);
Eigen::MatrixXd extract_features(const std::vector<ImageTensor>& images, const FeatureExtractor& extractor,
                                 int batch = 64);

/// Channel-normalized squared distance between the random-conv stage
/// activations of `a` and `b`, averaged over positions and summed over
/// stages. Returns [N].
torch::Tensor perceptual_distance(const RandomConvExtractor& net, const torch::Tensor& a, const torch::Tensor& b);

}  // namespace noisegate::eval
