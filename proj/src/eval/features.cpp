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

#include "noisegate/eval/features.hpp"

#include <torch/script.h>

#include <mutex>

#include "noisegate/error.hpp"
#include "noisegate/model.hpp"
#include "noisegate/rng.hpp"

namespace noisegate::eval {
namespace F = torch::nn::functional;

namespace {

constexpr std::uint64_t kProjectionSeed = 0x5250524F4A454354ull;
constexpr std::uint64_t kConvSeed = 0x52434F4E5646ull;

torch::Tensor gaussian(std::vector<std::int64_t> shape, std::uint64_t seed, double scale) {
  std::size_t n = 1;
  for (auto s : shape) n *= static_cast<std::size_t>(s);
  return torch::tensor(normal_vector(seed, n), torch::kFloat32).view(shape) * scale;
}

void check_batch(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) throw InvalidArgument("feature extraction expects [N, 3, H, W]");
}

torch::Tensor box_down(const torch::Tensor& x, int side) {
  if (x.size(2) <= side && x.size(3) <= side) return x;
  return F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions({side, side}));
}

}  // namespace

torch::Tensor IdentityExtractor::features(const torch::Tensor& images) const {
  check_batch(images);
  return images.permute({0, 2, 3, 1}).reshape({images.size(0), -1}).to(torch::kFloat32);
}

RandomProjectionExtractor::RandomProjectionExtractor()
    : projection_(gaussian({3 * kSide * kSide, kDim}, kProjectionSeed, 1.0 / std::sqrt(3.0 * kSide * kSide))) {}

torch::Tensor RandomProjectionExtractor::features(const torch::Tensor& images) const {
  check_batch(images);
  auto x = box_down(images.to(torch::kFloat32), kSide);
  if (x.size(2) != kSide || x.size(3) != kSide) {
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<std::int64_t>{kSide, kSide})
                              .mode(torch::kBilinear)
                              .align_corners(false));
  }
  return x.reshape({x.size(0), -1}).matmul(projection_);
}

RandomConvExtractor::RandomConvExtractor() {
  const int channels[4] = {3, 16, 32, 64};
  for (int s = 0; s < 3; ++s) {
    const int fan_in = channels[s] * 9;
    weights_.push_back(gaussian({channels[s + 1], channels[s], 3, 3}, derive_seed(kConvSeed, 2 * s),
                                std::sqrt(2.0 / fan_in)));
    biases_.push_back(gaussian({channels[s + 1]}, derive_seed(kConvSeed, 2 * s + 1), 0.1));
  }
}

std::vector<torch::Tensor> RandomConvExtractor::stages(const torch::Tensor& images) const {
  check_batch(images);
  auto x = box_down(images.to(torch::kFloat32), kMaxSide);
  std::vector<torch::Tensor> out;
  for (std::size_t s = 0; s < weights_.size(); ++s) {
    if (s > 0) x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(2));
    x = F::leaky_relu(F::conv2d(x, weights_[s], F::Conv2dFuncOptions().bias(biases_[s]).padding(1)),
                      F::LeakyReLUFuncOptions().negative_slope(0.2));
    out.push_back(x);
  }
  return out;
}

torch::Tensor RandomConvExtractor::features(const torch::Tensor& images) const {
  std::vector<torch::Tensor> parts;
  for (const auto& s : stages(images)) {
    auto flat = s.flatten(2);
    parts.push_back(flat.mean(2));
    parts.push_back(flat.std(2, /*unbiased=*/false));
  }
  return torch::cat(parts, 1);
}

struct TorchScriptExtractor::Impl {
  torch::jit::Module module;
  std::mutex mu;
};

TorchScriptExtractor::TorchScriptExtractor(const std::string& path) : path_(path), impl_(std::make_unique<Impl>()) {
  try {
    impl_->module = torch::jit::load(path);
  } catch (const c10::Error& e) {
    throw ConfigError("cannot load TorchScript extractor '" + path + "': " + e.what_without_backtrace());
  }
  impl_->module.eval();
}

TorchScriptExtractor::~TorchScriptExtractor() = default;

torch::Tensor TorchScriptExtractor::features(const torch::Tensor& images) const {
  check_batch(images);
  std::lock_guard lock(impl_->mu);
  auto out = impl_->module.forward({images.to(torch::kFloat32)}).toTensor();
  if (out.dim() != 2 || out.size(0) != images.size(0)) {
    throw NumericFailure("TorchScript extractor must return [N, F]");
  }
  return out.to(torch::kFloat32);
}

std::shared_ptr<const FeatureExtractor> make_extractor(const std::string& id) {
  if (id == "identity") return std::make_shared<IdentityExtractor>();
  if (id == "random-projection") return std::make_shared<RandomProjectionExtractor>();
  if (id == "random-conv") return std::make_shared<RandomConvExtractor>();
  const std::string prefix = "torchscript:";
  if (id.rfind(prefix, 0) == 0 && id.size() > prefix.size()) {
    return std::make_shared<TorchScriptExtractor>(id.substr(prefix.size()));
  }
  throw ConfigError("unknown feature extractor '" + id + "'");
}

Eigen::MatrixXd extract_features(const torch::Tensor& images, const FeatureExtractor& extractor, int batch) {
  check_batch(images);
  if (batch < 1) throw InvalidArgument("batch must be positive");
  torch::NoGradGuard no_grad;
  const auto n = images.size(0);
  Eigen::MatrixXd out;
  for (std::int64_t start = 0; start < n; start += batch) {
    const auto end = std::min<std::int64_t>(n, start + batch);
    auto f = extractor.features(images.slice(0, start, end)).to(torch::kFloat64).contiguous();
    if (out.size() == 0) out.resize(n, f.size(1));
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> block(
        f.data_ptr<double>(), f.size(0), f.size(1));
    out.middleRows(start, end - start) = block;
  }
  return out;
}

Eigen::MatrixXd extract_features(const std::vector<ImageTensor>& images, const FeatureExtractor& extractor,
                                 int batch) {
  if (images.empty()) return {};
  std::vector<torch::Tensor> parts;
  parts.reserve(images.size());
  for (const auto& img : images) parts.push_back(to_tensor(img));
  return extract_features(torch::cat(parts, 0), extractor, batch);
}

torch::Tensor perceptual_distance(const RandomConvExtractor& net, const torch::Tensor& a, const torch::Tensor& b) {
  auto sa = net.stages(a);
  auto sb = net.stages(b);
  torch::Tensor total;
  for (std::size_t s = 0; s < sa.size(); ++s) {
    auto na = sa[s] / (sa[s].square().sum(1, true).sqrt() + 1e-8);
    auto nb = sb[s] / (sb[s].square().sum(1, true).sqrt() + 1e-8);
    auto d = (na - nb).square().sum(1).mean({1, 2});
    total = total.defined() ? total + d : d;
  }
  return total;
}

}  // namespace noisegate::eval
