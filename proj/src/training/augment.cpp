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

#include "noisegate/training/augment.hpp"

#include <cmath>
#include <numbers>

#include "noisegate/error.hpp"
#include "noisegate/rng.hpp"

namespace noisegate::training {
namespace F = torch::nn::functional;

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;
using Mat4 = std::array<std::array<double, 4>, 4>;

template <std::size_t N>
std::array<std::array<double, N>, N> identity() {
  std::array<std::array<double, N>, N> m{};
  for (std::size_t i = 0; i < N; ++i) m[i][i] = 1.0;
  return m;
}

template <std::size_t N>
std::array<std::array<double, N>, N> matmul(const std::array<std::array<double, N>, N>& a,
                                            const std::array<std::array<double, N>, N>& b) {
  std::array<std::array<double, N>, N> out{};
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j)
      for (std::size_t k = 0; k < N; ++k) out[i][j] += a[i][k] * b[k][j];
  return out;
}

Mat3 scale2d(double sx, double sy) {
  Mat3 m = identity<3>();
  m[0][0] = sx;
  m[1][1] = sy;
  return m;
}

Mat3 rotate2d(double theta) {
  Mat3 m = identity<3>();
  m[0][0] = std::cos(theta);
  m[0][1] = -std::sin(theta);
  m[1][0] = std::sin(theta);
  m[1][1] = std::cos(theta);
  return m;
}

Mat3 translate2d(double tx, double ty) {
  Mat3 m = identity<3>();
  m[0][2] = tx;
  m[1][2] = ty;
  return m;
}

Mat4 translate3d(double t) {
  Mat4 m = identity<4>();
  for (int i = 0; i < 3; ++i) m[i][3] = t;
  return m;
}

Mat4 scale3d(double s) {
  Mat4 m = identity<4>();
  for (int i = 0; i < 3; ++i) m[i][i] = s;
  return m;
}

// Luma axis v = (1, 1, 1) / sqrt(3).
Mat4 luma_outer() {
  Mat4 m{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m[i][j] = 1.0 / 3.0;
  return m;
}

Mat4 rotate_about_luma(double theta) {
  // Rodrigues' formula around v.
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double v = 1.0 / std::sqrt(3.0);
  const double k[3][3] = {{0, -v, v}, {v, 0, -v}, {-v, v, 0}};
  Mat4 m = identity<4>();
  const Mat4 vv = luma_outer();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m[i][j] = c * (i == j ? 1.0 : 0.0) + s * k[i][j] + (1.0 - c) * vv[i][j];
  return m;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

torch::Tensor translate_int(const torch::Tensor& img, int tx, int ty) {
  const int h = static_cast<int>(img.size(1));
  const int w = static_cast<int>(img.size(2));
  std::vector<std::int64_t> ix(w), iy(h);
  for (int x = 0; x < w; ++x) ix[x] = reflect_index(x - tx, w);
  for (int y = 0; y < h; ++y) iy[y] = reflect_index(y - ty, h);
  auto opts = torch::TensorOptions().dtype(torch::kInt64);
  return img.index_select(1, torch::tensor(iy, opts)).index_select(2, torch::tensor(ix, opts));
}

}  // namespace

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.xflip = c.rotate90 = c.int_translate = false;
  c.iso_scale = c.rotate = c.aniso_scale = c.frac_translate = false;
  c.brightness = c.contrast = c.luma_flip = c.hue_rotate = c.saturation = false;
  return c;
}

nlohmann::json AugmentConfig::to_json() const {
  return {{"blit", blit},
          {"geometric", geometric},
          {"color", color},
          {"xflip", xflip},
          {"rotate90", rotate90},
          {"int_translate", int_translate},
          {"int_translate_max", int_translate_max},
          {"iso_scale", iso_scale},
          {"iso_scale_std", iso_scale_std},
          {"rotate", rotate},
          {"rotate_max", rotate_max},
          {"aniso_scale", aniso_scale},
          {"aniso_scale_std", aniso_scale_std},
          {"frac_translate", frac_translate},
          {"frac_translate_std", frac_translate_std},
          {"brightness", brightness},
          {"brightness_mean", brightness_mean},
          {"brightness_std", brightness_std},
          {"contrast", contrast},
          {"contrast_std", contrast_std},
          {"luma_flip", luma_flip},
          {"hue_rotate", hue_rotate},
          {"hue_max", hue_max},
          {"saturation", saturation},
          {"saturation_std", saturation_std}};
}

AugmentConfig AugmentConfig::from_json(const nlohmann::json& j) {
  AugmentConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("blit", c.blit);
  get("geometric", c.geometric);
  get("color", c.color);
  get("xflip", c.xflip);
  get("rotate90", c.rotate90);
  get("int_translate", c.int_translate);
  get("int_translate_max", c.int_translate_max);
  get("iso_scale", c.iso_scale);
  get("iso_scale_std", c.iso_scale_std);
  get("rotate", c.rotate);
  get("rotate_max", c.rotate_max);
  get("aniso_scale", c.aniso_scale);
  get("aniso_scale_std", c.aniso_scale_std);
  get("frac_translate", c.frac_translate);
  get("frac_translate_std", c.frac_translate_std);
  get("brightness", c.brightness);
  get("brightness_mean", c.brightness_mean);
  get("brightness_std", c.brightness_std);
  get("contrast", c.contrast);
  get("contrast_std", c.contrast_std);
  get("luma_flip", c.luma_flip);
  get("hue_rotate", c.hue_rotate);
  get("hue_max", c.hue_max);
  get("saturation", c.saturation);
  get("saturation_std", c.saturation_std);
  return c;
}

torch::Tensor apply_augmentations(const torch::Tensor& batch, double p, const AugmentConfig& cfg, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("augmentation probability must lie in [0, 1]");
  if (batch.dim() != 4 || batch.size(1) != 3) throw InvalidArgument("augmentations expect [B, 3, H, W]");
  if (p == 0.0) return batch;

  Rng rng(seed);
  auto fires = [&](bool enabled) { return enabled && rng.uniform() < p; };
  const int h = static_cast<int>(batch.size(2));
  const int w = static_cast<int>(batch.size(3));
  constexpr double pi = std::numbers::pi;

  std::vector<torch::Tensor> out;
  out.reserve(static_cast<std::size_t>(batch.size(0)));
  for (std::int64_t i = 0; i < batch.size(0); ++i) {
    auto img = batch[i];

    if (cfg.blit) {
      if (fires(cfg.xflip)) img = img.flip({2});
      if (fires(cfg.rotate90) && h == w) {
        const auto k = static_cast<std::int64_t>(1 + rng.below(3));
        img = torch::rot90(img, k, {1, 2});
      }
      if (fires(cfg.int_translate)) {
        const int tx = static_cast<int>(std::lround((rng.uniform() * 2.0 - 1.0) * cfg.int_translate_max * w));
        const int ty = static_cast<int>(std::lround((rng.uniform() * 2.0 - 1.0) * cfg.int_translate_max * h));
        if (tx != 0 || ty != 0) img = translate_int(img, tx, ty);
      }
    }

    if (cfg.geometric) {
      // Maps output coordinates to input coordinates in [-1, 1] units.
      Mat3 g = identity<3>();
      bool any = false;
      if (fires(cfg.iso_scale)) {
        const double s = std::exp2(rng.normal() * cfg.iso_scale_std);
        g = matmul(g, scale2d(s, s));
        any = true;
      }
      if (fires(cfg.rotate)) {
        g = matmul(g, rotate2d((rng.uniform() * 2.0 - 1.0) * pi * cfg.rotate_max));
        any = true;
      }
      if (fires(cfg.aniso_scale)) {
        const double s = std::exp2(rng.normal() * cfg.aniso_scale_std);
        g = matmul(g, scale2d(s, 1.0 / s));
        any = true;
      }
      if (fires(cfg.frac_translate)) {
        g = matmul(g, translate2d(rng.normal() * cfg.frac_translate_std * 2.0, rng.normal() * cfg.frac_translate_std * 2.0));
        any = true;
      }
      if (any) {
        auto theta = torch::tensor({g[0][0], g[0][1], g[0][2], g[1][0], g[1][1], g[1][2]}, torch::kFloat32)
                         .view({1, 2, 3})
                         .to(img.dtype());
        auto grid = F::affine_grid(theta, {1, 3, h, w}, /*align_corners=*/false);
        img = F::grid_sample(img.unsqueeze(0), grid,
                             F::GridSampleFuncOptions()
                                 .mode(torch::kBilinear)
                                 .padding_mode(torch::kReflection)
                                 .align_corners(false))
                  .squeeze(0);
      }
    }

    if (cfg.color) {
      Mat4 c = identity<4>();
      bool any = false;
      if (fires(cfg.brightness)) {
        c = matmul(translate3d(cfg.brightness_mean + rng.normal() * cfg.brightness_std), c);
        any = true;
      }
      if (fires(cfg.contrast)) {
        c = matmul(scale3d(std::exp2(rng.normal() * cfg.contrast_std)), c);
        any = true;
      }
      if (fires(cfg.luma_flip)) {
        // Householder reflection through the plane orthogonal to luma.
        Mat4 m = identity<4>();
        const Mat4 vv = luma_outer();
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) m[a][b] -= 2.0 * vv[a][b];
        c = matmul(m, c);
        any = true;
      }
      if (fires(cfg.hue_rotate)) {
        c = matmul(rotate_about_luma((rng.uniform() * 2.0 - 1.0) * pi * cfg.hue_max), c);
        any = true;
      }
      if (fires(cfg.saturation)) {
        const double s = std::exp2(rng.normal() * cfg.saturation_std);
        Mat4 m = identity<4>();
        const Mat4 vv = luma_outer();
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) m[a][b] = vv[a][b] + ((a == b ? 1.0 : 0.0) - vv[a][b]) * s;
        c = matmul(m, c);
        any = true;
      }
      if (any) {
        auto lin = torch::tensor({c[0][0], c[0][1], c[0][2], c[1][0], c[1][1], c[1][2], c[2][0], c[2][1], c[2][2]},
                                 torch::kFloat32)
                       .view({3, 3})
                       .to(img.dtype());
        auto off = torch::tensor({c[0][3], c[1][3], c[2][3]}, torch::kFloat32).view({3, 1, 1}).to(img.dtype());
        img = (torch::einsum("ij,jhw->ihw", {lin, img}) + off).clamp(-1.0, 1.0);
      }
    }
    out.push_back(img);
  }
  return torch::stack(out, 0);
}

}  // namespace noisegate::training
