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

#include "torch_doctest.hpp"

#include <cmath>
#include <filesystem>

#include "noisegate/error.hpp"
#include "noisegate/rng.hpp"
#include "noisegate/training/augment.hpp"
#include "noisegate/training/losses.hpp"
#include "noisegate/training/trainer.hpp"

using namespace noisegate;
using namespace noisegate::training;

namespace {

ArchConfig small_arch() {
  ArchConfig a;
  a.resolution = 16;
  a.latent_dim = 16;
  a.mapping_layers = 2;
  a.channel_base = 256;
  a.channel_max = 16;
  return a;
}

torch::Tensor seeded_normal(std::vector<std::int64_t> shape, std::uint64_t seed,
                            torch::Dtype dtype = torch::kFloat32) {
  std::size_t n = 1;
  for (auto s : shape) n *= static_cast<std::size_t>(s);
  auto v = normal_vector(seed, n);
  return torch::tensor(v, torch::kFloat32).view(shape).to(dtype);
}

// Tiny double-precision discriminator: conv3x3 -> lrelu -> conv3x3 -> lrelu -> linear.
struct TinyD {
  torch::Tensor w1, b1, w2, b2, wl;
  explicit TinyD(std::uint64_t seed) {
    w1 = seeded_normal({4, 3, 3, 3}, derive_seed(seed, 1), torch::kFloat64) * 0.3;
    b1 = seeded_normal({4}, derive_seed(seed, 2), torch::kFloat64) * 0.1;
    w2 = seeded_normal({4, 4, 3, 3}, derive_seed(seed, 3), torch::kFloat64) * 0.3;
    b2 = seeded_normal({4}, derive_seed(seed, 4), torch::kFloat64) * 0.1;
    wl = seeded_normal({4 * 6 * 6}, derive_seed(seed, 5), torch::kFloat64) * 0.2;
  }
  torch::Tensor operator()(const torch::Tensor& x) const {
    namespace F = torch::nn::functional;
    auto h = F::leaky_relu(F::conv2d(x, w1, F::Conv2dFuncOptions().bias(b1).padding(1)),
                           F::LeakyReLUFuncOptions().negative_slope(0.2));
    h = F::leaky_relu(F::conv2d(h, w2, F::Conv2dFuncOptions().bias(b2).padding(1)),
                      F::LeakyReLUFuncOptions().negative_slope(0.2));
    return torch::tanh(h.flatten(1)).matmul(wl);
  }
};

double fd_penalty(const TinyD& d, const torch::Tensor& x, double gamma, double eps) {
  double total = 0.0;
  for (std::int64_t b = 0; b < x.size(0); ++b) {
    auto xb = x.slice(0, b, b + 1).clone();
    auto flat = xb.view({-1});
    double sq = 0.0;
    for (std::int64_t i = 0; i < flat.size(0); ++i) {
      const double orig = flat[i].item<double>();
      flat[i] = orig + eps;
      const double up = d(xb).item<double>();
      flat[i] = orig - eps;
      const double down = d(xb).item<double>();
      flat[i] = orig;
      const double g = (up - down) / (2.0 * eps);
      sq += g * g;
    }
    total += sq;
  }
  return gamma / 2.0 * total / static_cast<double>(x.size(0));
}

}  // namespace

TEST_CASE("generator and discriminator losses match closed forms") {
  const double ln2 = std::log(2.0);
  CHECK(g_loss(torch::zeros({1})).item<double>() == doctest::Approx(ln2).epsilon(1e-6));
  CHECK(g_loss(torch::zeros({2})).item<double>() == doctest::Approx(g_loss(torch::zeros({1})).item<double>()));
  CHECK(g_loss(torch::full({3}, 50.0)).item<double>() < 1e-12);
  CHECK(d_loss(torch::zeros({1}), torch::zeros({1})).item<double>() == doctest::Approx(2 * ln2).epsilon(1e-6));
  CHECK(d_loss(torch::full({2}, 50.0), torch::full({2}, -50.0)).item<double>() < 1e-12);

  auto r = seeded_normal({5}, 1);
  auto f = seeded_normal({7}, 2);
  CHECK(d_loss(r, f).item<double>() == doctest::Approx(d_loss(-f, -r).item<double>()).epsilon(1e-6));

  auto bad = torch::tensor({0.0f, std::nanf("")});
  CHECK_THROWS_AS(g_loss(bad), NumericFailure);
  CHECK_THROWS_AS(d_loss(bad, torch::zeros({1})), NumericFailure);
  CHECK_THROWS_AS(d_loss(torch::zeros({1}), torch::tensor({INFINITY})), NumericFailure);
}

TEST_CASE("R1 penalty") {
  const double gamma = 10.0;
  SUBCASE("constant discriminator gives zero") {
    auto x = seeded_normal({2, 3, 4, 4}, 3);
    auto p = r1_penalty([](const torch::Tensor& t) { return torch::full({t.size(0)}, 0.7); }, x, gamma);
    CHECK(p.item<double>() == 0.0);
    auto q = r1_penalty([](const torch::Tensor& t) { return t.sum({1, 2, 3}) * 0.0; }, x, gamma);
    CHECK(q.item<double>() == 0.0);
  }
  SUBCASE("linear discriminator gives (gamma/2)|a|^2") {
    auto a = seeded_normal({3 * 5 * 5}, 4, torch::kFloat64);
    const double expected = gamma / 2.0 * a.square().sum().item<double>();
    auto x = seeded_normal({4, 3, 5, 5}, 5, torch::kFloat64);
    auto p = r1_penalty([&](const torch::Tensor& t) { return t.flatten(1).matmul(a); }, x, gamma);
    CHECK(std::abs(p.item<double>() - expected) <= 1e-6 * expected);
  }
  SUBCASE("matches central finite differences on a tiny random network") {
    TinyD d(6);
    auto x = seeded_normal({2, 3, 6, 6}, 7, torch::kFloat64);
    const double ad = r1_penalty([&](const torch::Tensor& t) { return d(t); }, x, gamma).item<double>();
    const double fd = fd_penalty(d, x, gamma, 1e-5);
    CHECK(ad > 0.0);
    CHECK(std::abs(ad - fd) <= 1e-3 * std::abs(fd));
  }
  SUBCASE("penalty is differentiable w.r.t. discriminator parameters") {
    auto w = torch::ones({3 * 2 * 2}, torch::kFloat64).requires_grad_(true);
    auto x = seeded_normal({2, 3, 2, 2}, 8, torch::kFloat64);
    auto p = r1_penalty([&](const torch::Tensor& t) { return t.flatten(1).matmul(w); }, x, gamma);
    p.backward();
    // d/dw (gamma/2)|w|^2 = gamma * w
    CHECK(torch::allclose(w.grad(), torch::full_like(w, gamma)));
  }
}

TEST_CASE("ADA controller") {
  TrainConfig cfg;
  cfg.ada_target = 0.6;
  cfg.ada_adjust_interval = 4;
  cfg.batch_size = 8;
  cfg.ada_speed = 3200.0;
  const double delta = 4.0 * 8.0 / 3200.0;

  AdaState s{0.5, 0.0};
  auto up = ada_update(s, torch::ones({8}), cfg);
  CHECK(up.rt_estimate == 1.0);
  CHECK(up.p > s.p);
  CHECK(up.p == doctest::Approx(0.5 + delta));

  auto down = ada_update(s, -torch::ones({8}), cfg);
  CHECK(down.rt_estimate == -1.0);
  CHECK(down.p < s.p);

  AdaState low{delta / 2, 0.0};
  CHECK(ada_update(low, -torch::ones({8}), cfg).p == 0.0);
  AdaState high{1.0 - delta / 2, 0.0};
  CHECK(ada_update(high, torch::ones({8}), cfg).p == 1.0);

  // 4 of 5 positive: rt = (4 - 1) / 5 = 0.6 exactly.
  auto eq = ada_update(s, torch::tensor({1.0, 2.0, 3.0, 4.0, -1.0}), cfg);
  CHECK(eq.rt_estimate == doctest::Approx(0.6));
  CHECK(eq.p == s.p);
}

TEST_CASE("augmentations") {
  auto x = seeded_normal({3, 3, 8, 8}, 9).clamp(-1, 1);

  SUBCASE("p = 0 is a bit-identical no-op") {
    auto y = apply_augmentations(x, 0.0, AugmentConfig{}, 1);
    CHECK(torch::equal(x, y));
  }
  SUBCASE("x-flip at p = 1 flips every image and is an involution") {
    auto cfg = AugmentConfig::none();
    cfg.xflip = true;
    auto y = apply_augmentations(x, 1.0, cfg, 2);
    CHECK(torch::equal(y, x.flip({3})));
    CHECK(torch::equal(apply_augmentations(y, 1.0, cfg, 3), x));
  }
  SUBCASE("brightness shift b moves every pixel by b before clamping") {
    auto cfg = AugmentConfig::none();
    cfg.brightness = true;
    cfg.brightness_std = 0.0;
    for (double b : {0.3, -0.45}) {
      cfg.brightness_mean = b;
      auto y = apply_augmentations(x, 1.0, cfg, 4);
      auto xa = x.accessor<float, 4>();
      auto ya = y.accessor<float, 4>();
      double worst = 0.0;
      for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 3; ++c)
          for (int h = 0; h < 8; ++h)
            for (int w = 0; w < 8; ++w) {
              const double expected = std::clamp(static_cast<double>(xa[i][c][h][w]) + b, -1.0, 1.0);
              worst = std::max(worst, std::abs(ya[i][c][h][w] - expected));
            }
      CHECK(worst < 1e-6);
    }
  }
  SUBCASE("full pipeline keeps shape, range and gradient flow") {
    auto xg = x.clone().requires_grad_(true);
    auto y = apply_augmentations(xg, 1.0, AugmentConfig{}, 5);
    CHECK(y.sizes() == x.sizes());
    CHECK(torch::isfinite(y).all().item<bool>());
    CHECK(y.abs().max().item<float>() <= 1.0f);
    y.sum().backward();
    CHECK(xg.grad().defined());
    CHECK(torch::equal(apply_augmentations(x, 0.5, AugmentConfig{}, 6), apply_augmentations(x, 0.5, AugmentConfig{}, 6)));
  }
  SUBCASE("disabled categories are skipped") {
    AugmentConfig cfg;
    cfg.blit = cfg.geometric = cfg.color = false;
    CHECK(torch::equal(apply_augmentations(x, 1.0, cfg, 7), x));
  }
  CHECK_THROWS_AS(apply_augmentations(x, 1.5, AugmentConfig{}, 1), InvalidArgument);
}

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  cfg.batch_size = 10;
  cfg.total_images = 1000;  // 100 steps
  cfg.lr_initial = 0.002;
  cfg.lr_decay.start_fraction = 0.4;
  cfg.lr_decay.lr_final = 0.0004;
  CHECK(lr_schedule(0, cfg) == cfg.lr_initial);
  CHECK(lr_schedule(100, cfg) == cfg.lr_decay.lr_final);
  CHECK(lr_schedule(250, cfg) == cfg.lr_decay.lr_final);
  CHECK(lr_schedule(70, cfg) == doctest::Approx((0.002 + 0.0004) / 2).epsilon(1e-12));
  double prev = lr_schedule(0, cfg);
  for (int s = 1; s <= 110; ++s) {
    const double lr = lr_schedule(s, cfg);
    CHECK(lr <= prev);
    prev = lr;
  }
  CHECK_THROWS_AS(lr_schedule(-1, cfg), InvalidArgument);
  cfg.lr_decay.kind = LrDecay::Kind::kConstant;
  CHECK(lr_schedule(99, cfg) == cfg.lr_initial);
}

TEST_CASE("train config validation and JSON round trip") {
  TrainConfig cfg;
  cfg.ada_target = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.r1_gamma = 3.5;
  cfg.lr_decay.kind = LrDecay::Kind::kConstant;
  cfg.augment.hue_rotate = false;
  auto back = TrainConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK_THROWS_AS(TrainConfig::from_json({{"lr_decay", {{"kind", "step"}}}}), ConfigError);
}

TEST_CASE("train step with lr = 0 leaves parameters unchanged") {
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.lr_initial = 0.0;
  cfg.lr_decay.lr_final = 0.0;
  cfg.r1_interval = 1;
  cfg.seed = 11;
  Trainer t(small_arch(), NoiseGateConfig::parse("off:4-8", small_arch()), cfg);
  std::vector<torch::Tensor> g_before, d_before;
  for (auto& p : t.generator().parameters()) g_before.push_back(p.detach().clone());
  for (auto& p : t.discriminator()->parameters()) d_before.push_back(p.detach().clone());

  auto real = seeded_normal({2, 3, 16, 16}, 12).clamp(-1, 1);
  auto m = t.step(real);
  CHECK(m.r1.has_value());
  CHECK(std::isfinite(m.g_loss));
  CHECK(std::isfinite(m.d_loss));

  auto g_after = t.generator().parameters();
  auto d_after = t.discriminator()->parameters();
  for (std::size_t i = 0; i < g_after.size(); ++i) CHECK(torch::equal(g_before[i], g_after[i]));
  for (std::size_t i = 0; i < d_after.size(); ++i) CHECK(torch::equal(d_before[i], d_after[i]));
  auto ema = t.ema().parameters();
  for (std::size_t i = 0; i < ema.size(); ++i) CHECK(torch::equal(ema[i], g_after[i]));
}

TEST_CASE("training is deterministic and updates parameters") {
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.total_images = 8;
  cfg.r1_interval = 2;
  cfg.ada_adjust_interval = 1;
  cfg.ada_p_init = 0.5;
  cfg.style_mixing_prob = 0.5;
  cfg.pl_weight = 1.0;
  cfg.pl_interval = 2;
  cfg.seed = 21;
  auto real = seeded_normal({2, 3, 16, 16}, 22).clamp(-1, 1);

  auto run = [&] {
    Trainer t(small_arch(), NoiseGateConfig::parse("off:4-8", small_arch()), cfg);
    std::vector<double> trace;
    for (int i = 0; i < 4; ++i) {
      auto m = t.step(real);
      trace.push_back(m.g_loss);
      trace.push_back(m.d_loss);
      trace.push_back(m.ada_p);
    }
    return std::make_pair(trace, t.generator().parameters()[0].detach().clone());
  };
  auto [a, pa] = run();
  auto [b, pb] = run();
  CHECK(a == b);
  CHECK(torch::equal(pa, pb));

  Trainer fresh(small_arch(), NoiseGateConfig::parse("off:4-8", small_arch()), cfg);
  CHECK_FALSE(torch::equal(fresh.generator().parameters()[0], pa));
}

TEST_CASE("train loop writes metrics and a loadable checkpoint") {
  const auto dir = std::filesystem::temp_directory_path() / "noisegate_test_train_loop";
  std::filesystem::remove_all(dir);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.total_images = 6;
  cfg.snapshot_interval = 2;
  cfg.seed = 31;
  auto data = seeded_normal({5, 3, 16, 16}, 32).clamp(-1, 1);
  std::vector<int> hooked;
  auto result = train_loop(small_arch(), NoiseGateConfig::parse("off:4-8", small_arch()), cfg, data, dir,
                           [&](const Trainer&, int s) { hooked.push_back(s); });
  CHECK(result.metrics.size() == 3);
  CHECK(hooked == std::vector<int>{0, 2, 3});
  CHECK(std::filesystem::exists(dir / "metrics.jsonl"));
  CHECK(std::filesystem::exists(dir / "snapshot-2.ngar"));
  auto ckpt = load_checkpoint(result.final_checkpoint);
  CHECK(ckpt.generator->gates().to_string() == "off:4-8");
  CHECK(ckpt.info.extra.at("step").get<int>() == 3);
  CHECK(ckpt.discriminator);
  std::filesystem::remove_all(dir);

  CHECK_THROWS_AS(train_loop(small_arch(), NoiseGateConfig::all_on(small_arch()), cfg, seeded_normal({2, 3, 8, 8}, 1), dir),
                  InvalidArgument);
}

TEST_CASE("batch sampler covers every image once per epoch") {
  auto data = torch::arange(6, torch::kFloat32).view({6, 1, 1, 1}).expand({6, 3, 1, 1}).contiguous();
  BatchSampler s(data, 4, 1);
  auto b1 = s.next();
  auto b2 = s.next();
  auto seen = torch::cat({b1, b2}).select(1, 0).flatten().slice(0, 0, 6);
  auto sorted = std::get<0>(seen.sort());
  CHECK(torch::equal(sorted, torch::arange(6, torch::kFloat32)));
}
