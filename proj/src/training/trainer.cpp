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

#include "noisegate/training/trainer.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "noisegate/error.hpp"
#include "noisegate/rng.hpp"
#include "noisegate/training/losses.hpp"

namespace noisegate::training {

namespace {

constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamTorch = 2;
constexpr std::uint64_t kStreamAugment = 3;
constexpr std::uint64_t kStreamSampler = 4;

void set_lr(torch::optim::Adam& opt, double lr) {
  for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

std::unique_ptr<torch::optim::Adam> make_adam(std::vector<torch::Tensor> params, const TrainConfig& cfg) {
  return std::make_unique<torch::optim::Adam>(
      std::move(params),
      torch::optim::AdamOptions(cfg.lr_initial).betas({cfg.adam_beta1, cfg.adam_beta2}).eps(cfg.adam_eps));
}

double finite_or_throw(const torch::Tensor& t, const char* what) {
  const double v = t.item<double>();
  if (!std::isfinite(v)) throw NumericFailure(std::string(what) + " is non-finite");
  return v;
}

const char* decay_name(LrDecay::Kind k) { return k == LrDecay::Kind::kCosine ? "cosine" : "constant"; }

}  // namespace

int TrainConfig::total_steps() const {
  return static_cast<int>((total_images + batch_size - 1) / batch_size);
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(lr_initial >= 0.0) || !(lr_decay.lr_final >= 0.0)) throw ConfigError("learning rates must be >= 0");
  if (lr_decay.lr_final > lr_initial) throw ConfigError("lr_final must not exceed lr_initial");
  if (!(lr_decay.start_fraction >= 0.0 && lr_decay.start_fraction <= 1.0))
    throw ConfigError("lr decay start_fraction must lie in [0, 1]");
  if (!(r1_gamma >= 0.0)) throw ConfigError("r1_gamma must be >= 0");
  if (r1_interval < 1 || ada_adjust_interval < 1 || pl_interval < 1) throw ConfigError("intervals must be positive");
  if (!(ada_target > 0.0 && ada_target < 1.0)) throw ConfigError("ada_target must lie in (0, 1)");
  if (!(ada_speed > 0.0)) throw ConfigError("ada_speed must be positive");
  if (!(ada_p_init >= 0.0 && ada_p_init <= 1.0)) throw ConfigError("ada_p_init must lie in [0, 1]");
  if (!(ema_halflife_kimg > 0.0)) throw ConfigError("ema_halflife_kimg must be positive");
  if (!(style_mixing_prob >= 0.0 && style_mixing_prob <= 1.0))
    throw ConfigError("style_mixing_prob must lie in [0, 1]");
  if (!(pl_weight >= 0.0)) throw ConfigError("pl_weight must be >= 0");
  if (total_images < 1) throw ConfigError("total_images must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"lr_initial", lr_initial},
          {"lr_decay",
           {{"kind", decay_name(lr_decay.kind)},
            {"start_fraction", lr_decay.start_fraction},
            {"lr_final", lr_decay.lr_final}}},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_eps", adam_eps},
          {"r1_gamma", r1_gamma},
          {"r1_interval", r1_interval},
          {"ada_enabled", ada_enabled},
          {"ada_target", ada_target},
          {"ada_adjust_interval", ada_adjust_interval},
          {"ada_speed", ada_speed},
          {"ada_p_init", ada_p_init},
          {"augment", augment.to_json()},
          {"ema_enabled", ema_enabled},
          {"ema_halflife_kimg", ema_halflife_kimg},
          {"ema_rampup", ema_rampup},
          {"style_mixing_prob", style_mixing_prob},
          {"pl_weight", pl_weight},
          {"pl_interval", pl_interval},
          {"pl_decay", pl_decay},
          {"total_images", total_images},
          {"snapshot_interval", snapshot_interval},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("batch_size", c.batch_size);
    get("lr_initial", c.lr_initial);
    if (j.contains("lr_decay")) {
      const auto& d = j.at("lr_decay");
      if (d.contains("kind")) {
        const auto kind = d.at("kind").get<std::string>();
        if (kind == "cosine") {
          c.lr_decay.kind = LrDecay::Kind::kCosine;
        } else if (kind == "constant") {
          c.lr_decay.kind = LrDecay::Kind::kConstant;
        } else {
          throw ConfigError("unknown lr_decay kind '" + kind + "'");
        }
      }
      if (d.contains("start_fraction")) c.lr_decay.start_fraction = d.at("start_fraction").get<double>();
      if (d.contains("lr_final")) c.lr_decay.lr_final = d.at("lr_final").get<double>();
    }
    get("adam_beta1", c.adam_beta1);
    get("adam_beta2", c.adam_beta2);
    get("adam_eps", c.adam_eps);
    get("r1_gamma", c.r1_gamma);
    get("r1_interval", c.r1_interval);
    get("ada_enabled", c.ada_enabled);
    get("ada_target", c.ada_target);
    get("ada_adjust_interval", c.ada_adjust_interval);
    get("ada_speed", c.ada_speed);
    get("ada_p_init", c.ada_p_init);
    if (j.contains("augment")) c.augment = AugmentConfig::from_json(j.at("augment"));
    get("ema_enabled", c.ema_enabled);
    get("ema_halflife_kimg", c.ema_halflife_kimg);
    get("ema_rampup", c.ema_rampup);
    get("style_mixing_prob", c.style_mixing_prob);
    get("pl_weight", c.pl_weight);
    get("pl_interval", c.pl_interval);
    get("pl_decay", c.pl_decay);
    get("total_images", c.total_images);
    get("snapshot_interval", c.snapshot_interval);
    get("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

double lr_schedule(int step, const TrainConfig& cfg) {
  if (step < 0) throw InvalidArgument("lr_schedule: step must be >= 0");
  if (cfg.lr_decay.kind == LrDecay::Kind::kConstant) return cfg.lr_initial;
  const double total = cfg.total_steps();
  const double start = cfg.lr_decay.start_fraction * total;
  if (step <= start) return cfg.lr_initial;
  if (step >= total) return cfg.lr_decay.lr_final;
  const double phase = (step - start) / (total - start);
  const double c = 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
  return cfg.lr_decay.lr_final + (cfg.lr_initial - cfg.lr_decay.lr_final) * c;
}

AdaState ada_update(const AdaState& state, const torch::Tensor& real_scores, const TrainConfig& cfg) {
  AdaState next = state;
  next.rt_estimate = real_scores.detach().sign().to(torch::kFloat64).mean().item<double>();
  const double delta = static_cast<double>(cfg.ada_adjust_interval) * cfg.batch_size / cfg.ada_speed;
  if (next.rt_estimate > cfg.ada_target) {
    next.p = std::min(1.0, state.p + delta);
  } else if (next.rt_estimate < cfg.ada_target) {
    next.p = std::max(0.0, state.p - delta);
  }
  return next;
}

nlohmann::json StepMetrics::to_json() const {
  nlohmann::json j = {{"step", step}, {"images", images}, {"g_loss", g_loss}, {"d_loss", d_loss},
                      {"rt", rt},     {"ada_p", ada_p},   {"lr", lr}};
  j["r1"] = r1 ? nlohmann::json(*r1) : nlohmann::json(nullptr);
  j["pl"] = pl ? nlohmann::json(*pl) : nlohmann::json(nullptr);
  return j;
}

Trainer::Trainer(const ArchConfig& arch, const NoiseGateConfig& gates, const TrainConfig& cfg)
    : arch_(arch),
      gates_(gates),
      cfg_(cfg),
      torch_rng_(at::make_generator<at::CPUGeneratorImpl>(derive_seed(cfg.seed, kStreamTorch))) {
  cfg_.validate();
  arch_.validate();
  if (!gates_.covers(arch_)) throw ConfigError("gate configuration does not cover every resolution");
  const std::uint64_t init = derive_seed(cfg.seed, kStreamInit);
  g_ = std::make_shared<Generator>(arch_, gates_, init);
  g_ema_ = std::make_shared<Generator>(arch_, gates_, init);
  Rng d_rng(derive_seed(init, 0x44));
  d_ = Discriminator(arch_, d_rng);
  for (auto& p : g_ema_->parameters()) p.set_requires_grad(false);
  opt_g_ = make_adam(g_->parameters(), cfg_);
  opt_d_ = make_adam(d_->parameters(), cfg_);
  ada_.p = cfg_.ada_enabled ? cfg_.ada_p_init : 0.0;
}

torch::Tensor Trainer::make_ws(int batch) {
  const int layers = arch_.num_layers();
  auto z = torch::randn({batch, arch_.latent_dim}, torch_rng_, torch::kFloat32);
  auto w = g_->mapping()->forward(z);
  auto ws = w.unsqueeze(1).repeat({1, layers, 1});
  if (cfg_.style_mixing_prob > 0.0 &&
      torch::rand({1}, torch_rng_, torch::kFloat64).item<double>() < cfg_.style_mixing_prob) {
    auto z2 = torch::randn({batch, arch_.latent_dim}, torch_rng_, torch::kFloat32);
    auto w2 = g_->mapping()->forward(z2);
    const auto cutoff = torch::randint(1, layers, {1}, torch_rng_, torch::kInt64).item<std::int64_t>();
    auto mask = (torch::arange(layers) < cutoff).to(torch::kFloat32).view({1, layers, 1});
    ws = ws * mask + w2.unsqueeze(1) * (1.0f - mask);
  }
  return ws;
}

std::vector<torch::Tensor> Trainer::make_noise(int batch) {
  std::vector<torch::Tensor> noise;
  for (const auto& site : arch_.noise_sites()) {
    if (gates_.enabled(site.resolution)) {
      noise.push_back(torch::randn({batch, 1, site.resolution, site.resolution}, torch_rng_, torch::kFloat32));
    } else {
      noise.emplace_back();
    }
  }
  return noise;
}

torch::Tensor Trainer::run_generator(int batch, torch::Tensor* ws_out) {
  auto ws = make_ws(batch);
  auto img = g_->synthesis()->forward(ws, make_noise(batch), gates_);
  if (ws_out) *ws_out = ws;
  return img;
}

torch::Tensor Trainer::augment(const torch::Tensor& x, std::uint64_t stream) const {
  if (ada_.p == 0.0) return x;
  const std::uint64_t seed =
      derive_seed(derive_seed(cfg_.seed, kStreamAugment), static_cast<std::uint64_t>(step_) * 8 + stream);
  return apply_augmentations(x, ada_.p, cfg_.augment, seed);
}

void Trainer::update_ema() {
  torch::NoGradGuard no_grad;
  auto dst = g_ema_->parameters();
  auto src = g_->parameters();
  if (!cfg_.ema_enabled) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i].copy_(src[i]);
    return;
  }
  double ema_nimg = cfg_.ema_halflife_kimg * 1000.0;
  if (cfg_.ema_rampup > 0.0) ema_nimg = std::min(ema_nimg, static_cast<double>(images_) * cfg_.ema_rampup);
  const double beta = std::pow(0.5, cfg_.batch_size / std::max(ema_nimg, 1e-8));
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i].copy_(src[i].lerp(dst[i], beta));
}

StepMetrics Trainer::step(const torch::Tensor& real_batch) {
  const auto res = arch_.resolution;
  if (real_batch.dim() != 4 || real_batch.size(1) != 3 || real_batch.size(2) != res || real_batch.size(3) != res) {
    throw InvalidArgument("real batch must be [B, 3, " + std::to_string(res) + ", " + std::to_string(res) + "]");
  }
  const int batch = static_cast<int>(real_batch.size(0));
  StepMetrics m;
  m.step = step_;
  m.lr = lr_schedule(step_, cfg_);
  set_lr(*opt_g_, m.lr);
  set_lr(*opt_d_, m.lr);

  try {
    // Generator update.
    d_->zero_grad();
    opt_g_->zero_grad();
    auto fake = run_generator(batch);
    auto gl = g_loss(d_->forward(augment(fake, 0)));
    m.g_loss = finite_or_throw(gl, "generator loss");
    gl.backward();
    if (cfg_.pl_weight > 0.0 && step_ % cfg_.pl_interval == 0) {
      torch::Tensor ws;
      auto img = run_generator(batch, &ws);
      auto pl_noise = torch::randn(img.sizes(), torch_rng_, torch::kFloat32) / static_cast<double>(res);
      auto grad = torch::autograd::grad({(img * pl_noise).sum()}, {ws}, {}, true, true)[0];
      auto lengths = grad.square().sum(2).mean(1).sqrt();
      const double mean_len = lengths.mean().item<double>();
      pl_mean_ = pl_mean_ + (mean_len - pl_mean_) * cfg_.pl_decay;
      auto pl = (lengths - pl_mean_).square().mean();
      m.pl = finite_or_throw(pl, "path-length penalty");
      (pl * (cfg_.pl_weight * cfg_.pl_interval)).backward();
    }
    opt_g_->step();

    // Discriminator update.
    opt_d_->zero_grad();
    torch::Tensor fake_d;
    {
      torch::NoGradGuard no_grad;
      fake_d = run_generator(batch);
    }
    auto real_aug = augment(real_batch, 1);
    auto real_scores = d_->forward(real_aug);
    auto fake_scores = d_->forward(augment(fake_d, 2));
    auto dl = d_loss(real_scores, fake_scores);
    m.d_loss = finite_or_throw(dl, "discriminator loss");
    auto total = dl;
    if (cfg_.r1_gamma > 0.0 && step_ % cfg_.r1_interval == 0) {
      auto d = d_;
      auto r1 = r1_penalty([d](const torch::Tensor& x) mutable { return d->forward(x); }, real_aug,
                           cfg_.r1_gamma * cfg_.r1_interval);
      m.r1 = finite_or_throw(r1, "R1 penalty") / cfg_.r1_interval;
      total = total + r1;
    }
    total.backward();
    opt_d_->step();

    if (cfg_.ada_enabled) {
      rt_window_.push_back(real_scores.detach());
      if ((step_ + 1) % cfg_.ada_adjust_interval == 0) {
        ada_ = ada_update(ada_, torch::cat(rt_window_), cfg_);
        rt_window_.clear();
      }
    }
  } catch (const NumericFailure& e) {
    write_diagnostics(e.what());
    throw;
  }

  images_ += batch;
  ++step_;
  update_ema();
  m.images = images_;
  m.rt = ada_.rt_estimate;
  m.ada_p = ada_.p;
  return m;
}

void Trainer::write_diagnostics(const std::string& what) {
  if (!diagnostics_dir_) return;
  try {
    std::filesystem::create_directories(*diagnostics_dir_);
    CheckpointInfo info;
    info.extra = {{"failure", what}, {"step", step_}, {"images", images_}, {"ada_p", ada_.p}};
    save_checkpoint(*diagnostics_dir_ / ("failure-step-" + std::to_string(step_) + ".ngar"), *g_, &d_, info);
  } catch (const std::exception&) {
    // The original failure is the one worth reporting.
  }
}

void Trainer::save_snapshot(const std::filesystem::path& path, int w_mean_samples) {
  Generator& out = *g_ema_;
  out.estimate_w_mean(w_mean_samples);
  CheckpointInfo info;
  double ema_nimg = cfg_.ema_halflife_kimg * 1000.0;
  if (cfg_.ema_rampup > 0.0) ema_nimg = std::min(ema_nimg, static_cast<double>(images_) * cfg_.ema_rampup);
  info.ema_decay = cfg_.ema_enabled ? static_cast<float>(std::pow(0.5, cfg_.batch_size / std::max(ema_nimg, 1e-8)))
                                    : 0.0f;
  info.extra = {{"step", step_}, {"images", images_}, {"ada_p", ada_.p}, {"train_config", cfg_.to_json()}};
  save_checkpoint(path, out, &d_, info);
}

BatchSampler::BatchSampler(torch::Tensor images, int batch_size, std::uint64_t seed)
    : images_(std::move(images)), batch_size_(batch_size), seed_(seed) {
  if (images_.dim() != 4 || images_.size(0) < 1) throw InvalidArgument("dataset must be a non-empty [N, 3, R, R]");
  if (batch_size_ < 1) throw InvalidArgument("batch size must be positive");
}

torch::Tensor BatchSampler::next() {
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(batch_size_));
  while (static_cast<int>(idx.size()) < batch_size_) {
    if (cursor_ >= order_.size()) {
      order_ = shuffled_indices(static_cast<std::size_t>(images_.size(0)), derive_seed(seed_, epoch_++));
      cursor_ = 0;
    }
    idx.push_back(static_cast<std::int64_t>(order_[cursor_++]));
  }
  return images_.index_select(0, torch::tensor(idx, torch::kInt64));
}

TrainResult train_loop(const ArchConfig& arch, const NoiseGateConfig& gates, const TrainConfig& cfg,
                       const torch::Tensor& dataset, const std::filesystem::path& out_dir,
                       const SnapshotHook& on_snapshot) {
  if (dataset.dim() != 4 || dataset.size(2) != arch.resolution || dataset.size(3) != arch.resolution) {
    throw InvalidArgument("dataset resolution does not match the architecture");
  }
  std::filesystem::create_directories(out_dir);
  Trainer trainer(arch, gates, cfg);
  trainer.set_diagnostics_dir(out_dir);
  BatchSampler sampler(dataset, cfg.batch_size, derive_seed(cfg.seed, kStreamSampler));

  std::ofstream log(out_dir / "metrics.jsonl", std::ios::trunc);
  if (!log) throw Error("cannot open metrics log in " + out_dir.string());

  TrainResult result;
  if (on_snapshot) on_snapshot(trainer, 0);
  const int total = cfg.total_steps();
  for (int s = 0; s < total; ++s) {
    auto m = trainer.step(sampler.next());
    log << m.to_json().dump() << '\n';
    result.metrics.push_back(m);
    const int done = s + 1;
    if (cfg.snapshot_interval > 0 && done % cfg.snapshot_interval == 0 && done != total) {
      trainer.save_snapshot(out_dir / ("snapshot-" + std::to_string(done) + ".ngar"));
      if (on_snapshot) on_snapshot(trainer, done);
    }
  }
  log.flush();
  result.final_checkpoint = out_dir / "final.ngar";
  trainer.save_snapshot(result.final_checkpoint);
  if (on_snapshot) on_snapshot(trainer, total);
  return result;
}

}  // namespace noisegate::training
