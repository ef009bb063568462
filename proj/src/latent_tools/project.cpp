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

#include "noisegate/latent_tools/project.hpp"

#include <cmath>
#include <numbers>

#include "noisegate/error.hpp"
#include "noisegate/eval/features.hpp"
#include "noisegate/model.hpp"

namespace noisegate::latent_tools {

void ProjectOptions::validate() const {
  if (steps < 0) throw InvalidArgument("projection steps must be >= 0");
  if (!(lr > 0.0)) throw InvalidArgument("projection lr must be positive");
  if (!(lr_rampup >= 0.0 && lr_rampup <= 1.0) || !(lr_rampdown >= 0.0 && lr_rampdown <= 1.0)) {
    throw InvalidArgument("lr ramp fractions must lie in [0, 1]");
  }
  if (!(perceptual_weight >= 0.0) || !(pixel_weight >= 0.0) || perceptual_weight + pixel_weight == 0.0) {
    throw InvalidArgument("loss weights must be >= 0 and not both zero");
  }
  if (!(noise_lr_mul >= 0.0)) throw InvalidArgument("noise_lr_mul must be >= 0");
  if (divergence_patience < 1 || !(divergence_factor > 1.0)) throw InvalidArgument("invalid divergence guard");
}

nlohmann::json ProjectOptions::to_json() const {
  return {{"steps", steps},
          {"lr", lr},
          {"lr_rampup", lr_rampup},
          {"lr_rampdown", lr_rampdown},
          {"perceptual_weight", perceptual_weight},
          {"pixel_weight", pixel_weight},
          {"optimize_noise", optimize_noise},
          {"noise_lr_mul", noise_lr_mul},
          {"normalize_noise", normalize_noise},
          {"noise_seed", noise_seed},
          {"divergence_patience", divergence_patience},
          {"divergence_factor", divergence_factor}};
}

ProjectOptions ProjectOptions::from_json(const nlohmann::json& j) {
  ProjectOptions o;
  try {
    o.steps = j.value("steps", o.steps);
    o.lr = j.value("lr", o.lr);
    o.lr_rampup = j.value("lr_rampup", o.lr_rampup);
    o.lr_rampdown = j.value("lr_rampdown", o.lr_rampdown);
    o.perceptual_weight = j.value("perceptual_weight", o.perceptual_weight);
    o.pixel_weight = j.value("pixel_weight", o.pixel_weight);
    o.optimize_noise = j.value("optimize_noise", o.optimize_noise);
    o.noise_lr_mul = j.value("noise_lr_mul", o.noise_lr_mul);
    o.normalize_noise = j.value("normalize_noise", o.normalize_noise);
    o.noise_seed = j.value("noise_seed", o.noise_seed);
    o.divergence_patience = j.value("divergence_patience", o.divergence_patience);
    o.divergence_factor = j.value("divergence_factor", o.divergence_factor);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("projection options: ") + e.what());
  }
  o.validate();
  return o;
}

namespace {

double lr_at(int step, const ProjectOptions& o) {
  const double t = o.steps > 0 ? static_cast<double>(step) / o.steps : 0.0;
  double ramp = 1.0;
  if (o.lr_rampdown > 0.0) ramp = std::min(1.0, (1.0 - t) / o.lr_rampdown);
  ramp = 0.5 - 0.5 * std::cos(ramp * std::numbers::pi);
  if (o.lr_rampup > 0.0) ramp *= std::min(1.0, t / o.lr_rampup);
  return o.lr * ramp;
}

const eval::RandomConvExtractor& perceptual_net() {
  static const eval::RandomConvExtractor net;
  return net;
}

}  // namespace

ProjectionResult project(const ImageTensor& target, const Generator& g, const ProjectOptions& opts,
                         const ProjectProgress& progress) {
  opts.validate();
  const auto& arch = g.arch();
  if (target.height != arch.resolution || target.width != arch.resolution) {
    throw InvalidArgument("target is " + std::to_string(target.height) + "x" + std::to_string(target.width) +
                          ", generator outputs " + std::to_string(arch.resolution) + "x" +
                          std::to_string(arch.resolution));
  }

  auto synthesis = g.synthesis();
  const auto& gates = g.gates();
  const auto sites = arch.noise_sites();

  auto ws = to_tensor(broadcast(g.w_mean(), g.num_layers())).requires_grad_(true);
  NoiseBuffers noise = sample_noise(opts.noise_seed, arch);
  std::vector<torch::Tensor> noise_t = noise_tensors(noise, arch, gates);
  std::vector<torch::Tensor> vars = {ws};
  std::vector<std::size_t> free_sites;
  if (opts.optimize_noise) {
    for (std::size_t i = 0; i < sites.size(); ++i) {
      if (!noise_t[i].defined()) continue;
      noise_t[i].requires_grad_(true);
      vars.push_back(noise_t[i]);
      free_sites.push_back(i);
    }
  }
  const auto target_t = to_tensor(target);
  const auto adam_opts = torch::optim::AdamOptions(opts.lr).betas({0.9, 0.999}).eps(1e-8);
  std::vector<torch::optim::OptimizerParamGroup> groups;
  groups.emplace_back(std::vector<torch::Tensor>{ws}, std::make_unique<torch::optim::AdamOptions>(adam_opts));
  if (vars.size() > 1) {
    groups.emplace_back(std::vector<torch::Tensor>(vars.begin() + 1, vars.end()),
                        std::make_unique<torch::optim::AdamOptions>(adam_opts));
  }
  torch::optim::Adam adam(std::move(groups), adam_opts);
  auto normalize = [&] {
    if (!opts.normalize_noise) return;
    torch::NoGradGuard ng;
    for (std::size_t k = 1; k < vars.size(); ++k) {
      auto& v = vars[k];
      v.sub_(v.mean());
      v.div_(v.square().mean().sqrt().clamp_min(1e-8));
    }
  };

  auto snapshot = [&] {
    std::vector<torch::Tensor> out;
    for (const auto& v : vars) out.push_back(v.detach().clone());
    return out;
  };

  ProjectionResult result;
  std::vector<torch::Tensor> best = snapshot();
  double initial = 0.0;
  int above = 0;
  result.best_loss = std::numeric_limits<double>::infinity();
  for (int step = 0;; ++step) {
    auto img = synthesis->forward(ws, noise_t, gates);
    torch::Tensor loss = torch::zeros({}, torch::kFloat32);
    if (opts.perceptual_weight > 0.0) {
      loss = loss + opts.perceptual_weight * eval::perceptual_distance(perceptual_net(), img, target_t).mean();
    }
    if (opts.pixel_weight > 0.0) loss = loss + opts.pixel_weight * (img - target_t).square().mean();
    const double value = loss.item<double>();
    if (!std::isfinite(value)) throw NumericFailure("projection loss became non-finite at step " + std::to_string(step));
    result.loss_trace.emplace_back(step, value);
    if (step == 0) initial = value;
    if (value < result.best_loss) {
      result.best_loss = value;
      result.best_step = step;
      best = snapshot();
    }
    if (value > opts.divergence_factor * initial) {
      if (++above >= opts.divergence_patience) {
        throw NumericFailure("projection diverged: loss stayed above " + std::to_string(opts.divergence_factor) +
                             "x the initial value for " + std::to_string(above) + " steps");
      }
    } else {
      above = 0;
    }
    if (progress && !progress(step, value)) break;
    if (step >= opts.steps) break;

    // Generator parameters receive no gradients.
    auto grads = torch::autograd::grad({loss}, vars);
    for (std::size_t i = 0; i < vars.size(); ++i) vars[i].mutable_grad() = grads[i];
    auto& param_groups = adam.param_groups();
    for (std::size_t k = 0; k < param_groups.size(); ++k) {
      const double mul = k == 0 ? 1.0 : opts.noise_lr_mul;
      static_cast<torch::optim::AdamOptions&>(param_groups[k].options()).lr(lr_at(step, opts) * mul);
    }
    adam.step();
    normalize();
  }

  result.w_plus = LatentWPlus::unflatten(
      std::vector<float>(best[0].data_ptr<float>(), best[0].data_ptr<float>() + best[0].numel()), g.num_layers(),
      arch.latent_dim);
  for (std::size_t k = 0; k < free_sites.size(); ++k) {
    const auto& t = best[k + 1];
    auto& dst = noise.buffers[free_sites[k]].values;
    std::copy(t.data_ptr<float>(), t.data_ptr<float>() + t.numel(), dst.begin());
  }
  result.noise = noise;
  result.final_image = g.synthesize(result.w_plus, result.noise);
  return result;
}

std::vector<double> smooth_trace(const std::vector<std::pair<int, double>>& trace, int window) {
  if (window < 1) throw InvalidArgument("smoothing window must be positive");
  std::vector<double> out;
  if (trace.size() < static_cast<std::size_t>(window)) return out;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) sum += trace[i].second;
  out.push_back(sum / window);
  for (std::size_t i = window; i < trace.size(); ++i) {
    sum += trace[i].second - trace[i - window].second;
    out.push_back(sum / window);
  }
  return out;
}

std::vector<std::vector<ImageTensor>> mix_grid(const Generator& g, const std::vector<LatentWPlus>& coarse,
                                               const std::vector<LatentWPlus>& fine, int cutoff,
                                               const NoiseBuffers& noise) {
  for (const auto* set : {&coarse, &fine}) {
    for (const auto& w : *set) {
      if (static_cast<int>(w.size()) != g.num_layers()) {
        throw InvalidArgument("mix_grid: every latent needs " + std::to_string(g.num_layers()) + " layers");
      }
    }
  }
  std::vector<std::vector<ImageTensor>> grid;
  for (const auto& c : coarse) {
    std::vector<ImageTensor> row;
    for (const auto& f : fine) row.push_back(g.synthesize(style_mix(c, f, {cutoff, 1.0f, 0}), noise));
    grid.push_back(std::move(row));
  }
  return grid;
}

}  // namespace noisegate::latent_tools
