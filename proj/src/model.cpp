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

#include "noisegate/model.hpp"

#include <cmath>
#include <numbers>

#include "noisegate/container.hpp"
#include "noisegate/error.hpp"

namespace noisegate {
namespace F = torch::nn::functional;

namespace {

constexpr float kLreluSlope = 0.2f;
const float kSqrt2 = std::numbers::sqrt2_v<float>;

torch::Tensor randn_tensor(std::vector<std::int64_t> shape, Rng& rng, float scale = 1.0f) {
  auto t = torch::empty(shape, torch::kFloat32);
  auto* p = t.data_ptr<float>();
  for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = rng.normal_f() * scale;
  return t;
}

torch::Tensor lrelu(const torch::Tensor& x) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(kLreluSlope));
}

torch::Tensor upsample2x(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace

EqualLinearImpl::EqualLinearImpl(int in_features, int out_features, Rng& rng, float lr_mul, float bias_init,
                                 bool activate)
    : weight_gain_(lr_mul / std::sqrt(static_cast<float>(in_features))), bias_gain_(lr_mul), activate_(activate) {
  weight = register_parameter("weight", randn_tensor({out_features, in_features}, rng, 1.0f / lr_mul));
  bias = register_parameter("bias", torch::full({out_features}, bias_init / lr_mul));
}

torch::Tensor EqualLinearImpl::forward(torch::Tensor x) {
  auto y = torch::addmm(bias * bias_gain_, x, (weight * weight_gain_).t());
  return activate_ ? lrelu(y) : y;
}

EqualConv2dImpl::EqualConv2dImpl(int in_channels, int out_channels, int kernel, Rng& rng, bool has_bias,
                                 bool activate)
    : weight_gain_(1.0f / std::sqrt(static_cast<float>(in_channels * kernel * kernel))),
      activate_(activate),
      padding_(kernel / 2) {
  weight = register_parameter("weight", randn_tensor({out_channels, in_channels, kernel, kernel}, rng));
  if (has_bias) bias = register_parameter("bias", torch::zeros({out_channels}));
}

torch::Tensor EqualConv2dImpl::forward(torch::Tensor x) {
  auto y = F::conv2d(x, weight * weight_gain_, F::Conv2dFuncOptions().bias(bias).padding(padding_));
  return activate_ ? lrelu(y) * kSqrt2 : y;
}

MappingNetworkImpl::MappingNetworkImpl(const ArchConfig& arch, Rng& rng) {
  for (int i = 0; i < arch.mapping_layers; ++i) {
    layers->push_back(EqualLinear(arch.latent_dim, arch.latent_dim, rng, arch.mapping_lr_mul, 0.0f, true));
  }
  register_module("layers", layers);
}

torch::Tensor MappingNetworkImpl::forward(torch::Tensor z) {
  const double d = static_cast<double>(z.size(1));
  auto x = z * (std::sqrt(d) / z.norm(2, {1}, true).clamp_min(1e-12));
  for (auto& layer : *layers) x = layer->as<EqualLinear>()->forward(x);
  return x;
}

ModulatedConvImpl::ModulatedConvImpl(int in_channels, int out_channels, int kernel, int w_dim, bool demodulate,
                                     bool upsample, Rng& rng)
    : weight_gain_(1.0f / std::sqrt(static_cast<float>(in_channels * kernel * kernel))),
      demodulate_(demodulate),
      upsample_(upsample),
      padding_(kernel / 2) {
  affine = register_module("affine", EqualLinear(w_dim, in_channels, rng, 1.0f, 1.0f, false));
  weight = register_parameter("weight", randn_tensor({out_channels, in_channels, kernel, kernel}, rng));
}

torch::Tensor ModulatedConvImpl::forward(torch::Tensor x, torch::Tensor w) {
  const auto batch = x.size(0);
  auto styles = affine->forward(w);  // [B, in]
  auto wgt = weight * weight_gain_;
  x = x * styles.view({batch, -1, 1, 1});
  if (upsample_) x = upsample2x(x);
  x = F::conv2d(x, wgt, F::Conv2dFuncOptions().padding(padding_));
  if (demodulate_) {
    // Per-sample output scale 1/sqrt(sum_{in,kh,kw} (W * s)^2).
    auto dcoefs = torch::rsqrt(torch::mm(styles.square(), wgt.square().sum({2, 3}).t()) + 1e-8f);  // [B, out]
    x = x * dcoefs.view({batch, -1, 1, 1});
  }
  return x;
}

SynthesisLayerImpl::SynthesisLayerImpl(int in_channels, int out_channels, int w_dim, bool upsample,
                                       float noise_strength_init, Rng& rng) {
  conv = register_module("conv", ModulatedConv(in_channels, out_channels, 3, w_dim, true, upsample, rng));
  noise_strength = register_parameter("noise_strength", randn_tensor({out_channels}, rng, noise_strength_init));
  bias = register_parameter("bias", torch::zeros({out_channels}));
}

torch::Tensor SynthesisLayerImpl::forward(torch::Tensor x, torch::Tensor w, const torch::Tensor& noise) {
  x = conv->forward(x, w);
  if (noise.defined()) x = x + noise * noise_strength.view({1, -1, 1, 1});
  return lrelu(x + bias.view({1, -1, 1, 1})) * kSqrt2;
}

ToRgbImpl::ToRgbImpl(int in_channels, int w_dim, Rng& rng) {
  conv = register_module("conv", ModulatedConv(in_channels, 3, 1, w_dim, false, false, rng));
  bias = register_parameter("bias", torch::zeros({3}));
}

torch::Tensor ToRgbImpl::forward(torch::Tensor x, torch::Tensor w) {
  return conv->forward(x, w) + bias.view({1, -1, 1, 1});
}

SynthesisNetworkImpl::SynthesisNetworkImpl(const ArchConfig& arch, Rng& rng) : arch_(arch), sites_(arch.noise_sites()) {
  arch.validate();
  const int c4 = arch.channels_at(4);
  const_input = register_parameter("const_input", randn_tensor({c4, 4, 4}, rng));
  int in_ch = c4;
  for (int r : arch.resolutions()) {
    const int out_ch = arch.channels_at(r);
    if (r > 4) layers->push_back(SynthesisLayer(in_ch, out_ch, arch.latent_dim, true, arch.noise_strength_init, rng));
    layers->push_back(SynthesisLayer(r > 4 ? out_ch : in_ch, out_ch, arch.latent_dim, false,
                                     arch.noise_strength_init, rng));
    to_rgb->push_back(ToRgb(out_ch, arch.latent_dim, rng));
    in_ch = out_ch;
  }
  register_module("layers", layers);
  register_module("to_rgb", to_rgb);
}

torch::Tensor SynthesisNetworkImpl::forward(torch::Tensor ws, const std::vector<torch::Tensor>& noise,
                                            const NoiseGateConfig& gates) {
  const int L = arch_.num_layers();
  if (ws.dim() != 3 || ws.size(1) != L || ws.size(2) != arch_.latent_dim) {
    throw InvalidArgument("synthesis expects ws of shape [B, " + std::to_string(L) + ", " +
                          std::to_string(arch_.latent_dim) + "]");
  }
  if (noise.size() != sites_.size()) {
    throw InvalidArgument("synthesis expects " + std::to_string(sites_.size()) + " noise tensors, got " +
                          std::to_string(noise.size()));
  }
  if (!gates.covers(arch_)) throw InvalidArgument("gate config does not cover every synthesis resolution");

  const auto batch = ws.size(0);
  auto noise_at = [&](std::size_t site) -> torch::Tensor {
    if (!gates.enabled(sites_[site].resolution)) return {};
    const auto& n = noise[site];
    const int r = sites_[site].resolution;
    if (!n.defined() || n.dim() != 4 || n.size(1) != 1 || n.size(2) != r || n.size(3) != r ||
        (n.size(0) != 1 && n.size(0) != batch)) {
      throw InvalidArgument("noise for site " + std::to_string(site) + " must be [B|1, 1, " + std::to_string(r) +
                            ", " + std::to_string(r) + "]");
    }
    return n;
  };

  auto x = const_input.unsqueeze(0).expand({batch, -1, -1, -1});
  torch::Tensor img;
  std::size_t site = 0;
  const auto n_res = arch_.resolutions().size();
  for (std::size_t b = 0; b < n_res; ++b) {
    const int convs = b == 0 ? 1 : 2;
    for (int c = 0; c < convs; ++c, ++site) {
      x = layers[site]->as<SynthesisLayer>()->forward(x, ws.select(1, static_cast<std::int64_t>(site)), noise_at(site));
    }
    auto rgb = to_rgb[b]->as<ToRgb>()->forward(x, ws.select(1, static_cast<std::int64_t>(site)));
    img = img.defined() ? upsample2x(img) + rgb : rgb;
  }
  return img;
}

DiscriminatorImpl::DiscriminatorImpl(const ArchConfig& arch, Rng& rng) {
  arch.validate();
  from_rgb = register_module("from_rgb", EqualConv2d(3, arch.channels_at(arch.resolution), 1, rng));
  for (int r = arch.resolution; r > 4; r /= 2) {
    const int c = arch.channels_at(r);
    const int c_next = arch.channels_at(r / 2);
    conv0->push_back(EqualConv2d(c, c, 3, rng));
    conv1->push_back(EqualConv2d(c, c_next, 3, rng));
    skip->push_back(EqualConv2d(c, c_next, 1, rng, false, false));
  }
  register_module("conv0", conv0);
  register_module("conv1", conv1);
  register_module("skip", skip);
  const int c4 = arch.channels_at(4);
  epilogue_conv = register_module("epilogue_conv", EqualConv2d(c4 + 1, c4, 3, rng));
  fc = register_module("fc", EqualLinear(c4 * 16, c4, rng, 1.0f, 0.0f, true));
  out = register_module("out", EqualLinear(c4, 1, rng));
}

torch::Tensor DiscriminatorImpl::forward(torch::Tensor img) {
  if (img.dim() != 4 || img.size(1) != 3) throw InvalidArgument("discriminator expects [B, 3, H, W]");
  auto x = from_rgb->forward(img);
  for (std::size_t i = 0; i < conv0->size(); ++i) {
    auto y = conv0[i]->as<EqualConv2d>()->forward(x);
    y = conv1[i]->as<EqualConv2d>()->forward(F::avg_pool2d(y, F::AvgPool2dFuncOptions(2)));
    auto s = skip[i]->as<EqualConv2d>()->forward(F::avg_pool2d(x, F::AvgPool2dFuncOptions(2)));
    x = (y + s) * std::sqrt(0.5f);
  }
  if (x.size(2) != 4 || x.size(3) != 4) throw InvalidArgument("discriminator input resolution mismatch");

  // Minibatch standard deviation over groups of up to 4 samples.
  const auto batch = x.size(0);
  std::int64_t group = std::min<std::int64_t>(4, batch);
  while (batch % group != 0) --group;
  auto y = x.reshape({group, batch / group, x.size(1), 4, 4});
  y = (y - y.mean(0)).square().mean(0);
  y = (y + 1e-8f).sqrt().mean({1, 2, 3});
  y = y.reshape({-1, 1, 1, 1}).repeat({group, 1, 4, 4});
  x = torch::cat({x, y}, 1);

  x = epilogue_conv->forward(x);
  x = fc->forward(x.flatten(1));
  return out->forward(x).squeeze(1);
}

torch::Tensor to_tensor(const LatentWPlus& w) {
  auto flat = w.flatten();
  return torch::from_blob(flat.data(), {1, static_cast<std::int64_t>(w.size()), w.dim()}, torch::kFloat32).clone();
}

torch::Tensor to_tensor(const ImageTensor& img) {
  auto t = torch::from_blob(const_cast<float*>(img.pixels.data()), {img.height, img.width, 3}, torch::kFloat32);
  return t.permute({2, 0, 1}).unsqueeze(0).contiguous();
}

ImageTensor image_from_tensor(torch::Tensor t) {
  if (t.dim() == 4) {
    if (t.size(0) != 1) throw InvalidArgument("image_from_tensor expects a single image");
    t = t.squeeze(0);
  }
  if (t.dim() != 3 || t.size(0) != 3) throw InvalidArgument("image_from_tensor expects [3, H, W]");
  auto hwc = t.detach().clamp(-1.0f, 1.0f).permute({1, 2, 0}).contiguous().to(torch::kFloat32);
  ImageTensor img(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)));
  std::memcpy(img.pixels.data(), hwc.data_ptr<float>(), img.pixels.size() * sizeof(float));
  return img;
}

std::vector<torch::Tensor> noise_tensors(const NoiseBuffers& noise, const ArchConfig& arch,
                                         const NoiseGateConfig& gates) {
  const auto sites = arch.noise_sites();
  if (noise.buffers.size() != sites.size()) {
    throw InvalidArgument("noise has " + std::to_string(noise.buffers.size()) + " buffers, architecture has " +
                          std::to_string(sites.size()) + " sites");
  }
  std::vector<torch::Tensor> out(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const auto& buf = noise.buffers[i];
    const int r = sites[i].resolution;
    if (buf.resolution != r || buf.values.size() != static_cast<std::size_t>(r) * r) {
      throw InvalidArgument("noise buffer " + std::to_string(i) + " does not match site resolution " +
                            std::to_string(r));
    }
    if (!gates.enabled(r)) continue;
    out[i] = torch::from_blob(const_cast<float*>(buf.values.data()), {1, 1, r, r}, torch::kFloat32).clone();
  }
  return out;
}

Generator::Generator(const ArchConfig& arch, const NoiseGateConfig& gates, std::uint64_t init_seed)
    : arch_(arch), gates_(gates), mapping_(nullptr), synthesis_(nullptr) {
  arch_.validate();
  if (!gates_.covers(arch_)) throw InvalidArgument("gate config does not cover every synthesis resolution");
  Rng rng(init_seed);
  mapping_ = MappingNetwork(arch_, rng);
  synthesis_ = SynthesisNetwork(arch_, rng);
  w_mean_.values.assign(static_cast<std::size_t>(arch_.latent_dim), 0.0f);
}

void Generator::estimate_w_mean(int n, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("estimate_w_mean needs at least one sample");
  torch::NoGradGuard no_grad;
  Rng rng(seed);
  const int d = arch_.latent_dim;
  auto acc = torch::zeros({d}, torch::kFloat64);
  auto mapping = mapping_;
  for (int start = 0; start < n; start += 1000) {
    const int count = std::min(1000, n - start);
    auto z = torch::empty({count, d});
    auto* p = z.data_ptr<float>();
    for (std::int64_t i = 0; i < z.numel(); ++i) p[i] = rng.normal_f();
    acc += mapping->forward(z).to(torch::kFloat64).sum(0);
  }
  acc /= static_cast<double>(n);
  auto f = acc.to(torch::kFloat32).contiguous();
  w_mean_.values.assign(f.data_ptr<float>(), f.data_ptr<float>() + d);
}

LatentW Generator::map_latent(const LatentZ& z) const {
  if (static_cast<int>(z.values.size()) != arch_.latent_dim) {
    throw InvalidArgument("latent z has dimension " + std::to_string(z.values.size()) + ", checkpoint expects " +
                          std::to_string(arch_.latent_dim));
  }
  torch::NoGradGuard no_grad;
  auto zt = torch::from_blob(const_cast<float*>(z.values.data()), {1, arch_.latent_dim}, torch::kFloat32);
  auto mapping = mapping_;
  auto w = mapping->forward(zt).contiguous();
  return LatentW{std::vector<float>(w.data_ptr<float>(), w.data_ptr<float>() + arch_.latent_dim)};
}

ImageTensor Generator::synthesize(const LatentWPlus& w_plus, const NoiseBuffers& noise) const {
  return synthesize(w_plus, noise, gates_);
}

ImageTensor Generator::synthesize(const LatentWPlus& w_plus, const NoiseBuffers& noise,
                                  const NoiseGateConfig& gates) const {
  if (static_cast<int>(w_plus.size()) != num_layers() || w_plus.dim() != arch_.latent_dim) {
    throw InvalidArgument("w_plus must have " + std::to_string(num_layers()) + " layers of dimension " +
                          std::to_string(arch_.latent_dim));
  }
  return image_from_tensor(synthesize_batch(to_tensor(w_plus), {&noise}, gates));
}

torch::Tensor Generator::synthesize_batch(torch::Tensor ws, const std::vector<const NoiseBuffers*>& noise,
                                          const NoiseGateConfig& gates) const {
  if (noise.size() != 1 && static_cast<std::int64_t>(noise.size()) != ws.size(0)) {
    throw InvalidArgument("synthesize_batch needs one NoiseBuffers per sample (or one shared)");
  }
  torch::NoGradGuard no_grad;
  const auto sites = arch_.noise_sites();
  std::vector<std::vector<torch::Tensor>> per_sample;
  for (const auto* nb : noise) per_sample.push_back(noise_tensors(*nb, arch_, gates));
  std::vector<torch::Tensor> per_site(sites.size());
  for (std::size_t s = 0; s < sites.size(); ++s) {
    if (!gates.enabled(sites[s].resolution)) continue;
    std::vector<torch::Tensor> parts;
    for (auto& sample : per_sample) parts.push_back(sample[s]);
    per_site[s] = torch::cat(parts, 0);
  }
  auto synthesis = synthesis_;
  auto img = synthesis->forward(ws, per_site, gates);
  if (!torch::isfinite(img).all().item<bool>()) {
    throw NumericFailure("synthesis produced non-finite activations (max |x| = " +
                         std::to_string(img.nan_to_num(0.0, 0.0, 0.0).abs().max().item<float>()) + ")");
  }
  return img.clamp(-1.0f, 1.0f);
}

GenerateResult Generator::generate(std::uint64_t latent_seed, std::uint64_t noise_seed, float psi) const {
  const auto w = map_latent(sample_latent(latent_seed, arch_.latent_dim));
  auto w_plus = truncate(broadcast(w, num_layers()), psi, w_mean_, num_layers());
  auto noise = sample_noise(noise_seed, arch_);
  auto image = synthesize(w_plus, noise);
  return {std::move(image), std::move(w_plus), std::move(noise)};
}

std::vector<std::pair<std::string, torch::Tensor>> Generator::named_parameters() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : mapping_->named_parameters()) out.emplace_back("mapping." + p.key(), p.value());
  for (const auto& p : synthesis_->named_parameters()) out.emplace_back("synthesis." + p.key(), p.value());
  return out;
}

std::vector<torch::Tensor> Generator::parameters() const {
  std::vector<torch::Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void Generator::copy_parameters_from(const Generator& other) {
  if (!(other.arch_ == arch_)) throw InvalidArgument("copy_parameters_from: architecture mismatch");
  torch::NoGradGuard no_grad;
  auto dst = parameters();
  auto src = other.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i].copy_(src[i]);
  w_mean_ = other.w_mean_;
}

float discriminate(const ImageTensor& img, Discriminator& d) { return discriminate(std::vector{img}, d).front(); }

std::vector<float> discriminate(const std::vector<ImageTensor>& batch, Discriminator& d) {
  if (batch.empty()) return {};
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> parts;
  for (const auto& img : batch) parts.push_back(to_tensor(img));
  auto scores = d->forward(torch::cat(parts, 0)).contiguous();
  return {scores.data_ptr<float>(), scores.data_ptr<float>() + scores.numel()};
}

namespace {

void put_tensor(Archive& ar, const std::string& name, const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat32).contiguous();
  ar.put_f32(name, c.sizes().vec(), std::span<const float>(c.data_ptr<float>(), static_cast<std::size_t>(c.numel())));
}

void load_tensor(const Archive& ar, const std::string& name, torch::Tensor& dst) {
  if (!ar.contains(name)) throw InvalidArgument("checkpoint is missing tensor '" + name + "'");
  if (ar.shape(name) != dst.sizes().vec()) {
    throw InvalidArgument("checkpoint tensor '" + name + "' shape disagrees with arch_config");
  }
  auto values = ar.get_f32(name);
  torch::NoGradGuard no_grad;
  dst.copy_(torch::from_blob(values.data(), dst.sizes(), torch::kFloat32));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Generator& g, const Discriminator* d, const CheckpointInfo& info) {
  Archive ar("generator-checkpoint");
  ar.meta() = {{"format_version", CheckpointInfo::kFormatVersion},
               {"arch_config", g.arch().to_json()},
               {"gate_config", g.gates().to_json()},
               {"ema_decay", info.ema_decay},
               {"has_discriminator", d != nullptr && !d->is_empty()},
               {"extra", info.extra}};
  for (const auto& [name, t] : g.named_parameters()) put_tensor(ar, name, t);
  if (d != nullptr && !d->is_empty()) {
    for (const auto& p : (*d)->named_parameters()) put_tensor(ar, "discriminator." + p.key(), p.value());
  }
  ar.put_f32("w_mean", {g.arch().latent_dim}, g.w_mean().values);
  return ar.encode();
}

void save_checkpoint(const std::filesystem::path& path, const Generator& g, const Discriminator* d,
                     const CheckpointInfo& info) {
  write_file_bytes(path, encode_checkpoint(g, d, info));
}

LoadedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  const Archive ar = Archive::decode(bytes);
  if (ar.kind() != "generator-checkpoint") {
    throw InvalidArgument("container holds a '" + ar.kind() + "', not a generator checkpoint");
  }
  const auto& meta = ar.meta();
  LoadedCheckpoint out;
  try {
    if (meta.at("format_version").get<int>() != CheckpointInfo::kFormatVersion) {
      throw InvalidArgument("unsupported checkpoint format_version");
    }
    const auto arch = ArchConfig::from_json(meta.at("arch_config"));
    const auto gates = NoiseGateConfig::from_json(meta.at("gate_config"));
    out.generator = std::make_shared<Generator>(arch, gates, 0);
    out.info.ema_decay = meta.value("ema_decay", 0.0f);
    out.info.extra = meta.value("extra", nlohmann::json::object());
    for (auto& [name, t] : out.generator->named_parameters()) load_tensor(ar, name, t);
    auto w_mean = ar.get_f32("w_mean");
    if (static_cast<int>(w_mean.size()) != arch.latent_dim) throw InvalidArgument("w_mean dimension mismatch");
    out.generator->set_w_mean(LatentW{std::move(w_mean)});
    if (meta.value("has_discriminator", false)) {
      Rng rng(0);
      out.discriminator = Discriminator(arch, rng);
      for (auto& p : out.discriminator->named_parameters()) {
        load_tensor(ar, "discriminator." + p.key(), p.value());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("checkpoint manifest is incomplete: ") + e.what());
  }
  return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace noisegate
