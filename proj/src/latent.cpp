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

#include "noisegate/latent.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <sstream>

#include "noisegate/error.hpp"
#include "noisegate/rng.hpp"

namespace noisegate {
namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

int parse_int(std::string_view s, std::string_view context) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw InvalidArgument("gate spec: '" + std::string(s) + "' is not an integer in '" + std::string(context) + "'");
  }
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  return s;
}

}  // namespace

int ArchConfig::num_layers() const { return 2 * (std::bit_width(static_cast<unsigned>(resolution)) - 1) - 2; }

std::vector<int> ArchConfig::resolutions() const {
  std::vector<int> out;
  for (int r = 4; r <= resolution; r *= 2) out.push_back(r);
  return out;
}

int ArchConfig::channels_at(int res) const { return std::min(channel_base / res, channel_max); }

std::vector<NoiseSite> ArchConfig::noise_sites() const {
  std::vector<NoiseSite> out;
  for (int r : resolutions()) {
    const int convs = r == 4 ? 1 : 2;
    for (int i = 0; i < convs; ++i) out.push_back({static_cast<int>(out.size()), r});
  }
  return out;
}

void ArchConfig::validate() const {
  if (!is_power_of_two(resolution) || resolution < 8) {
    throw InvalidArgument("resolution must be a power of two >= 8, got " + std::to_string(resolution));
  }
  if (latent_dim < 1) throw InvalidArgument("latent_dim must be positive");
  if (mapping_layers < 1) throw InvalidArgument("mapping_layers must be positive");
  if (channel_max < 1 || channel_base < resolution) throw InvalidArgument("channel schedule yields zero channels");
}

nlohmann::json ArchConfig::to_json() const {
  return {{"resolution", resolution},       {"latent_dim", latent_dim},
          {"mapping_layers", mapping_layers}, {"channel_base", channel_base},
          {"channel_max", channel_max},     {"mapping_lr_mul", mapping_lr_mul},
          {"noise_strength_init", noise_strength_init}};
}

ArchConfig ArchConfig::from_json(const nlohmann::json& j) {
  ArchConfig a;
  a.resolution = j.at("resolution").get<int>();
  a.latent_dim = j.at("latent_dim").get<int>();
  a.mapping_layers = j.at("mapping_layers").get<int>();
  a.channel_base = j.at("channel_base").get<int>();
  a.channel_max = j.at("channel_max").get<int>();
  a.mapping_lr_mul = j.value("mapping_lr_mul", a.mapping_lr_mul);
  a.noise_strength_init = j.value("noise_strength_init", a.noise_strength_init);
  a.validate();
  return a;
}

NoiseGateConfig NoiseGateConfig::all_on(const ArchConfig& arch) {
  NoiseGateConfig g;
  for (int r : arch.resolutions()) g.enabled_[r] = true;
  return g;
}

NoiseGateConfig NoiseGateConfig::all_off(const ArchConfig& arch) {
  NoiseGateConfig g;
  for (int r : arch.resolutions()) g.enabled_[r] = false;
  return g;
}

NoiseGateConfig NoiseGateConfig::fine_only(const ArchConfig& arch) {
  NoiseGateConfig g;
  for (int r : arch.resolutions()) g.enabled_[r] = r >= 64;
  return g;
}

NoiseGateConfig NoiseGateConfig::parse(std::string_view spec, const ArchConfig& arch) {
  spec = trim(spec);
  if (spec == "fine-only") return fine_only(arch);
  if (spec == "all-on" || spec.empty()) return all_on(arch);
  if (spec == "all-off") return all_off(arch);

  NoiseGateConfig g = all_on(arch);
  std::size_t start = 0;
  while (start <= spec.size()) {
    const std::size_t end = std::min(spec.find(',', start), spec.size());
    const std::string_view clause = trim(spec.substr(start, end - start));
    start = end + 1;
    const auto colon = clause.find(':');
    if (colon == std::string_view::npos) {
      throw InvalidArgument("gate spec clause '" + std::string(clause) + "' lacks 'on:' or 'off:'");
    }
    const auto mode = clause.substr(0, colon);
    if (mode != "on" && mode != "off") {
      throw InvalidArgument("gate spec clause '" + std::string(clause) + "' must start with on: or off:");
    }
    const bool on = mode == "on";
    const auto range = clause.substr(colon + 1);
    int lo = 0;
    int hi = 0;
    if (range == "all") {
      lo = 4;
      hi = arch.resolution;
    } else if (const auto dash = range.find('-'); dash != std::string_view::npos) {
      lo = parse_int(range.substr(0, dash), clause);
      hi = parse_int(range.substr(dash + 1), clause);
    } else {
      lo = hi = parse_int(range, clause);
    }
    if (lo > hi) throw InvalidArgument("gate spec range '" + std::string(range) + "' is reversed");
    bool matched = false;
    for (auto& [r, en] : g.enabled_) {
      if (r >= lo && r <= hi) {
        en = on;
        matched = true;
      }
    }
    if (!matched) {
      throw InvalidArgument("gate spec range '" + std::string(range) + "' matches no synthesis resolution");
    }
    if (end == spec.size()) break;
  }
  return g;
}

bool NoiseGateConfig::enabled(int resolution) const {
  auto it = enabled_.find(resolution);
  if (it == enabled_.end()) {
    throw InvalidArgument("gate config has no entry for resolution " + std::to_string(resolution));
  }
  return it->second;
}

void NoiseGateConfig::set(int resolution, bool on) { enabled_[resolution] = on; }

bool NoiseGateConfig::covers(const ArchConfig& arch) const {
  const auto res = arch.resolutions();
  if (res.size() != enabled_.size()) return false;
  return std::all_of(res.begin(), res.end(), [&](int r) { return enabled_.count(r) == 1; });
}

std::string NoiseGateConfig::to_string() const {
  std::vector<std::pair<int, int>> runs;
  for (const auto& [r, on] : enabled_) {
    if (on) continue;
    if (!runs.empty() && runs.back().second * 2 == r) {
      runs.back().second = r;
    } else {
      runs.emplace_back(r, r);
    }
  }
  if (runs.empty()) return "all-on";
  if (runs.size() == 1 && runs[0].first == enabled_.begin()->first && runs[0].second == enabled_.rbegin()->first) {
    return "all-off";
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (i) os << ',';
    os << "off:" << runs[i].first;
    if (runs[i].second != runs[i].first) os << '-' << runs[i].second;
  }
  return os.str();
}

nlohmann::json NoiseGateConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [r, on] : enabled_) j[std::to_string(r)] = on;
  return j;
}

NoiseGateConfig NoiseGateConfig::from_json(const nlohmann::json& j) {
  NoiseGateConfig g;
  for (const auto& [k, v] : j.items()) g.enabled_[parse_int(k, "gate_config")] = v.get<bool>();
  return g;
}

std::vector<float> LatentWPlus::flatten() const {
  std::vector<float> out;
  for (const auto& l : layers) out.insert(out.end(), l.values.begin(), l.values.end());
  return out;
}

LatentWPlus LatentWPlus::unflatten(const std::vector<float>& flat, int num_layers, int dim) {
  if (flat.size() != static_cast<std::size_t>(num_layers) * dim) {
    throw InvalidArgument("w_plus payload has " + std::to_string(flat.size()) + " values, expected " +
                          std::to_string(num_layers * dim));
  }
  LatentWPlus w;
  w.layers.resize(num_layers);
  for (int i = 0; i < num_layers; ++i) {
    w.layers[i].values.assign(flat.begin() + static_cast<std::ptrdiff_t>(i) * dim,
                              flat.begin() + static_cast<std::ptrdiff_t>(i + 1) * dim);
  }
  return w;
}

LatentZ sample_latent(std::uint64_t seed, int dim) { return LatentZ{normal_vector(seed, dim)}; }

LatentWPlus broadcast(const LatentW& w, int num_layers) {
  return LatentWPlus{std::vector<LatentW>(static_cast<std::size_t>(num_layers), w)};
}

LatentWPlus truncate(const LatentWPlus& w, float psi, const LatentW& mean, int cutoff_layers) {
  if (!std::isfinite(psi)) throw InvalidArgument("truncation psi must be finite");
  if (cutoff_layers < 0 || cutoff_layers > static_cast<int>(w.size())) {
    throw InvalidArgument("truncation cutoff " + std::to_string(cutoff_layers) + " outside [0, " +
                          std::to_string(w.size()) + "]");
  }
  LatentWPlus out = w;
  for (int i = 0; i < cutoff_layers; ++i) {
    auto& layer = out.layers[i].values;
    if (layer.size() != mean.values.size()) throw InvalidArgument("truncation: w_mean dimension mismatch");
    for (std::size_t k = 0; k < layer.size(); ++k) layer[k] = std::lerp(mean.values[k], layer[k], psi);
  }
  return out;
}

LatentWPlus style_mix(const LatentWPlus& identity, const LatentWPlus& style, const StyleMixSpec& spec) {
  if (identity.size() != style.size()) {
    throw InvalidArgument("style_mix: identity has " + std::to_string(identity.size()) + " layers, style has " +
                          std::to_string(style.size()));
  }
  const int L = static_cast<int>(identity.size());
  if (spec.cutoff < 0 || spec.cutoff > L) {
    throw InvalidArgument("style_mix: cutoff " + std::to_string(spec.cutoff) + " outside [0, " + std::to_string(L) + "]");
  }
  if (!(spec.strength >= 0.0f && spec.strength <= 1.0f)) throw InvalidArgument("style_mix: strength outside [0, 1]");
  LatentWPlus out = identity;
  for (int i = spec.cutoff; i < L; ++i) {
    auto& dst = out.layers[i].values;
    const auto& src = style.layers[i].values;
    if (dst.size() != src.size()) throw InvalidArgument("style_mix: layer dimension mismatch");
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = std::lerp(dst[k], src[k], spec.strength);
  }
  return out;
}

NoiseBuffers sample_noise(std::uint64_t seed, const ArchConfig& arch) {
  NoiseBuffers out;
  out.seed = seed;
  for (const auto& site : arch.noise_sites()) {
    out.buffers.push_back(
        {site.resolution, normal_vector(derive_seed(seed, static_cast<std::uint64_t>(site.index)),
                                        static_cast<std::size_t>(site.resolution) * site.resolution)});
  }
  return out;
}

NoiseBuffers zero_noise(const ArchConfig& arch) {
  NoiseBuffers out;
  for (const auto& site : arch.noise_sites()) {
    out.buffers.push_back({site.resolution, std::vector<float>(static_cast<std::size_t>(site.resolution) * site.resolution, 0.0f)});
  }
  return out;
}

}  // namespace noisegate
