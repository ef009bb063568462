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

#include "noisegate/service/session.hpp"

#include <cmath>

#include "noisegate/container.hpp"
#include "noisegate/error.hpp"
#include "noisegate/hash.hpp"
#include "noisegate/model.hpp"

namespace noisegate::service {

namespace {

// Manifest start; semantic archive problems are reported against it.
constexpr std::uint64_t kManifestOffset = 16;

bool read_int(const nlohmann::json& j, const char* key, const std::string& path, std::int64_t& out,
              std::vector<FieldError>& errors) {
  if (!j.contains(key)) return false;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) {
    errors.push_back({path + key, "must be an integer"});
    return false;
  }
  out = v.get<std::int64_t>();
  return true;
}

bool read_number(const nlohmann::json& j, const char* key, const std::string& path, double& out,
                 std::vector<FieldError>& errors) {
  if (!j.contains(key)) return false;
  const auto& v = j.at(key);
  if (!v.is_number() || !std::isfinite(v.get<double>())) {
    errors.push_back({path + key, "must be a finite number"});
    return false;
  }
  out = v.get<double>();
  return true;
}

void check_range(double v, double lo, double hi, const std::string& field, std::vector<FieldError>& errors) {
  if (!(v >= lo && v <= hi)) {
    errors.push_back({field, "must be within [" + nlohmann::json(lo).dump() + ", " + nlohmann::json(hi).dump() +
                                 "], got " + nlohmann::json(v).dump()});
  }
}

LatentWPlus seeded_w_plus(const Generator& g, std::int64_t seed) {
  const auto z = sample_latent(static_cast<std::uint64_t>(seed), g.arch().latent_dim);
  return broadcast(g.map_latent(z), g.num_layers());
}

}  // namespace

nlohmann::json SessionRanges::to_json(int num_layers, int pca_k, int max_edits) const {
  return {{"truncation", {kTruncationMin, kTruncationMax}},
          {"style_mix.cutoff", {0, num_layers - 1}},
          {"style_mix.strength", {kStrengthMin, kStrengthMax}},
          {"pca_edits.direction", {0, std::min(kDirectionMax, pca_k - 1)}},
          {"pca_edits.weight", {kWeightMin, kWeightMax}},
          {"pca_edits.max_count", max_edits},
          {"seed", {0, std::numeric_limits<std::int64_t>::max()}}};
}

nlohmann::json EditSession::to_json() const {
  nlohmann::json j = {{"model_id", model_id},
                      {"latent_seed", latent_seed},
                      {"noise_seed", noise_seed},
                      {"truncation", truncation}};
  if (style_mix) {
    j["style_mix"] = {{"seed", style_mix->seed}, {"cutoff", style_mix->cutoff}, {"strength", style_mix->strength}};
  }
  auto edits = nlohmann::json::array();
  for (const auto& e : pca_edits) {
    edits.push_back({{"direction", e.direction}, {"weight", e.weight}, {"layer_lo", e.layer_lo}, {"layer_hi", e.layer_hi}});
  }
  j["pca_edits"] = edits;
  if (explicit_w_plus) {
    auto rows = nlohmann::json::array();
    for (const auto& l : explicit_w_plus->layers) rows.push_back(l.values);
    j["w_plus"] = rows;
  }
  if (archive_id) j["archive_id"] = *archive_id;
  return j;
}

std::string EditSession::hash() const { return sha256_hex(to_json().dump()); }

std::optional<EditSession> parse_session(const nlohmann::json& j, std::vector<FieldError>& errors) {
  const auto before = errors.size();
  if (!j.is_object()) {
    errors.push_back({"", "session must be a JSON object"});
    return std::nullopt;
  }
  EditSession s;
  if (!j.contains("model_id") || !j.at("model_id").is_string() || j.at("model_id").get<std::string>().empty()) {
    errors.push_back({"model_id", "required non-empty string"});
  } else {
    s.model_id = j.at("model_id").get<std::string>();
  }
  if (read_int(j, "latent_seed", "", s.latent_seed, errors) && s.latent_seed < 0) {
    errors.push_back({"latent_seed", "must be >= 0"});
  }
  if (read_int(j, "noise_seed", "", s.noise_seed, errors) && s.noise_seed < 0) {
    errors.push_back({"noise_seed", "must be >= 0"});
  }
  if (read_number(j, "truncation", "", s.truncation, errors)) {
    check_range(s.truncation, SessionRanges::kTruncationMin, SessionRanges::kTruncationMax, "truncation", errors);
  }
  if (j.contains("style_mix") && !j.at("style_mix").is_null()) {
    const auto& m = j.at("style_mix");
    if (!m.is_object()) {
      errors.push_back({"style_mix", "must be an object"});
    } else {
      StyleMixRequest r;
      if (read_int(m, "seed", "style_mix.", r.seed, errors) && r.seed < 0) {
        errors.push_back({"style_mix.seed", "must be >= 0"});
      }
      std::int64_t cutoff = 0;
      if (read_int(m, "cutoff", "style_mix.", cutoff, errors)) {
        if (cutoff < 0 || cutoff > std::numeric_limits<int>::max()) {
          errors.push_back({"style_mix.cutoff", "must be >= 0"});
        } else {
          r.cutoff = static_cast<int>(cutoff);
        }
      }
      if (read_number(m, "strength", "style_mix.", r.strength, errors)) {
        check_range(r.strength, SessionRanges::kStrengthMin, SessionRanges::kStrengthMax, "style_mix.strength", errors);
      }
      s.style_mix = r;
    }
  }
  if (j.contains("pca_edits") && !j.at("pca_edits").is_null()) {
    const auto& edits = j.at("pca_edits");
    if (!edits.is_array()) {
      errors.push_back({"pca_edits", "must be an array"});
    } else {
      for (std::size_t i = 0; i < edits.size(); ++i) {
        const std::string path = "pca_edits[" + std::to_string(i) + "].";
        const auto& e = edits[i];
        if (!e.is_object()) {
          errors.push_back({path.substr(0, path.size() - 1), "must be an object"});
          continue;
        }
        latent_tools::PcaEdit edit;
        std::int64_t v = 0;
        if (!e.contains("direction")) errors.push_back({path + "direction", "required"});
        if (read_int(e, "direction", path, v, errors)) {
          if (v < 0 || v > SessionRanges::kDirectionMax) {
            errors.push_back({path + "direction", "must be within [0, " + std::to_string(SessionRanges::kDirectionMax) +
                                                      "], got " + std::to_string(v)});
          } else {
            edit.direction = static_cast<int>(v);
          }
        }
        if (read_number(e, "weight", path, edit.weight, errors)) {
          check_range(edit.weight, SessionRanges::kWeightMin, SessionRanges::kWeightMax, path + "weight", errors);
        }
        if (read_int(e, "layer_lo", path, v, errors)) edit.layer_lo = static_cast<int>(std::clamp<std::int64_t>(v, -1, 1 << 20));
        if (read_int(e, "layer_hi", path, v, errors)) edit.layer_hi = static_cast<int>(std::clamp<std::int64_t>(v, -2, 1 << 20));
        s.pca_edits.push_back(edit);
      }
    }
  }
  if (j.contains("w_plus") && !j.at("w_plus").is_null()) {
    const auto& rows = j.at("w_plus");
    LatentWPlus w;
    bool ok = rows.is_array() && !rows.empty();
    for (std::size_t i = 0; ok && i < rows.size(); ++i) {
      ok = rows[i].is_array() && !rows[i].empty() && rows[i].size() == rows[0].size();
      LatentW layer;
      for (const auto& x : ok ? rows[i] : nlohmann::json::array()) {
        if (!x.is_number() || !std::isfinite(x.get<double>())) {
          ok = false;
          break;
        }
        layer.values.push_back(x.get<float>());
      }
      w.layers.push_back(std::move(layer));
    }
    if (ok) {
      s.explicit_w_plus = std::move(w);
    } else {
      errors.push_back({"w_plus", "must be a non-empty L x D array of finite numbers"});
    }
  }
  if (j.contains("archive_id") && !j.at("archive_id").is_null()) {
    if (!j.at("archive_id").is_string()) {
      errors.push_back({"archive_id", "must be a string"});
    } else {
      s.archive_id = j.at("archive_id").get<std::string>();
    }
  }
  if (s.explicit_w_plus && s.archive_id) errors.push_back({"w_plus", "cannot be combined with archive_id"});
  if (errors.size() != before) return std::nullopt;
  return s;
}

void validate_session(const EditSession& s, const SessionLimits& limits, std::vector<FieldError>& errors) {
  const int l = limits.num_layers;
  if (s.style_mix && (s.style_mix->cutoff < 0 || s.style_mix->cutoff > l - 1)) {
    errors.push_back({"style_mix.cutoff", "must be within [0, " + std::to_string(l - 1) + "], got " +
                                              std::to_string(s.style_mix->cutoff)});
  }
  if (static_cast<int>(s.pca_edits.size()) > limits.max_edits) {
    errors.push_back({"pca_edits", "at most " + std::to_string(limits.max_edits) + " edits are allowed"});
  }
  for (std::size_t i = 0; i < s.pca_edits.size(); ++i) {
    const auto& e = s.pca_edits[i];
    const std::string path = "pca_edits[" + std::to_string(i) + "].";
    if (e.direction >= limits.pca_k) {
      errors.push_back({path + "direction", "model has " + std::to_string(limits.pca_k) + " directions, got " +
                                                std::to_string(e.direction)});
    }
    if (e.layer_lo < 0 || e.layer_lo >= l) {
      errors.push_back({path + "layer_lo", "must be within [0, " + std::to_string(l - 1) + "]"});
    }
    if (e.layer_hi != -1 && (e.layer_hi <= e.layer_lo || e.layer_hi > l)) {
      errors.push_back({path + "layer_hi", "must be -1 or within (layer_lo, " + std::to_string(l) + "]"});
    }
  }
  if (s.explicit_w_plus &&
      (static_cast<int>(s.explicit_w_plus->size()) != l || s.explicit_w_plus->dim() != limits.latent_dim)) {
    errors.push_back({"w_plus", "must be " + std::to_string(l) + " x " + std::to_string(limits.latent_dim)});
  }
}

RenderResult render_session(const Generator& g, const latent_tools::PcaBasis* basis, const EditSession& s,
                            const NoiseBuffers* noise_override) {
  const int l = g.num_layers();
  const auto psi = static_cast<float>(s.truncation);
  LatentWPlus w = s.explicit_w_plus ? *s.explicit_w_plus : seeded_w_plus(g, s.latent_seed);
  w = truncate(w, psi, g.w_mean(), l);
  if (s.style_mix) {
    const auto style = truncate(seeded_w_plus(g, s.style_mix->seed), psi, g.w_mean(), l);
    w = style_mix(w, style,
                  StyleMixSpec{s.style_mix->cutoff, static_cast<float>(s.style_mix->strength),
                               static_cast<std::uint64_t>(s.style_mix->seed)});
  }
  if (!s.pca_edits.empty()) {
    if (!basis) throw InvalidArgument("render_session: PCA edits need a basis");
    w = latent_tools::apply_pca_edits(w, *basis, s.pca_edits);
  }
  NoiseBuffers noise = noise_override ? *noise_override : sample_noise(static_cast<std::uint64_t>(s.noise_seed), g.arch());
  auto image = g.synthesize(w, noise);
  return {std::move(image), std::move(w), std::move(noise)};
}

std::vector<std::uint8_t> LatentArchive::encode() const {
  Archive ar("latent-archive");
  const auto l = static_cast<std::int64_t>(w_plus.size());
  const auto d = static_cast<std::int64_t>(w_plus.dim());
  const auto flat = w_plus.flatten();
  ar.put_f32("w_plus", {l, d}, flat);
  auto stored = nlohmann::json::array();
  for (const auto& site : arch.noise_sites()) {
    if (!gates.enabled(site.resolution)) continue;
    const auto& buf = noise.buffers.at(static_cast<std::size_t>(site.index));
    ar.put_f32("noise." + std::to_string(site.index), {site.resolution, site.resolution}, buf.values);
    stored.push_back(site.index);
  }
  ar.meta() = {{"format_version", kFormatVersion},
               {"model_id", model_id},
               {"arch_config", arch.to_json()},
               {"gate_config", gates.to_json()},
               {"num_layers", l},
               {"latent_dim", d},
               {"noise_seed", noise.seed},
               {"noise_sites", stored},
               {"provenance", provenance}};
  return ar.encode();
}

LatentArchive LatentArchive::decode(std::span<const std::uint8_t> bytes) {
  const auto ar = Archive::decode(bytes);
  auto fail = [](const std::string& msg) { return FormatError("latent archive: " + msg, kManifestOffset); };
  if (ar.kind() != "latent-archive") throw fail("container kind is '" + ar.kind() + "'");
  const auto& m = ar.meta();
  LatentArchive a;
  try {
    if (m.at("format_version").get<int>() != kFormatVersion) throw fail("unsupported format_version");
    a.model_id = m.at("model_id").get<std::string>();
    a.arch = ArchConfig::from_json(m.at("arch_config"));
    a.arch.validate();
    a.gates = NoiseGateConfig::from_json(m.at("gate_config"));
    a.provenance = m.value("provenance", nlohmann::json::object());
    const int l = m.at("num_layers").get<int>();
    const int d = m.at("latent_dim").get<int>();
    if (!ar.contains("w_plus") || ar.shape("w_plus") != std::vector<std::int64_t>{l, d}) {
      throw fail("w_plus tensor missing or not " + std::to_string(l) + " x " + std::to_string(d));
    }
    a.w_plus = LatentWPlus::unflatten(ar.get_f32("w_plus"), l, d);
    a.noise = zero_noise(a.arch);
    a.noise.seed = m.at("noise_seed").get<std::uint64_t>();
    for (const auto& idx : m.at("noise_sites")) {
      const auto k = idx.get<std::size_t>();
      if (k >= a.noise.buffers.size()) throw fail("noise site " + std::to_string(k) + " out of range");
      const std::string name = "noise." + std::to_string(k);
      const std::int64_t r = a.noise.buffers[k].resolution;
      if (!ar.contains(name) || ar.shape(name) != std::vector<std::int64_t>{r, r}) {
        throw fail("tensor " + name + " missing or not " + std::to_string(r) + " x " + std::to_string(r));
      }
      a.noise.buffers[k].values = ar.get_f32(name);
    }
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw fail(e.what());
  }
  return a;
}

std::string compatibility_problem(const LatentArchive& a, const ArchConfig& arch, const NoiseGateConfig& gates) {
  if (static_cast<int>(a.w_plus.size()) != arch.num_layers() || a.w_plus.dim() != arch.latent_dim) {
    return "archive latent is " + std::to_string(a.w_plus.size()) + " x " + std::to_string(a.w_plus.dim()) +
           ", model expects " + std::to_string(arch.num_layers()) + " x " + std::to_string(arch.latent_dim);
  }
  if (a.arch.resolution != arch.resolution) {
    return "archive resolution " + std::to_string(a.arch.resolution) + " differs from model resolution " +
           std::to_string(arch.resolution);
  }
  if (!(a.gates == gates)) {
    return "archive gate config '" + a.gates.to_string() + "' differs from model gate config '" + gates.to_string() + "'";
  }
  return {};
}

}  // namespace noisegate::service
