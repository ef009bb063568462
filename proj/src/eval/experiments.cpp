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

#include "noisegate/eval/experiments.hpp"

#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "noisegate/error.hpp"
#include "noisegate/rng.hpp"

namespace noisegate::eval {

std::string to_string(NoiseMode mode) { return mode == NoiseMode::kConstant ? "constant" : "random"; }

NoiseMode parse_noise_mode(const std::string& s) {
  if (s == "constant") return NoiseMode::kConstant;
  if (s == "random") return NoiseMode::kRandomPerLatent;
  throw ConfigError("noise mode must be 'constant' or 'random', got '" + s + "'");
}

torch::Tensor generate_images(const Generator& g, const SampleSpec& spec, int start, int count) {
  if (count < 1) throw InvalidArgument("generate_images: count must be positive");
  const int layers = g.num_layers();
  const int dim = g.arch().latent_dim;
  auto ws = torch::empty({count, layers, dim}, torch::kFloat32);
  std::vector<NoiseBuffers> noise;
  NoiseBuffers constant;
  if (spec.mode == NoiseMode::kConstant) constant = sample_noise(spec.noise_seed, g.arch());
  for (int k = 0; k < count; ++k) {
    const auto i = static_cast<std::uint64_t>(start + k);
    auto w = broadcast(g.map_latent(sample_latent(derive_seed(spec.latent_seed, i), dim)), layers);
    if (spec.psi != 1.0f) w = truncate(w, spec.psi, g.w_mean(), layers);
    ws[k].copy_(to_tensor(w)[0]);
    if (spec.mode == NoiseMode::kRandomPerLatent) noise.push_back(sample_noise(derive_seed(spec.noise_seed, i), g.arch()));
  }
  std::vector<const NoiseBuffers*> ptrs;
  for (int k = 0; k < count; ++k) ptrs.push_back(spec.mode == NoiseMode::kConstant ? &constant : &noise[k]);
  return g.synthesize_batch(ws, ptrs, g.gates());
}

FeatureStats generated_stats(const Generator& g, const FeatureExtractor& extractor, const SampleSpec& spec) {
  if (spec.n < 2) throw InvalidArgument("at least two samples are needed for feature statistics");
  if (spec.batch < 1) throw InvalidArgument("batch must be positive");
  StatsAccumulator acc;
  for (int start = 0; start < spec.n; start += spec.batch) {
    const int count = std::min(spec.batch, spec.n - start);
    acc.add(extract_features(generate_images(g, spec, start, count), extractor, count));
  }
  return acc.finalize(extractor.id());
}

FeatureStats image_stats(const torch::Tensor& images, const FeatureExtractor& extractor, int batch) {
  return fit_stats(extract_features(images, extractor, batch), extractor.id());
}

double noise_sensitivity(const Generator& g, const FeatureExtractor& extractor, int n, std::uint64_t seed_a,
                         std::uint64_t seed_b, std::uint64_t latent_seed, int batch) {
  if (n < 2) throw InvalidArgument("noise_sensitivity needs at least two latents");
  SampleSpec a{n, latent_seed, NoiseMode::kConstant, seed_a, 1.0f, batch};
  SampleSpec b{n, latent_seed, NoiseMode::kRandomPerLatent, seed_b, 1.0f, batch};
  return frechet_distance(generated_stats(g, extractor, a), generated_stats(g, extractor, b));
}

void AblationSpec::validate() const {
  if (rows.empty()) throw ConfigError("ablation spec has no rows");
  if (batch < 1) throw ConfigError("ablation batch must be positive");
  std::set<std::string> labels;
  for (const auto& r : rows) {
    if (!labels.insert(r.label).second) throw ConfigError("duplicate ablation label '" + r.label + "'");
    if (r.n_samples < 2) throw ConfigError("ablation row '" + r.label + "' needs n_samples >= 2");
    if (r.checkpoint.empty()) throw ConfigError("ablation row '" + r.label + "' has no checkpoint");
  }
}

nlohmann::json AblationSpec::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) {
    rs.push_back({{"label", r.label},
                  {"checkpoint", r.checkpoint},
                  {"gates", r.gates},
                  {"noise_mode", to_string(r.mode)},
                  {"n_samples", r.n_samples}});
  }
  return {{"extractor", extractor}, {"reference", reference}, {"latent_seed", latent_seed},
          {"noise_seed", noise_seed}, {"batch", batch}, {"rows", rs}};
}

AblationSpec AblationSpec::from_json(const nlohmann::json& j) {
  AblationSpec s;
  try {
    s.extractor = j.value("extractor", s.extractor);
    s.reference = j.value("reference", s.reference);
    s.latent_seed = j.value("latent_seed", s.latent_seed);
    s.noise_seed = j.value("noise_seed", s.noise_seed);
    s.batch = j.value("batch", s.batch);
    for (const auto& r : j.at("rows")) {
      AblationRow row;
      row.label = r.at("label").get<std::string>();
      row.checkpoint = r.at("checkpoint").get<std::string>();
      row.gates = r.value("gates", std::string{});
      row.mode = parse_noise_mode(r.value("noise_mode", std::string("random")));
      row.n_samples = r.value("n_samples", row.n_samples);
      s.rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("ablation spec: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json AblationTable::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) {
    rs.push_back({{"label", r.label},
                  {"gates", r.gates},
                  {"noise_mode", to_string(r.mode)},
                  {"n_samples", r.n_samples},
                  {"fid", r.fid}});
  }
  return {{"extractor", extractor}, {"reference_n", reference_n}, {"rows", rs}};
}

std::string AblationTable::to_text() const {
  const std::vector<std::string> head = {"Configuration", "Gates", "Inference noise", "n", "FID"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    std::ostringstream fid;
    fid << std::fixed << std::setprecision(4) << r.fid;
    cells.push_back({r.label, r.gates, to_string(r.mode), std::to_string(r.n_samples), fid.str()});
  }
  std::vector<std::size_t> width(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    width[c] = head[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const bool numeric = c >= 3;
      if (c > 0) out << "  ";
      out << (numeric ? std::right : std::left) << std::setw(static_cast<int>(width[c])) << row[c];
    }
    out << '\n';
  };
  emit(head);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& row : cells) emit(row);
  out << "extractor: " << extractor << ", reference n = " << reference_n << '\n';
  return out.str();
}

AblationTable run_ablation(const AblationSpec& spec, const FeatureStats& reference, const ModelResolver& resolve) {
  spec.validate();
  if (!reference.extractor.empty() && reference.extractor != spec.extractor) {
    throw ConfigError("reference statistics were computed with '" + reference.extractor + "', spec uses '" +
                      spec.extractor + "'");
  }
  const auto extractor = make_extractor(spec.extractor);

  std::map<std::string, std::shared_ptr<const Generator>> cache;
  auto model_for = [&](const std::string& path) {
    auto it = cache.find(path);
    if (it != cache.end()) return it->second;
    std::shared_ptr<const Generator> g;
    if (resolve) {
      g = resolve(path);
    } else {
      if (!std::filesystem::exists(path)) throw ConfigError("checkpoint '" + path + "' does not exist");
      g = load_checkpoint(path).generator;
    }
    if (!g) throw ConfigError("checkpoint '" + path + "' could not be resolved");
    cache.emplace(path, g);
    return g;
  };

  AblationTable table;
  table.extractor = spec.extractor;
  table.reference_n = reference.n;
  for (const auto& row : spec.rows) {
    const auto g = model_for(row.checkpoint);
    if (!row.gates.empty()) {
      const auto expected = NoiseGateConfig::parse(row.gates, g->arch());
      if (!(expected == g->gates())) {
        throw ConfigError("row '" + row.label + "' expects gates " + expected.to_string() + " but checkpoint '" +
                          row.checkpoint + "' was trained with " + g->gates().to_string());
      }
    }
    SampleSpec s{row.n_samples, spec.latent_seed, row.mode, spec.noise_seed, 1.0f, spec.batch};
    const auto stats = generated_stats(*g, *extractor, s);
    table.rows.push_back({row.label, g->gates().to_string(), row.mode, row.n_samples,
                          frechet_distance(stats, reference)});
  }
  return table;
}

}  // namespace noisegate::eval
