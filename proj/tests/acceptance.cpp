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

// Acceptance run: one PASS/FAIL line per criterion. Trains two 64x64 toy
// generators from scratch (about 25 minutes on one CPU core).

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <future>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "noisegate/container.hpp"
#include "noisegate/data/fetch.hpp"
#include "noisegate/data/manifest.hpp"
#include "noisegate/data/pipeline.hpp"
#include "noisegate/error.hpp"
#include "noisegate/eval/experiments.hpp"
#include "noisegate/eval/features.hpp"
#include "noisegate/eval/fid.hpp"
#include "noisegate/hash.hpp"
#include "noisegate/latent_tools/pca.hpp"
#include "noisegate/latent_tools/project.hpp"
#include "noisegate/model.hpp"
#include "noisegate/rng.hpp"
#include "noisegate/service/server.hpp"
#include "noisegate/training/losses.hpp"
#include "noisegate/training/trainer.hpp"

#include <httplib.h>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace noisegate;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;
json g_summary = json::array();

void report(const std::string& name, const Outcome& o, double seconds) {
  if (!o.pass) ++g_failures;
  std::cout << (o.pass ? "PASS  " : "FAIL  ") << std::left << std::setw(34) << name << o.detail << "  ["
            << std::fixed << std::setprecision(1) << seconds << " s]" << std::endl;
  g_summary.push_back({{"criterion", name}, {"pass", o.pass}, {"detail", o.detail}, {"seconds", seconds}});
}

template <typename F>
void run(const std::string& name, F f) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = f();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  report(name, o, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

ArchConfig toy_arch() {
  ArchConfig a;
  a.resolution = 64;
  a.latent_dim = 64;
  a.mapping_layers = 2;
  a.channel_base = 1024;
  a.channel_max = 64;
  return a;
}

// 100 procedural 64x64 images: per-channel oriented gratings, 8-bit quantized.
torch::Tensor toy_dataset(int n = 100, int res = 64) {
  auto out = torch::empty({n, 3, res, res});
  auto acc = out.accessor<float, 4>();
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(0x70795345ull, static_cast<std::uint64_t>(i)));
    for (int c = 0; c < 3; ++c) {
      const double fx = rng.uniform() * 3.0, fy = rng.uniform() * 3.0, ph = rng.uniform() * 6.283185307179586;
      const double amp = 0.5 + 0.4 * rng.uniform();
      for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
          const double v = amp * std::sin(6.283185307179586 * (fx * x + fy * y) / res + ph);
          acc[i][c][y][x] = from_u8(to_u8(static_cast<float>(v)));
        }
    }
  }
  return out;
}

// ---- criteria that need no trained model ------------------------------------

Outcome frechet_oracle() {
  const int n = 10000;
  auto sample = [&](std::uint64_t seed, const std::vector<double>& mu, const std::vector<double>& sd) {
    Rng rng(seed);
    Eigen::MatrixXd x(n, static_cast<Eigen::Index>(mu.size()));
    for (int i = 0; i < n; ++i)
      for (std::size_t j = 0; j < mu.size(); ++j) x(i, static_cast<Eigen::Index>(j)) = mu[j] + sd[j] * rng.normal();
    return eval::fit_stats(x);
  };
  // Closed form for diagonal Gaussians: sum (mu_a - mu_b)^2 + (sd_a - sd_b)^2.
  auto closed = [](const std::vector<double>& ma, const std::vector<double>& sa, const std::vector<double>& mb,
                   const std::vector<double>& sb) {
    double d = 0;
    for (std::size_t j = 0; j < ma.size(); ++j) d += (ma[j] - mb[j]) * (ma[j] - mb[j]) + (sa[j] - sb[j]) * (sa[j] - sb[j]);
    return d;
  };
  const std::vector<double> m1a{0.5}, s1a{1.5}, m1b{-1.0}, s1b{0.7};
  std::vector<double> m8a, s8a, m8b, s8b;
  for (int j = 0; j < 8; ++j) {
    m8a.push_back(0.3 * j);
    s8a.push_back(0.5 + 0.2 * j);
    m8b.push_back(0.3 * j - 0.4 + 0.1 * j);
    s8b.push_back(1.2 - 0.05 * j);
  }
  const double e1 = closed(m1a, s1a, m1b, s1b);
  const double g1 = eval::frechet_distance(sample(1, m1a, s1a), sample(2, m1b, s1b));
  const double e8 = closed(m8a, s8a, m8b, s8b);
  const double g8 = eval::frechet_distance(sample(3, m8a, s8a), sample(4, m8b, s8b));
  const double r1 = std::abs(g1 - e1) / e1, r8 = std::abs(g8 - e8) / e8;
  return {r1 < 0.05 && r8 < 0.05, "1-D " + fmt(g1) + " vs " + fmt(e1) + " (rel " + fmt(r1, 2) + "), 8-D " + fmt(g8) +
                                      " vs " + fmt(e8) + " (rel " + fmt(r8, 2) + "); tol 5%"};
}

Outcome r1_correctness() {
  torch::manual_seed(5);
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  const double gamma = 10.0;
  // Linear D(x) = <w, x> + b: penalty = gamma / 2 * ||w||^2 for every sample.
  auto w = torch::randn({1, 3, 8, 8}, opts);
  auto real = torch::randn({4, 3, 8, 8}, opts);
  auto linear = [&](const torch::Tensor& x) { return (x * w).sum({1, 2, 3}) + 0.25; };
  const double expected = gamma / 2.0 * w.pow(2).sum().item<double>();
  const double got = training::r1_penalty(linear, real, gamma, false).item<double>();
  const double lin_err = std::abs(got - expected);

  // Tiny conv discriminator; oracle gradient by central differences.
  auto k1 = torch::randn({4, 3, 3, 3}, opts) * 0.5;
  auto k2 = torch::randn({1, 4 * 4 * 4}, opts) * 0.3;
  auto tiny = [&](const torch::Tensor& x) {
    auto h = torch::leaky_relu(torch::conv2d(x, k1, {}, 2, 1), 0.2);
    return torch::matmul(h.flatten(1), k2.t()).squeeze(1);
  };
  auto batch = torch::randn({3, 3, 8, 8}, opts);
  const double auto_r1 = training::r1_penalty(tiny, batch, gamma, false).item<double>();
  const double h = 1e-6;
  double sq = 0.0;
  auto flat = batch.clone();
  auto acc = flat.accessor<double, 4>();
  for (int b = 0; b < 3; ++b)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          const double orig = acc[b][c][y][x];
          acc[b][c][y][x] = orig + h;
          const double up = tiny(flat)[b].item<double>();
          acc[b][c][y][x] = orig - h;
          const double down = tiny(flat)[b].item<double>();
          acc[b][c][y][x] = orig;
          const double g = (up - down) / (2 * h);
          sq += g * g;
        }
  const double fd_r1 = gamma / 2.0 * sq / 3.0;
  const double fd_rel = std::abs(auto_r1 - fd_r1) / std::abs(fd_r1);
  return {lin_err <= 1e-6 && fd_rel <= 1e-3, "linear |err| " + fmt(lin_err, 3) + " (tol 1e-6), finite-difference rel " +
                                                  fmt(fd_rel, 3) + " (tol 1e-3)"};
}

void write_fixture_mirror(const fs::path& dir, int n) {
  json data = json::array();
  for (int i = 0; i < n; ++i) {
    const int id = 500 + i;
    Rng rng(static_cast<std::uint64_t>(id));
    ImageTensor img(96, 80);
    for (auto& p : img.pixels) p = from_u8(to_u8(static_cast<float>(rng.uniform() * 2 - 1)));
    save_png(dir / "images" / (std::to_string(id) + ".png"), img);
    data.push_back({{"id", id}, {"frameType", i % 3 ? "effect" : "spell"},
                    {"card_images", {{{"image_url", "images/" + std::to_string(id) + ".png"}}}}});
  }
  const auto text = json{{"data", data}}.dump();
  write_file_bytes(dir / "cardinfo.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Outcome data_determinism(const fs::path& work) {
  const auto mirror = work / "data_mirror";
  fs::remove_all(mirror);
  write_fixture_mirror(mirror, 10);
  auto pipeline = [&](const fs::path& root) {
    fs::remove_all(root);
    data::FetchOptions o;
    o.api_base = mirror.string();
    o.out_dir = root;
    o.resolution = 32;
    o.default_crop = {8, 8, 64, 64};
    auto m = data::fetch_catalog(o);
    m = data::apply_prune_list(m, "503 overlay\n");
    m = data::process_entries(m, root, {32, "bicubic"});
    m.save(root / "manifest.json");
    data::pack_dataset(m, root, root / "packed.ngar");
    return read_file_bytes(root / "packed.ngar");
  };
  const auto a = pipeline(work / "data_run_a");
  const auto b = pipeline(work / "data_run_b");
  const auto packed = data::PackedDataset::decode(a);

  Eigen::MatrixXd e(4, 1);
  e << 0, 0, 0, 10;
  const auto rep = data::instance_selection_scores(e, {"a", "b", "c", "d"}, 0.75, "scalar");
  const bool same = a == b;
  const bool outlier = rep.drop == std::vector<std::string>{"d"};
  return {same && outlier && packed.size() == 9,
          std::string("packed rerun ") + (same ? "byte-identical" : "DIFFERS") + " (" + std::to_string(a.size()) +
              " bytes, " + std::to_string(packed.size()) + " images), 1-D outlier " + (outlier ? "dropped" : "NOT dropped")};
}

// ---- criteria on trained toy models --------------------------------------------

Outcome gate_zero(const Generator& g) {
  const auto arch = g.arch();
  const int l = g.num_layers();
  int identical = 0;
  for (int i = 0; i < 100; ++i) {
    const auto seed = derive_seed(0x47415445ull, static_cast<std::uint64_t>(i));
    Rng rng(seed);
    LatentWPlus w;
    for (int k = 0; k < l; ++k) {
      auto layer = g.map_latent(sample_latent(derive_seed(seed, static_cast<std::uint64_t>(k)), arch.latent_dim));
      for (auto& v : layer.values) v += static_cast<float>(0.3 * rng.normal());
      w.layers.push_back(std::move(layer));
    }
    auto a = sample_noise(derive_seed(seed, 1000), arch);
    auto b = a;
    for (const auto& site : arch.noise_sites()) {
      if (g.gates().enabled(site.resolution)) continue;
      b.buffers[site.index].values =
          normal_vector(derive_seed(seed, 2000 + static_cast<std::uint64_t>(site.index)), site.resolution * site.resolution);
    }
    identical += g.synthesize(w, a) == g.synthesize(w, b);
  }
  return {identical == 100, std::to_string(identical) + "/100 cases bit-identical (gates " + g.gates().to_string() + ")"};
}

Outcome noise_sensitivity_direction(const Generator& gated, const Generator& all_on, const eval::FeatureExtractor& ex) {
  const int n = 2000;
  const double f_gated = eval::noise_sensitivity(gated, ex, n, 101, 202, 7);
  const double f_all = eval::noise_sensitivity(all_on, ex, n, 101, 202, 7);
  Generator off(gated.arch(), NoiseGateConfig::all_off(gated.arch()), 0);
  off.copy_parameters_from(gated);
  off.set_w_mean(gated.w_mean());
  const double f_off = eval::noise_sensitivity(off, ex, n, 101, 202, 7);
  const bool ok = f_gated < 0.2 * f_all && f_off == 0.0;
  return {ok, "FID gated " + fmt(f_gated) + " vs all-noise " + fmt(f_all) + " (ratio " + fmt(f_gated / f_all, 3) +
                  ", need < 0.2); all-off " + fmt(f_off) + " (need exactly 0); n=2000"};
}

Outcome const_vs_random(const Generator& gated, const eval::FeatureExtractor& ex, const eval::FeatureStats& ref) {
  eval::SampleSpec spec;
  spec.n = 2000;
  spec.latent_seed = 11;
  spec.noise_seed = 5;
  spec.mode = eval::NoiseMode::kConstant;
  const double f_const = eval::frechet_distance(eval::generated_stats(gated, ex, spec), ref);
  spec.mode = eval::NoiseMode::kRandomPerLatent;
  const double f_rand = eval::frechet_distance(eval::generated_stats(gated, ex, spec), ref);
  const double rel = std::abs(f_const - f_rand) / f_const;
  return {rel < 0.1, "FID const " + fmt(f_const) + " vs random " + fmt(f_rand) + " (|diff|/const " + fmt(rel, 3) +
                         ", need < 0.1); n=2000"};
}

Outcome self_inversion(const Generator& g) {
  double worst = 0.0;
  int ok = 0, monotone = 0;
  for (int i = 0; i < 10; ++i) {
    const auto target = g.generate(900 + static_cast<std::uint64_t>(i), 77, 1.0f).image;
    latent_tools::ProjectOptions opts;
    opts.noise_seed = 1234;
    const auto r = latent_tools::project(target, g, opts);
    const double mse = pixel_mse(r.final_image, target);
    worst = std::max(worst, mse);
    ok += mse < 0.01;
    const auto s = latent_tools::smooth_trace(r.loss_trace, 50);
    monotone += std::adjacent_find(s.begin(), s.end(), [](double a, double b) { return b > a; }) == s.end();
  }
  return {ok == 10 && monotone == 10, std::to_string(ok) + "/10 with MSE < 0.01 (worst " + fmt(worst, 3) + "), " +
                                          std::to_string(monotone) + "/10 smoothed traces non-increasing (window 50)"};
}

Outcome pca_suite(const Generator& g) {
  const auto basis = latent_tools::compute_pca_basis(g, 10000, 3);
  const Eigen::MatrixXd gram = basis.components * basis.components.transpose();
  const double ortho = (gram - Eigen::MatrixXd::Identity(basis.k(), basis.k())).cwiseAbs().maxCoeff();
  bool ordered = basis.variances(basis.k() - 1) >= 0.0;
  for (int i = 1; i < basis.k(); ++i) ordered = ordered && basis.variances(i) <= basis.variances(i - 1);

  auto diff = [](const LatentWPlus& a, const LatentWPlus& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t k = 0; k < a.layers[i].values.size(); ++k)
        m = std::max(m, static_cast<double>(std::abs(a.layers[i].values[k] - b.layers[i].values[k])));
    return m;
  };
  double worst = 0.0;
  using latent_tools::apply_pca_edits;
  for (int t = 0; t < 20; ++t) {
    const auto w = g.generate(static_cast<std::uint64_t>(t), 0, 1.0f).w_plus;
    const int d1 = t % 10, d2 = (t * 7 + 3) % 10;
    const double a = 0.25 + 0.1 * t, b = -0.75 + 0.05 * t;
    worst = std::max(worst, diff(apply_pca_edits(w, basis, {{d1, a + b}}),
                                 apply_pca_edits(apply_pca_edits(w, basis, {{d1, a}}), basis, {{d1, b}})));
    worst = std::max(worst, diff(apply_pca_edits(apply_pca_edits(w, basis, {{d1, a}}), basis, {{d2, b}}),
                                 apply_pca_edits(apply_pca_edits(w, basis, {{d2, b}}), basis, {{d1, a}})));
    worst = std::max(worst, diff(apply_pca_edits(apply_pca_edits(w, basis, {{d1, a}}), basis, {{d1, -a}}), w));
  }

  // Axis-aligned Gaussian with known per-axis spread.
  const std::vector<double> sd = {1.0, 0.5, 3.0, 2.0};
  const std::vector<int> expected_axis = {2, 3, 0, 1};
  Rng rng(17);
  Eigen::MatrixXd x(10000, 4);
  for (int i = 0; i < 10000; ++i)
    for (int j = 0; j < 4; ++j) x(i, j) = sd[j] * rng.normal();
  const auto axes = latent_tools::fit_pca(x);
  double min_dot = 1.0;
  for (int k = 0; k < 4; ++k) min_dot = std::min(min_dot, axes.components(k, expected_axis[k]));

  const bool ok = ortho <= 1e-5 && ordered && worst <= 1e-6 && min_dot >= 0.999;
  return {ok, "orthonormality " + fmt(ortho, 2) + " (tol 1e-5), variances " + (ordered ? "ordered" : "NOT ordered") +
                  ", edit identities max " + fmt(worst, 2) + " (tol 1e-6), axis recovery min cos " + fmt(min_dot, 6) +
                  " (need >= 0.999)"};
}

Outcome latent_identities(const Generator& g) {
  const int l = g.num_layers();
  int failures = 0;
  for (int t = 0; t < 10; ++t) {
    const auto w = broadcast(g.map_latent(sample_latent(static_cast<std::uint64_t>(t), g.arch().latent_dim)), l);
    const auto style = g.generate(100 + static_cast<std::uint64_t>(t), 0, 1.0f).w_plus;
    const auto noise = sample_noise(static_cast<std::uint64_t>(t), g.arch());
    failures += !(truncate(w, 1.0f, g.w_mean(), l) == w);
    failures += !(g.synthesize(truncate(w, 1.0f, g.w_mean(), l), noise) == g.synthesize(w, noise));
    failures += !(truncate(w, 0.0f, g.w_mean(), l) == broadcast(g.w_mean(), l));
    failures += !(style_mix(w, style, {t % l, 0.0f, 0}) == w);
    failures += !(style_mix(w, style, {l, 1.0f, 0}) == w);
    failures += !(g.synthesize(style_mix(w, style, {l, 0.7f, 0}), noise) == g.synthesize(w, noise));
  }
  return {failures == 0, std::to_string(60 - failures) + "/60 exact identities hold (psi=1, psi=0, strength=0, cutoff=L)"};
}

Outcome service_reproducibility(const fs::path& work, const fs::path& checkpoint) {
  const auto models = work / "service_models";
  fs::remove_all(models);
  fs::create_directories(models);
  fs::copy_file(checkpoint, models / "toy.ngar");
  service::ServiceConfig cfg;
  cfg.model_dir = models;
  cfg.port = 0;
  cfg.workers = 8;
  cfg.pca_samples = 2000;
  cfg.archive_dir = work / "service_archives";
  const json session = {{"model_id", "toy"},
                        {"latent_seed", 3},
                        {"noise_seed", 4},
                        {"truncation", 0.7},
                        {"style_mix", {{"seed", 9}, {"cutoff", 4}, {"strength", 0.5}}},
                        {"pca_edits", {{{"direction", 0}, {"weight", 2.0}}, {{"direction", 3}, {"weight", -1.5}}}}};
  auto post = [](int port, const std::string& path, const std::string& body, const char* type) {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(300, 0);
    return c.Post(path, body, type);
  };

  std::string reference, archive_id, archive_bytes;
  int concurrent_same = 0;
  {
    service::Service svc(cfg);
    const int port = svc.start();
    svc.wait_until_loaded();
    auto first = post(port, "/v1/generate?format=png", session.dump(), "application/json");
    if (!first || first->status != 200) return {false, "initial generate failed"};
    reference = first->body;
    archive_id = first->get_header_value("X-Archive-Id");
    std::vector<std::future<std::string>> futures;
    for (int i = 0; i < 100; ++i) {
      futures.push_back(std::async(std::launch::async, [&] {
        auto r = post(port, "/v1/generate?format=png", session.dump(), "application/json");
        return r && r->status == 200 ? r->body : std::string();
      }));
    }
    for (auto& f : futures) concurrent_same += f.get() == reference;
    httplib::Client c("127.0.0.1", port);
    auto dl = c.Get("/v1/latent/" + archive_id);
    if (dl && dl->status == 200) archive_bytes = dl->body;
  }

  service::ServiceConfig fresh = cfg;
  fresh.archive_dir = work / "service_archives_fresh";
  service::Service svc(fresh);
  const int port = svc.start();
  svc.wait_until_loaded();
  auto again = post(port, "/v1/generate?format=png", session.dump(), "application/json");
  const bool restart_same = again && again->body == reference;

  auto up = post(port, "/v1/latent?model_id=toy", archive_bytes, "application/octet-stream");
  bool round_trip = false;
  if (up && up->status == 201) {
    const auto id = json::parse(up->body).at("archive_id").get<std::string>();
    auto render = post(port, "/v1/generate?format=png", json{{"model_id", "toy"}, {"archive_id", id}}.dump(),
                       "application/json");
    round_trip = id == archive_id && render && render->body == reference;
  }

  const std::vector<std::pair<std::string, json>> bad = {
      {"truncation", {{"truncation", 2.5}}},
      {"style_mix.cutoff", {{"style_mix", {{"seed", 1}, {"cutoff", 14}, {"strength", 0.5}}}}},
      {"style_mix.strength", {{"style_mix", {{"seed", 1}, {"cutoff", 2}, {"strength", 1.5}}}}},
      {"pca_edits[0].direction", {{"pca_edits", {{{"direction", 512}, {"weight", 1.0}}}}}},
      {"pca_edits[0].weight", {{"pca_edits", {{{"direction", 1}, {"weight", 40.5}}}}}},
      {"latent_seed", {{"latent_seed", -1}}},
      {"noise_seed", {{"noise_seed", -1}}},
  };
  int rejected = 0;
  for (const auto& [field, patch] : bad) {
    json s = {{"model_id", "toy"}, {"latent_seed", 1}, {"noise_seed", 1}};
    s.update(patch);
    auto r = post(port, "/v1/generate", s.dump(), "application/json");
    if (r && r->status == 400) {
      const auto body = json::parse(r->body);
      rejected += body.at("fields").size() == 1 && body.at("fields")[0].at("field") == field;
    }
  }
  const bool ok = concurrent_same == 100 && restart_same && round_trip && rejected == static_cast<int>(bad.size());
  return {ok, std::to_string(concurrent_same) + "/100 concurrent identical, restart " +
                  (restart_same ? "identical" : "DIFFERS") + ", archive round trip " +
                  (round_trip ? "identical" : "DIFFERS") + ", " + std::to_string(rejected) + "/" +
                  std::to_string(bad.size()) + " range violations -> 400"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance run"};
  fs::path work = fs::temp_directory_path() / "noisegate_acceptance";
  int steps = 2000;
  std::string summary_path;
  app.add_option("--work-dir", work, "scratch directory (recreated)");
  app.add_option("--summary", summary_path, "write a JSON summary here");
  app.add_option("--steps", steps, "training steps per toy network");
  CLI11_PARSE(app, argc, argv);
  fs::remove_all(work);
  fs::create_directories(work);
  torch::set_num_threads(1);

  run("frechet-oracle", frechet_oracle);
  run("r1-correctness", r1_correctness);
  run("data-pipeline-determinism", [&] { return data_determinism(work); });

  const auto arch = toy_arch();
  const auto dataset = toy_dataset();
  const auto ex = eval::make_extractor("random-conv");
  const auto ref = eval::image_stats(dataset, *ex);

  training::TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.total_images = static_cast<std::int64_t>(steps) * cfg.batch_size;
  cfg.snapshot_interval = 0;
  cfg.seed = 0;

  eval::SampleSpec smoke_spec;
  smoke_spec.n = 1000;
  smoke_spec.latent_seed = 3;
  double fid_start = -1.0;
  const auto t_train = std::chrono::steady_clock::now();
  const auto gated_run = training::train_loop(arch, NoiseGateConfig::parse("off:4-32", arch), cfg, dataset,
                                              work / "gated", [&](const training::Trainer& t, int step) {
                                                if (step == 0) fid_start = eval::frechet_distance(
                                                                   eval::generated_stats(t.ema(), *ex, smoke_spec), ref);
                                              });
  const double train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_train).count();
  const auto gated = load_checkpoint(gated_run.final_checkpoint).generator;
  run("training-smoke", [&]() -> Outcome {
    const double fid_end = eval::frechet_distance(eval::generated_stats(*gated, *ex, smoke_spec), ref);
    return {fid_end < fid_start, "FID step 0 " + fmt(fid_start) + " -> step " + std::to_string(steps) + " " +
                                     fmt(fid_end) + " (need strict decrease; n=1000, 100-image 64x64 set, training " +
                                     fmt(train_seconds, 4) + " s)"};
  });

  const auto all_on_run =
      training::train_loop(arch, NoiseGateConfig::all_on(arch), cfg, dataset, work / "all_on");
  const auto all_on = load_checkpoint(all_on_run.final_checkpoint).generator;

  run("gate-zero", [&] { return gate_zero(*gated); });
  run("noise-sensitivity-direction", [&] { return noise_sensitivity_direction(*gated, *all_on, *ex); });
  run("constant-vs-random-noise-fid", [&] { return const_vs_random(*gated, *ex, ref); });
  run("self-inversion", [&] { return self_inversion(*gated); });
  run("pca-suite", [&] { return pca_suite(*gated); });
  run("truncation-style-mix-identities", [&] { return latent_identities(*gated); });
  run("service-reproducibility", [&] { return service_reproducibility(work, gated_run.final_checkpoint); });

  std::cout << (g_failures == 0 ? "ALL PASS" : std::to_string(g_failures) + " FAILED") << std::endl;
  if (!summary_path.empty()) {
    std::ofstream(summary_path) << json{{"criteria", g_summary}, {"failures", g_failures}}.dump(2) << '\n';
  }
  return g_failures == 0 ? 0 : 1;
}
