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

#include <Eigen/Eigenvalues>
#include <cmath>
#include <filesystem>

#include "noisegate/error.hpp"
#include "noisegate/eval/experiments.hpp"
#include "noisegate/eval/features.hpp"
#include "noisegate/eval/fid.hpp"
#include "noisegate/rng.hpp"

using namespace noisegate;
using namespace noisegate::eval;

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

Eigen::MatrixXd gaussian_rows(int n, const std::vector<double>& mean, const std::vector<double>& var,
                              std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(n, static_cast<Eigen::Index>(mean.size()));
  for (int i = 0; i < n; ++i)
    for (std::size_t j = 0; j < mean.size(); ++j) m(i, j) = mean[j] + std::sqrt(var[j]) * rng.normal();
  return m;
}

FeatureStats exact_diag(const std::vector<double>& mean, const std::vector<double>& var) {
  FeatureStats s;
  s.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  s.cov = Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(var.data(), static_cast<Eigen::Index>(var.size())))
              .asDiagonal();
  s.n = 1000;
  return s;
}

double diag_closed_form(const std::vector<double>& ma, const std::vector<double>& va, const std::vector<double>& mb,
                        const std::vector<double>& vb) {
  double d = 0.0;
  for (std::size_t i = 0; i < ma.size(); ++i) {
    d += (ma[i] - mb[i]) * (ma[i] - mb[i]) + (std::sqrt(va[i]) - std::sqrt(vb[i])) * (std::sqrt(va[i]) - std::sqrt(vb[i]));
  }
  return d;
}

Eigen::MatrixXd random_spd(int d, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  return a * a.transpose() / d + 0.1 * Eigen::MatrixXd::Identity(d, d);
}

}  // namespace

TEST_CASE("feature extractors") {
  SUBCASE("identity on 2x2 gray images equals flattened pixels") {
    auto gray = torch::tensor({0.1f, -0.2f, 0.3f, 0.9f}).view({1, 1, 2, 2}).expand({1, 3, 2, 2});
    auto f = extract_features(gray, *make_extractor("identity"));
    REQUIRE(f.rows() == 1);
    REQUIRE(f.cols() == 12);
    const float px[4] = {0.1f, -0.2f, 0.3f, 0.9f};
    for (int p = 0; p < 4; ++p)
      for (int c = 0; c < 3; ++c) CHECK(f(0, p * 3 + c) == static_cast<double>(px[p]));
  }
  for (const char* id : {"identity", "random-projection", "random-conv"}) {
    CAPTURE(id);
    auto ex = make_extractor(id);
    CHECK(ex->id() == id);
    auto imgs = torch::rand({5, 3, 32, 32}) * 2 - 1;
    imgs[3].copy_(imgs[1]);
    auto f = extract_features(imgs, *ex, 2);
    CHECK(f.rows() == 5);
    CHECK(f.row(1) == f.row(3));
    CHECK(f == extract_features(imgs, *make_extractor(id), 2));
    CHECK((f - extract_features(imgs, *make_extractor(id), 5)).cwiseAbs().maxCoeff() < 1e-5);
  }
  CHECK(extract_features(torch::zeros({2, 3, 64, 64}), RandomConvExtractor()).cols() == 224);
  CHECK(extract_features(torch::zeros({2, 3, 64, 64}), RandomProjectionExtractor()).cols() == 64);
  CHECK_THROWS_AS(make_extractor("inception-v9"), ConfigError);
  CHECK_THROWS_AS(make_extractor("torchscript:/nonexistent/model.pt"), ConfigError);

  RandomConvExtractor net;
  auto a = torch::rand({2, 3, 16, 16}) * 2 - 1;
  auto b = torch::rand({2, 3, 16, 16}) * 2 - 1;
  CHECK(perceptual_distance(net, a, a).abs().max().item<double>() == 0.0);
  CHECK((perceptual_distance(net, a, b) > 0).all().item<bool>());
}

TEST_CASE("fit_stats") {
  Eigen::MatrixXd two(2, 1);
  two << 0.0, 2.0;
  auto s = fit_stats(two);
  CHECK(s.mean(0) == 1.0);
  CHECK(s.cov(0, 0) == 2.0);
  CHECK(s.n == 2);

  Eigen::MatrixXd constant = Eigen::MatrixXd::Constant(7, 3, 0.25);
  CHECK(fit_stats(constant).cov.cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(fit_stats(Eigen::MatrixXd(1, 3)), InvalidArgument);

  // Direct two-pass oracle.
  Rng rng(3);
  Eigen::MatrixXd x(500, 6);
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) x(i, j) = 5.0 + rng.normal() * (j + 1);
  std::vector<double> mean(6, 0.0);
  for (int i = 0; i < 500; ++i)
    for (int j = 0; j < 6; ++j) mean[j] += x(i, j);
  for (auto& m : mean) m /= 500.0;
  double worst = 0.0;
  const auto fitted = fit_stats(x);
  for (int j = 0; j < 6; ++j) {
    worst = std::max(worst, std::abs(fitted.mean(j) - mean[j]));
    for (int k = 0; k < 6; ++k) {
      double c = 0.0;
      for (int i = 0; i < 500; ++i) c += (x(i, j) - mean[j]) * (x(i, k) - mean[k]);
      worst = std::max(worst, std::abs(fitted.cov(j, k) - c / 499.0));
    }
  }
  CHECK(worst < 1e-10);

  // Sharded accumulation and merging agree with a single pass.
  StatsAccumulator a, b, c;
  a.add(x.topRows(123));
  b.add(x.middleRows(123, 200));
  c.add(x.bottomRows(177));
  a.merge(b);
  a.merge(c);
  const auto merged = a.finalize();
  CHECK((merged.mean - fitted.mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((merged.cov - fitted.cov).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("frechet distance closed forms") {
  auto one = exact_diag({0.0}, {1.0});
  auto four = exact_diag({1.0}, {4.0});
  CHECK(frechet_distance(one, four) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(frechet_distance(four, one) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(frechet_distance(one, one) == 0.0);

  const std::vector<double> ma = {0.0, 1.0, -2.0, 0.5}, va = {1.0, 0.25, 9.0, 2.0};
  const std::vector<double> mb = {0.3, 1.0, -1.0, 0.0}, vb = {4.0, 1.0, 1.0, 2.0};
  CHECK(frechet_distance(exact_diag(ma, va), exact_diag(mb, vb)) ==
        doctest::Approx(diag_closed_form(ma, va, mb, vb)).epsilon(1e-10));

  // Full covariances: Tr((S_a S_b)^(1/2)) from the eigenvalues of the
  // non-symmetric product.
  FeatureStats a, b;
  a.cov = random_spd(5, 1);
  b.cov = random_spd(5, 2);
  a.mean = Eigen::VectorXd::LinSpaced(5, 0.0, 1.0);
  b.mean = Eigen::VectorXd::Zero(5);
  Eigen::EigenSolver<Eigen::MatrixXd> es(a.cov * b.cov);
  double tr = 0.0;
  for (int i = 0; i < 5; ++i) tr += std::sqrt(es.eigenvalues()[i].real());
  const double oracle = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr;
  CHECK(frechet_distance(a, b) == doctest::Approx(oracle).epsilon(1e-9));
  CHECK(frechet_distance(a, b) == doctest::Approx(frechet_distance(b, a)).epsilon(1e-9));
  CHECK(frechet_distance(a, a) < 1e-8);

  FeatureStats bad = a;
  bad.cov(0, 0) = -1.0;
  try {
    frechet_distance(bad, b);
    FAIL("expected NumericFailure");
  } catch (const NumericFailure& e) {
    CHECK(std::string(e.what()).find("lambda[") != std::string::npos);
  }
  FeatureStats tiny = exact_diag({0.0, 0.0}, {1.0, -1e-9});
  CHECK(std::isfinite(frechet_distance(tiny, exact_diag({0.0, 0.0}, {1.0, 1.0}))));
  CHECK_THROWS_AS(frechet_distance(one, exact_diag(ma, va)), InvalidArgument);
}

TEST_CASE("frechet distance converges on sampled Gaussians") {
  const int n = 10000;
  {
    auto a = fit_stats(gaussian_rows(n, {0.0}, {1.0}, 11));
    auto b = fit_stats(gaussian_rows(n, {1.0}, {4.0}, 12));
    CHECK(std::abs(frechet_distance(a, b) - 2.0) < 0.05 * 2.0);
  }
  {
    const std::vector<double> ma = {0, 1, 2, 3, 0, 0, -1, 0.5}, va = {1, 2, 0.5, 1, 3, 1, 0.25, 4};
    const std::vector<double> mb = {1, 1, 0, 3, 0.5, -1, -1, 0}, vb = {2, 1, 0.5, 4, 1, 1, 1, 1};
    const double expected = diag_closed_form(ma, va, mb, vb);
    auto a = fit_stats(gaussian_rows(n, ma, va, 13));
    auto b = fit_stats(gaussian_rows(n, mb, vb, 14));
    CHECK(std::abs(frechet_distance(a, b) - expected) < 0.05 * expected);
  }
}

TEST_CASE("feature stats round trip through the container") {
  FeatureStats s = fit_stats(gaussian_rows(50, {0, 1, 2}, {1, 1, 1}, 5), "random-conv");
  const auto path = std::filesystem::temp_directory_path() / "noisegate_test_stats.ngar";
  save_stats(path, s);
  auto back = load_stats(path);
  CHECK(back.mean == s.mean);
  CHECK(back.cov == s.cov);
  CHECK(back.n == 50);
  CHECK(back.extractor == "random-conv");
  std::filesystem::remove(path);
}

TEST_CASE("noise sensitivity") {
  const auto arch = small_arch();
  RandomConvExtractor ex;
  Generator off(arch, NoiseGateConfig::all_off(arch), 3);
  CHECK(noise_sensitivity(off, ex, 16, 1, 2) == 0.0);
  Generator on(arch, NoiseGateConfig::all_on(arch), 3);
  CHECK(noise_sensitivity(on, ex, 16, 1, 2) > 0.0);
  CHECK_THROWS_AS(noise_sensitivity(on, ex, 1, 1, 2), InvalidArgument);

  // Constant mode feeds one noise draw to every latent.
  SampleSpec spec{4, 9, NoiseMode::kConstant, 5, 1.0f, 4};
  auto x = generate_images(on, spec, 0, 4);
  auto y = generate_images(on, spec, 2, 2);
  CHECK(torch::equal(x.slice(0, 2, 4), y));
}

TEST_CASE("ablation runner") {
  const auto arch = small_arch();
  auto gated = std::make_shared<const Generator>(arch, NoiseGateConfig::parse("off:4-8", arch), 4);
  auto resolver = [&](const std::string& path) -> std::shared_ptr<const Generator> {
    if (path == "gated") return gated;
    throw ConfigError("no checkpoint '" + path + "'");
  };

  AblationSpec spec;
  spec.batch = 8;
  spec.rows = {{"const", "gated", "off:4-8", NoiseMode::kConstant, 12},
               {"random", "gated", "off:4-8", NoiseMode::kRandomPerLatent, 12}};
  RandomConvExtractor ex;
  SampleSpec self{12, spec.latent_seed, NoiseMode::kConstant, spec.noise_seed, 1.0f, 5};
  const auto ref = generated_stats(*gated, ex, self);

  auto table = run_ablation(spec, ref, resolver);
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[0].fid < 1e-6);  // same samples as the reference, different batching
  CHECK(table.rows[1].fid > 0.0);
  CHECK(table.rows[0].gates == "off:4-8");
  const auto text = table.to_text();
  CHECK(text.find("Configuration") != std::string::npos);
  CHECK(text.find("random") != std::string::npos);
  CHECK(table.to_json()["rows"].size() == 2);
  CHECK(AblationSpec::from_json(spec.to_json()).to_json() == spec.to_json());

  auto dup = spec;
  dup.rows[1].label = "const";
  CHECK_THROWS_AS(run_ablation(dup, ref, resolver), ConfigError);
  auto mismatch = spec;
  mismatch.rows[0].gates = "all-on";
  CHECK_THROWS_AS(run_ablation(mismatch, ref, resolver), ConfigError);
  auto missing = spec;
  missing.rows[0].checkpoint = "elsewhere";
  CHECK_THROWS_AS(run_ablation(missing, ref, resolver), ConfigError);
  missing.rows[0].checkpoint = "/nonexistent/ckpt.ngar";
  CHECK_THROWS_AS(run_ablation(missing, ref), ConfigError);
  auto wrong_ref = ref;
  wrong_ref.extractor = "identity";
  CHECK_THROWS_AS(run_ablation(spec, wrong_ref, resolver), ConfigError);
}
