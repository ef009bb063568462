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

#include "noisegate/latent_tools/pca.hpp"

#include <Eigen/Eigenvalues>

#include "noisegate/container.hpp"
#include "noisegate/error.hpp"
#include "noisegate/model.hpp"
#include "noisegate/rng.hpp"

namespace noisegate::latent_tools {

PcaBasis fit_pca(const Eigen::MatrixXd& samples, int k) {
  const auto n = samples.rows();
  const auto d = samples.cols();
  if (d < 1) throw InvalidArgument("fit_pca: samples have no columns");
  if (n < d + 1) {
    throw InvalidArgument("fit_pca: need at least " + std::to_string(d + 1) + " samples, got " + std::to_string(n));
  }
  if (k < 0) k = static_cast<int>(d);
  if (k < 1 || k > d) throw InvalidArgument("fit_pca: k must lie in [1, " + std::to_string(d) + "]");

  const Eigen::VectorXd mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  cov = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw NumericFailure("fit_pca: eigendecomposition failed");

  PcaBasis b;
  b.mean.values.resize(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) b.mean.values[j] = static_cast<float>(mean[j]);
  b.components.resize(k, d);
  b.variances.resize(k);
  for (int r = 0; r < k; ++r) {
    const Eigen::Index src = d - 1 - r;  // eigenvalues come ascending
    Eigen::VectorXd v = es.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    b.components.row(r) = v.transpose();
    b.variances[r] = std::max(0.0, es.eigenvalues()[src]);
  }
  return b;
}

PcaBasis compute_pca_basis(const Generator& g, int n, std::uint64_t seed, int k) {
  const int d = g.arch().latent_dim;
  if (n < d + 1) {
    throw InvalidArgument("compute_pca_basis: need at least " + std::to_string(d + 1) + " samples, got " +
                          std::to_string(n));
  }
  Eigen::MatrixXd samples(n, d);
  for (int i = 0; i < n; ++i) {
    const auto w = g.map_latent(sample_latent(derive_seed(seed, static_cast<std::uint64_t>(i)), d));
    for (int j = 0; j < d; ++j) samples(i, j) = w.values[j];
  }
  auto basis = fit_pca(samples, k);
  basis.meta["n_samples"] = n;
  basis.meta["seed"] = seed;
  return basis;
}

void save_pca_basis(const std::filesystem::path& path, const PcaBasis& basis) {
  Archive ar("pca-basis");
  ar.meta() = basis.meta;
  const auto k = static_cast<std::int64_t>(basis.k());
  const auto d = static_cast<std::int64_t>(basis.dim());
  std::vector<double> mean(basis.mean.values.begin(), basis.mean.values.end());
  ar.put_f64("mean", {d}, mean);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = basis.components;
  ar.put_f64("components", {k, d}, std::span<const double>(rows.data(), rows.size()));
  ar.put_f64("variances", {k}, std::span<const double>(basis.variances.data(), basis.variances.size()));
  ar.save(path);
}

PcaBasis load_pca_basis(const std::filesystem::path& path) {
  const auto ar = Archive::load(path);
  if (ar.kind() != "pca-basis") throw FormatError("expected a pca-basis archive, got '" + ar.kind() + "'", 0);
  const auto shape = ar.shape("components");
  if (shape.size() != 2) throw FormatError("pca-basis components must be 2-D", 0);
  const auto mean = ar.get_f64("mean");
  const auto comps = ar.get_f64("components");
  const auto vars = ar.get_f64("variances");
  if (static_cast<std::int64_t>(mean.size()) != shape[1] || static_cast<std::int64_t>(vars.size()) != shape[0]) {
    throw FormatError("pca-basis tensors disagree in shape", 0);
  }
  PcaBasis b;
  b.meta = ar.meta();
  b.mean.values.assign(mean.begin(), mean.end());
  b.components = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      comps.data(), shape[0], shape[1]);
  b.variances = Eigen::Map<const Eigen::VectorXd>(vars.data(), static_cast<Eigen::Index>(vars.size()));
  return b;
}

LatentWPlus apply_pca_edits(const LatentWPlus& w, const PcaBasis& basis, const std::vector<PcaEdit>& edits) {
  if (edits.empty()) return w;
  const int layers = static_cast<int>(w.size());
  if (w.dim() != basis.dim()) {
    throw InvalidArgument("apply_pca_edits: latent dimension " + std::to_string(w.dim()) + " does not match basis " +
                          std::to_string(basis.dim()));
  }
  std::vector<Eigen::VectorXd> delta(static_cast<std::size_t>(layers), Eigen::VectorXd::Zero(basis.dim()));
  std::vector<bool> touched(static_cast<std::size_t>(layers), false);
  for (const auto& e : edits) {
    if (e.direction < 0 || e.direction >= basis.k()) {
      throw InvalidArgument("PCA direction " + std::to_string(e.direction) + " outside [0, " +
                            std::to_string(basis.k() - 1) + "]");
    }
    const int hi = e.layer_hi < 0 ? layers : e.layer_hi;
    if (e.layer_lo < 0 || e.layer_lo > hi || hi > layers) {
      throw InvalidArgument("PCA layer range [" + std::to_string(e.layer_lo) + ", " + std::to_string(hi) +
                            ") outside [0, " + std::to_string(layers) + "]");
    }
    if (!std::isfinite(e.weight)) throw InvalidArgument("PCA weight must be finite");
    for (int i = e.layer_lo; i < hi; ++i) {
      delta[i] += e.weight * basis.components.row(e.direction).transpose();
      touched[i] = true;
    }
  }
  LatentWPlus out = w;
  for (int i = 0; i < layers; ++i) {
    if (!touched[i]) continue;
    auto& v = out.layers[i].values;
    for (int j = 0; j < basis.dim(); ++j) v[j] = static_cast<float>(static_cast<double>(v[j]) + delta[i][j]);
  }
  return out;
}

}  // namespace noisegate::latent_tools
