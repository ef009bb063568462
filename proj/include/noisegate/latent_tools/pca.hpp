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

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"
#include "noisegate/latent.hpp"

namespace noisegate {
class Generator;
}

namespace noisegate::latent_tools {

/// Principal directions of W. Rows of `components` are orthonormal and
/// sorted by explained variance, descending; each row's largest-magnitude
/// entry is positive.
struct PcaBasis {
  LatentW mean;
  Eigen::MatrixXd components;  // K x D
  Eigen::VectorXd variances;   // K
  nlohmann::json meta = nlohmann::json::object();

  int k() const { return static_cast<int>(components.rows()); }
  int dim() const { return static_cast<int>(components.cols()); }
};

/// PCA of the sample rows (unbiased covariance). k < 0 keeps all D
/// directions. Needs at least D + 1 rows.
PcaBasis fit_pca(const Eigen::MatrixXd& samples, int k = -1);

/// PCA over map_latent(sample_latent(derive_seed(seed, i))) for i < n.
PcaBasis compute_pca_basis(const Generator& g, int n, std::uint64_t seed, int k = -1);

/// Container kind "pca-basis": f64 tensors "mean" [D], "components" [K, D]
/// (row-major), "variances" [K]; free-form meta.
void save_pca_basis(const std::filesystem::path& path, const PcaBasis& basis);
PcaBasis load_pca_basis(const std::filesystem::path& path);

struct PcaEdit {
  int direction = 0;
  double weight = 0.0;
  int layer_lo = 0;
  int layer_hi = -1;  // exclusive; -1 means every layer
};

/// w[i] += weight * components[direction] for i in [layer_lo, layer_hi).
/// All edits on a layer are summed in double before being added.
LatentWPlus apply_pca_edits(const LatentWPlus& w, const PcaBasis& basis, const std::vector<PcaEdit>& edits);

}  // namespace noisegate::latent_tools
