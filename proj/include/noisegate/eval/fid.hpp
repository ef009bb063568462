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
#include <string>

namespace noisegate::eval {

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unbiased
  std::int64_t n = 0;
  std::string extractor;

  int dim() const { return static_cast<int>(mean.size()); }
};

/// Streaming mean / scatter accumulator. Batches are folded in with the
/// pairwise update of Chan et al., so shards can be accumulated separately
/// and merged.
class StatsAccumulator {
 public:
  explicit StatsAccumulator(int dim = 0);

  /// One sample per row.
  void add(const Eigen::MatrixXd& rows);
  void merge(const StatsAccumulator& other);
  std::int64_t count() const { return n_; }
  /// Throws InvalidArgument when fewer than two samples were added.
  FeatureStats finalize(std::string extractor = {}) const;

 private:
  std::int64_t n_ = 0;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd scatter_;
};

FeatureStats fit_stats(const Eigen::MatrixXd& features, std::string extractor = {});

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).
///
/// Tr((S_a S_b)^(1/2)) is evaluated as Tr((A S_b A)^(1/2)) with A = S_a^(1/2),
/// both roots taken by symmetric eigendecomposition. Eigenvalues in
/// [-1e-6, 0) are clamped to zero; anything more negative raises
/// NumericFailure listing the offending eigenvalues. Stats that compare
/// equal element-wise give exactly 0.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

/// Container kind "feature-stats": f64 tensors "mean" [F] and "cov" [F, F];
/// meta holds n and extractor.
void save_stats(const std::filesystem::path& path, const FeatureStats& stats);
FeatureStats load_stats(const std::filesystem::path& path);

}  // namespace noisegate::eval
