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

#include "noisegate/eval/fid.hpp"

#include <Eigen/Eigenvalues>
#include <sstream>

#include "noisegate/container.hpp"
#include "noisegate/error.hpp"

namespace noisegate::eval {

namespace {

constexpr double kEigenTolerance = 1e-6;

Eigen::VectorXd checked_eigenvalues(const Eigen::VectorXd& values, const char* what) {
  std::ostringstream bad;
  int count = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values[i] < -kEigenTolerance) {
      if (count++ < 8) bad << (count > 1 ? ", " : "") << "lambda[" << i << "]=" << values[i];
    }
  }
  if (count > 0) {
    std::ostringstream msg;
    msg << what << " is not positive semi-definite: " << count << " eigenvalue(s) below -" << kEigenTolerance
        << " (" << bad.str() << (count > 8 ? ", ..." : "") << ")";
    throw NumericFailure(msg.str());
  }
  return values.cwiseMax(0.0);
}

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

StatsAccumulator::StatsAccumulator(int dim) : mean_(Eigen::VectorXd::Zero(dim)), scatter_(Eigen::MatrixXd::Zero(dim, dim)) {}

void StatsAccumulator::add(const Eigen::MatrixXd& rows) {
  if (rows.rows() == 0) return;
  if (n_ == 0 && mean_.size() == 0) {
    mean_ = Eigen::VectorXd::Zero(rows.cols());
    scatter_ = Eigen::MatrixXd::Zero(rows.cols(), rows.cols());
  }
  if (rows.cols() != mean_.size()) throw InvalidArgument("feature dimension mismatch in stats accumulation");
  StatsAccumulator batch;
  batch.n_ = rows.rows();
  batch.mean_ = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centered = rows.rowwise() - batch.mean_.transpose();
  batch.scatter_ = centered.transpose() * centered;
  merge(batch);
}

void StatsAccumulator::merge(const StatsAccumulator& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  if (other.mean_.size() != mean_.size()) throw InvalidArgument("feature dimension mismatch in stats merge");
  const double na = static_cast<double>(n_);
  const double nb = static_cast<double>(other.n_);
  const double n = na + nb;
  const Eigen::VectorXd delta = other.mean_ - mean_;
  mean_ += delta * (nb / n);
  scatter_ += other.scatter_ + delta * delta.transpose() * (na * nb / n);
  n_ += other.n_;
}

FeatureStats StatsAccumulator::finalize(std::string extractor) const {
  if (n_ < 2) throw InvalidArgument("feature statistics need at least two samples");
  FeatureStats s;
  s.mean = mean_;
  s.cov = symmetrized(scatter_) / static_cast<double>(n_ - 1);
  s.n = n_;
  s.extractor = std::move(extractor);
  return s;
}

FeatureStats fit_stats(const Eigen::MatrixXd& features, std::string extractor) {
  if (features.rows() < 2) throw InvalidArgument("feature statistics need at least two samples");
  StatsAccumulator acc(static_cast<int>(features.cols()));
  acc.add(features);
  return acc.finalize(std::move(extractor));
}

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  if (a.dim() != b.dim() || a.cov.rows() != a.dim() || b.cov.rows() != b.dim()) {
    throw InvalidArgument("frechet_distance: dimension mismatch");
  }
  if (a.dim() == 0) throw InvalidArgument("frechet_distance: empty statistics");
  if (a.mean == b.mean && a.cov == b.cov) return 0.0;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(symmetrized(a.cov));
  if (ea.info() != Eigen::Success) throw NumericFailure("eigendecomposition of the first covariance failed");
  const Eigen::VectorXd la = checked_eigenvalues(ea.eigenvalues(), "first covariance");
  const Eigen::MatrixXd sqrt_a = ea.eigenvectors() * la.cwiseSqrt().asDiagonal() * ea.eigenvectors().transpose();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eb(symmetrized(b.cov), Eigen::EigenvaluesOnly);
  if (eb.info() != Eigen::Success) throw NumericFailure("eigendecomposition of the second covariance failed");
  checked_eigenvalues(eb.eigenvalues(), "second covariance");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(symmetrized(sqrt_a * b.cov * sqrt_a), Eigen::EigenvaluesOnly);
  if (em.info() != Eigen::Success) throw NumericFailure("eigendecomposition of the covariance product failed");
  const double tr_covmean = checked_eigenvalues(em.eigenvalues(), "covariance product").cwiseSqrt().sum();

  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_covmean;
  return std::max(0.0, d);
}

void save_stats(const std::filesystem::path& path, const FeatureStats& stats) {
  Archive ar("feature-stats");
  ar.meta()["n"] = stats.n;
  ar.meta()["extractor"] = stats.extractor;
  const auto f = static_cast<std::int64_t>(stats.dim());
  ar.put_f64("mean", {f}, std::span<const double>(stats.mean.data(), stats.mean.size()));
  // Symmetric, so storage order does not matter.
  ar.put_f64("cov", {f, f}, std::span<const double>(stats.cov.data(), stats.cov.size()));
  ar.save(path);
}

FeatureStats load_stats(const std::filesystem::path& path) {
  const auto ar = Archive::load(path);
  if (ar.kind() != "feature-stats") throw FormatError("expected a feature-stats archive, got '" + ar.kind() + "'", 0);
  FeatureStats s;
  const auto mean = ar.get_f64("mean");
  const auto cov = ar.get_f64("cov");
  const auto f = static_cast<Eigen::Index>(mean.size());
  if (static_cast<Eigen::Index>(cov.size()) != f * f) throw FormatError("feature-stats covariance has wrong size", 0);
  s.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), f);
  s.cov = Eigen::Map<const Eigen::MatrixXd>(cov.data(), f, f);
  s.n = ar.meta().value("n", std::int64_t{0});
  s.extractor = ar.meta().value("extractor", std::string{});
  return s;
}

}  // namespace noisegate::eval
