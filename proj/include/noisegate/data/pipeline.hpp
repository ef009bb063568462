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
#include <vector>

#include "noisegate/data/manifest.hpp"
#include "noisegate/image.hpp"

namespace noisegate::data {

struct ProcessOptions {
  int target_res = 256;
  std::string sr_backend;  // empty: crop and resample directly
};

/// For every kept entry: decode the raw image, crop, optionally
/// super-resolve 2x, resample to target_res and write
/// processed/<id>.png under `root`. Updates resolution and processed_path.
/// Entries whose raw image cannot be decoded or cropped are marked failed.
DatasetManifest process_entries(const DatasetManifest& manifest, const std::filesystem::path& root,
                                const ProcessOptions& opts);

/// Prune file: one `<id> <reason...>` per line; blank lines and lines
/// starting with '#' are ignored. Unknown ids are reported through
/// `warnings`. Entries are only marked, never removed.
DatasetManifest apply_prune_list(const DatasetManifest& manifest, const std::string& prune_text,
                                 std::vector<std::string>* warnings = nullptr);
DatasetManifest apply_prune_list_file(const DatasetManifest& manifest, const std::filesystem::path& prune_file,
                                      std::vector<std::string>* warnings = nullptr);

struct SelectionScore {
  std::string id;
  double density_score = 0.0;
  std::string embedding_id;
};

struct SelectionReport {
  std::vector<SelectionScore> scores;  // input order
  std::vector<std::string> keep;       // sorted ids
  std::vector<std::string> drop;       // sorted ids
};

/// Gaussian log-density of each row under the mean and unbiased covariance
/// of all rows, with lambda * I added to the covariance. The lowest
/// floor((1 - keep_fraction) * N) scores are flagged drop (ties by id).
/// Rows are processed in id order, so results do not depend on row order.
SelectionReport instance_selection_scores(const Eigen::MatrixXd& embeddings, const std::vector<std::string>& ids,
                                          double keep_fraction, const std::string& embedding_id,
                                          double lambda = 1e-3);

/// Marks the report's drops as pruned with reason "instance-selection".
DatasetManifest apply_selection(const DatasetManifest& manifest, const SelectionReport& report);

/// Archive kind "packed-dataset": u8 tensor "images" [N, R, R, 3] of the
/// kept entries in id order plus meta {resolution, ids, entries}. Fails with
/// ConfigError listing every kept id without a processed image of the
/// manifest resolution.
void pack_dataset(const DatasetManifest& manifest, const std::filesystem::path& root,
                  const std::filesystem::path& out_file);

class PackedDataset {
 public:
  static PackedDataset load(const std::filesystem::path& path);
  static PackedDataset decode(std::span<const std::uint8_t> bytes);

  std::size_t size() const { return ids_.size(); }
  int resolution() const { return resolution_; }
  const std::vector<std::string>& ids() const { return ids_; }
  ImageTensor image(std::size_t i) const;
  const std::vector<std::uint8_t>& raw() const { return pixels_; }
  /// Seeded Fisher-Yates permutation of [0, size()).
  std::vector<std::size_t> order(std::uint64_t seed) const;

 private:
  int resolution_ = 0;
  std::vector<std::string> ids_;
  std::vector<std::uint8_t> pixels_;
};

}  // namespace noisegate::data
