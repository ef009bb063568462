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

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace noisegate::data {

struct CropBox {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
  bool operator==(const CropBox&) const = default;
};

struct ManifestEntry {
  std::string id;
  std::string source_uri;
  std::string raw_path;        // relative to the manifest directory
  std::string sha256;          // of the raw bytes
  std::string processed_path;  // relative; empty until processed
  std::optional<CropBox> crop_box;
  std::vector<std::string> class_tags;
  bool pruned = false;
  std::string prune_reason;
  bool failed = false;
  std::string error;

  bool operator==(const ManifestEntry&) const = default;
};

/// Canonical form: entries sorted by id, JSON keys sorted, relative paths.
struct DatasetManifest {
  int resolution = 256;
  std::vector<ManifestEntry> entries;

  /// Throws InvalidArgument on duplicate ids or a non power-of-two
  /// resolution.
  void validate() const;
  void sort();
  ManifestEntry* find(const std::string& id);
  const ManifestEntry* find(const std::string& id) const;
  /// Kept entries: not pruned and not failed.
  std::vector<const ManifestEntry*> kept() const;
  std::map<std::string, int> counts_per_tag() const;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
  /// Pretty-printed canonical JSON with a trailing newline.
  std::string dump() const;
  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);

  bool operator==(const DatasetManifest&) const = default;
};

bool is_power_of_two(int v);

}  // namespace noisegate::data
