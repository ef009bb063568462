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
#include <string>
#include <vector>

#include "noisegate/data/manifest.hpp"

namespace noisegate::data {

/// `api_base` is either an http(s) URL serving `<base>/cardinfo.php`, or a
/// local mirror directory (optionally `file://`) holding `cardinfo.json`.
/// The catalog follows the YGOPRODeck schema: {"data": [{"id", "type",
/// "frameType", "card_images": [{"image_url", ...}]}]}. Relative image URLs
/// resolve against the base.
struct FetchOptions {
  std::string api_base;
  std::filesystem::path out_dir;
  int resolution = 256;
  int max_retries = 3;
  int backoff_ms = 100;  // doubled after every retry
  int timeout_s = 30;
  int limit = -1;        // fetch at most this many cards; -1 = all
  CropBox default_crop{48, 110, 320, 320};
  std::map<std::string, CropBox> crop_by_frame;  // keyed by frameType
};

struct FetchReport {
  int downloaded = 0;
  int reused = 0;
  int failed = 0;
};

/// Writes raw images to out_dir/raw/<id>.<ext> and the manifest to
/// out_dir/manifest.json. Entries whose raw file already matches the hash in
/// a previous manifest are not downloaded again. Transient failures are
/// retried with exponential backoff; an entry that still fails is marked
/// failed and the run continues. A catalog that cannot be fetched throws
/// ConfigError.
DatasetManifest fetch_catalog(const FetchOptions& opts, FetchReport* report = nullptr);

}  // namespace noisegate::data
