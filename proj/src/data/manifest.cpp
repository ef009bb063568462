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

#include "noisegate/data/manifest.hpp"

#include <algorithm>
#include <set>

#include "noisegate/container.hpp"
#include "noisegate/error.hpp"

namespace noisegate::data {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

void DatasetManifest::validate() const {
  if (!is_power_of_two(resolution)) {
    throw InvalidArgument("manifest resolution " + std::to_string(resolution) + " is not a power of two");
  }
  std::set<std::string> ids;
  for (const auto& e : entries) {
    if (e.id.empty()) throw InvalidArgument("manifest entry with empty id");
    if (!ids.insert(e.id).second) throw InvalidArgument("duplicate manifest id '" + e.id + "'");
  }
}

void DatasetManifest::sort() {
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
}

ManifestEntry* DatasetManifest::find(const std::string& id) {
  auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.id == id; });
  return it == entries.end() ? nullptr : &*it;
}

const ManifestEntry* DatasetManifest::find(const std::string& id) const {
  return const_cast<DatasetManifest*>(this)->find(id);
}

std::vector<const ManifestEntry*> DatasetManifest::kept() const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (!e.pruned && !e.failed) out.push_back(&e);
  }
  return out;
}

std::map<std::string, int> DatasetManifest::counts_per_tag() const {
  std::map<std::string, int> counts;
  for (const auto* e : kept()) {
    for (const auto& t : e->class_tags) ++counts[t];
  }
  return counts;
}

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json es = nlohmann::json::array();
  auto sorted = entries;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (const auto& e : sorted) {
    nlohmann::json j = {{"id", e.id},
                        {"source_uri", e.source_uri},
                        {"raw_path", e.raw_path},
                        {"sha256", e.sha256},
                        {"processed_path", e.processed_path},
                        {"class_tags", e.class_tags},
                        {"pruned", e.pruned},
                        {"prune_reason", e.prune_reason},
                        {"failed", e.failed},
                        {"error", e.error}};
    if (e.crop_box) {
      j["crop_box"] = {{"x", e.crop_box->x}, {"y", e.crop_box->y}, {"width", e.crop_box->width},
                       {"height", e.crop_box->height}};
    } else {
      j["crop_box"] = nullptr;
    }
    es.push_back(std::move(j));
  }
  return {{"resolution", resolution}, {"entries", es}, {"counts_per_tag", counts_per_tag()}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.resolution = j.at("resolution").get<int>();
    for (const auto& x : j.at("entries")) {
      ManifestEntry e;
      e.id = x.at("id").get<std::string>();
      e.source_uri = x.value("source_uri", std::string{});
      e.raw_path = x.value("raw_path", std::string{});
      e.sha256 = x.value("sha256", std::string{});
      e.processed_path = x.value("processed_path", std::string{});
      e.class_tags = x.value("class_tags", std::vector<std::string>{});
      e.pruned = x.value("pruned", false);
      e.prune_reason = x.value("prune_reason", std::string{});
      e.failed = x.value("failed", false);
      e.error = x.value("error", std::string{});
      if (x.contains("crop_box") && !x.at("crop_box").is_null()) {
        const auto& c = x.at("crop_box");
        e.crop_box = CropBox{c.at("x").get<int>(), c.at("y").get<int>(), c.at("width").get<int>(),
                             c.at("height").get<int>()};
      }
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what(), 0);
  }
  m.validate();
  m.sort();
  return m;
}

std::string DatasetManifest::dump() const { return to_json().dump(2) + "\n"; }

void DatasetManifest::save(const std::filesystem::path& path) const {
  validate();
  const auto text = dump();
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const auto j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw FormatError("manifest " + path.string() + " is not valid JSON", 0);
  return from_json(j);
}

}  // namespace noisegate::data
