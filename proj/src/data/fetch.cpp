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

#include "noisegate/data/fetch.hpp"

#include <httplib.h>

#include <chrono>
#include <thread>

#include "noisegate/container.hpp"
#include "noisegate/error.hpp"
#include "noisegate/hash.hpp"

namespace noisegate::data {

namespace {

struct FetchError {
  std::string message;
  bool transient = false;
};

bool is_http(const std::string& s) { return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0; }

std::filesystem::path local_root(const std::string& base) {
  const std::string prefix = "file://";
  return base.rfind(prefix, 0) == 0 ? std::filesystem::path(base.substr(prefix.size())) : std::filesystem::path(base);
}

// Splits "http://host:port/a/b" into ("http://host:port", "/a/b").
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string join_url(const std::string& base, const std::string& rel) {
  if (is_http(rel)) return rel;
  if (!rel.empty() && rel.front() == '/') return split_url(base).first + rel;
  std::string b = base;
  while (!b.empty() && b.back() == '/') b.pop_back();
  std::string r = rel;
  while (!r.empty() && r.front() == '/') r.erase(r.begin());
  return b + "/" + r;
}

std::vector<std::uint8_t> http_get_once(const std::string& url, int timeout_s) {
  const auto [host, path] = split_url(url);
  httplib::Client cli(host);
  cli.set_connection_timeout(timeout_s, 0);
  cli.set_read_timeout(timeout_s, 0);
  cli.set_follow_location(true);
  auto res = cli.Get(path);
  if (!res) throw FetchError{"GET " + url + ": " + httplib::to_string(res.error()), true};
  if (res->status != 200) {
    const bool transient = res->status == 408 || res->status == 429 || res->status >= 500;
    throw FetchError{"GET " + url + ": HTTP " + std::to_string(res->status), transient};
  }
  return std::vector<std::uint8_t>(res->body.begin(), res->body.end());
}

std::vector<std::uint8_t> fetch_with_retry(const std::string& uri, const FetchOptions& opts) {
  if (!is_http(uri)) {
    const std::filesystem::path p(uri);
    if (!std::filesystem::exists(p)) throw FetchError{"missing mirror file " + uri, false};
    return read_file_bytes(p);
  }
  int delay = opts.backoff_ms;
  for (int attempt = 0;; ++attempt) {
    try {
      return http_get_once(uri, opts.timeout_s);
    } catch (const FetchError& e) {
      if (!e.transient || attempt >= opts.max_retries) throw;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    delay *= 2;
  }
}

std::string extension_for(const std::string& uri) {
  const auto slash = uri.find_last_of('/');
  const auto name = slash == std::string::npos ? uri : uri.substr(slash + 1);
  const auto dot = name.find_last_of('.');
  if (dot == std::string::npos) return ".img";
  auto ext = name.substr(dot);
  const auto q = ext.find_first_of("?#");
  if (q != std::string::npos) ext.resize(q);
  return ext.empty() ? ".img" : ext;
}

std::string id_string(const nlohmann::json& v) {
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_string()) return v.get<std::string>();
  throw ConfigError("catalog entry id must be an integer or string");
}

}  // namespace

DatasetManifest fetch_catalog(const FetchOptions& opts, FetchReport* report) {
  if (opts.api_base.empty()) throw ConfigError("fetch_catalog needs an api base or mirror directory");
  if (opts.max_retries < 0 || opts.backoff_ms < 0) throw ConfigError("retry settings must be >= 0");
  FetchReport rep;
  const bool remote = is_http(opts.api_base);
  const std::string catalog_uri =
      remote ? join_url(opts.api_base, "cardinfo.php") : (local_root(opts.api_base) / "cardinfo.json").string();

  std::vector<std::uint8_t> catalog_bytes;
  try {
    catalog_bytes = fetch_with_retry(catalog_uri, opts);
  } catch (const FetchError& e) {
    throw ConfigError("cannot fetch catalog: " + e.message);
  }
  const auto catalog = nlohmann::json::parse(catalog_bytes.begin(), catalog_bytes.end(), nullptr, false);
  if (catalog.is_discarded() || !catalog.contains("data") || !catalog.at("data").is_array()) {
    throw ConfigError("catalog at " + catalog_uri + " does not follow the expected schema");
  }

  DatasetManifest previous;
  const auto manifest_path = opts.out_dir / "manifest.json";
  if (std::filesystem::exists(manifest_path)) previous = DatasetManifest::load(manifest_path);

  DatasetManifest m;
  m.resolution = opts.resolution;
  int count = 0;
  for (const auto& card : catalog.at("data")) {
    if (opts.limit >= 0 && count >= opts.limit) break;
    ++count;
    ManifestEntry e;
    e.id = id_string(card.at("id"));
    const std::string frame = card.value("frameType", std::string{});
    if (!frame.empty()) e.class_tags.push_back(frame);
    const std::string type = card.value("type", std::string{});
    if (!type.empty() && type != frame) e.class_tags.push_back(type);
    std::sort(e.class_tags.begin(), e.class_tags.end());
    auto crop_it = opts.crop_by_frame.find(frame);
    e.crop_box = crop_it != opts.crop_by_frame.end() ? crop_it->second : opts.default_crop;

    if (!card.contains("card_images") || card.at("card_images").empty()) {
      e.failed = true;
      e.error = "catalog entry has no card_images";
      ++rep.failed;
      m.entries.push_back(std::move(e));
      continue;
    }
    const auto url = card.at("card_images").at(0).value("image_url", std::string{});
    e.source_uri = remote ? join_url(opts.api_base, url) : (is_http(url) ? url : (local_root(opts.api_base) / url).string());
    e.raw_path = "raw/" + e.id + extension_for(url);
    const auto raw_abs = opts.out_dir / e.raw_path;

    const ManifestEntry* old = previous.find(e.id);
    if (old && !old->failed && old->raw_path == e.raw_path && std::filesystem::exists(raw_abs) &&
        sha256_hex(read_file_bytes(raw_abs)) == old->sha256) {
      e.sha256 = old->sha256;
      e.processed_path = old->processed_path;
      e.pruned = old->pruned;
      e.prune_reason = old->prune_reason;
      ++rep.reused;
      m.entries.push_back(std::move(e));
      continue;
    }
    try {
      const auto bytes = fetch_with_retry(e.source_uri, opts);
      write_file_bytes(raw_abs, bytes);
      e.sha256 = sha256_hex(bytes);
      if (old) {
        e.pruned = old->pruned;
        e.prune_reason = old->prune_reason;
      }
      ++rep.downloaded;
    } catch (const FetchError& err) {
      e.failed = true;
      e.error = err.message;
      ++rep.failed;
    } catch (const Error& err) {
      e.failed = true;
      e.error = err.what();
      ++rep.failed;
    }
    m.entries.push_back(std::move(e));
  }
  m.sort();
  m.validate();
  m.save(manifest_path);
  if (report) *report = rep;
  return m;
}

}  // namespace noisegate::data
