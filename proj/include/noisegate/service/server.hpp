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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include "json.hpp"
#include "noisegate/model.hpp"

namespace noisegate::service {

struct ServiceConfig {
  /// Every *.ngar checkpoint directly inside is served under its file stem.
  std::filesystem::path model_dir = "models";
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  int workers = 4;
  /// PCA bases are cached here across restarts; empty disables the cache.
  std::filesystem::path basis_cache_dir;
  /// Latent archives persist here; empty keeps them in memory only.
  std::filesystem::path archive_dir;
  std::size_t max_upload_bytes = 8u << 20;
  int pca_samples = 10000;
  std::uint64_t pca_seed = 0x50434131ull;
  int max_pca_edits = 10;
  int project_steps = 500;
  /// JSON-lines request log; "-" is stderr, empty disables logging.
  std::string log_path;

  void validate() const;
  nlohmann::json to_json() const;
  static ServiceConfig from_json(const nlohmann::json& j);
  static ServiceConfig load(const std::filesystem::path& path);
  /// NOISEGATE_MODEL_DIR, NOISEGATE_HOST, NOISEGATE_PORT, NOISEGATE_WORKERS,
  /// NOISEGATE_BASIS_CACHE_DIR, NOISEGATE_ARCHIVE_DIR, NOISEGATE_LOG.
  void apply_env(const std::function<const char*(const char*)>& getenv_fn);
};

using CheckpointLoader = std::function<LoadedCheckpoint(const std::filesystem::path&)>;

/// HTTP inference service. Routes:
///
///   GET  /v1/models
///   GET  /v1/pca/{model_id}?k=10
///   POST /v1/generate[?format=png]      EditSession JSON
///   POST /v1/project?model_id=&steps=   image bytes; 202 + job id
///   GET  /v1/jobs/{job_id}
///   GET  /v1/latent/{archive_id}
///   POST /v1/latent?model_id=           latent archive bytes
///
/// Models load on a background thread after start(); requests for a model
/// that is still loading get 503. Forward passes of one model are
/// serialized; projection jobs run one at a time on their own worker.
class Service {
 public:
  explicit Service(ServiceConfig config, CheckpointLoader loader = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and starts serving; returns the bound port.
  int start();
  /// Blocks until start() has been called and stop() runs.
  void wait();
  void stop();
  /// Blocks until every configured model is loaded or has failed.
  void wait_until_loaded();

  int port() const;
  const ServiceConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace noisegate::service
