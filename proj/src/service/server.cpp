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

#include "noisegate/service/server.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include "noisegate/container.hpp"
#include "noisegate/error.hpp"
#include "noisegate/hash.hpp"
#include "noisegate/latent_tools/pca.hpp"
#include "noisegate/latent_tools/project.hpp"
#include "noisegate/service/session.hpp"

#include <httplib.h>

namespace noisegate::service {

namespace fs = std::filesystem;
using nlohmann::json;

void ServiceConfig::validate() const {
  if (port < 0 || port > 65535) throw ConfigError("port must be within [0, 65535]");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (max_upload_bytes == 0) throw ConfigError("max_upload_bytes must be > 0");
  if (pca_samples < 2) throw ConfigError("pca_samples must be >= 2");
  if (max_pca_edits < 0) throw ConfigError("max_pca_edits must be >= 0");
  if (project_steps < 1) throw ConfigError("project_steps must be >= 1");
}

json ServiceConfig::to_json() const {
  return {{"model_dir", model_dir.string()},
          {"host", host},
          {"port", port},
          {"workers", workers},
          {"basis_cache_dir", basis_cache_dir.string()},
          {"archive_dir", archive_dir.string()},
          {"max_upload_bytes", max_upload_bytes},
          {"pca_samples", pca_samples},
          {"pca_seed", pca_seed},
          {"max_pca_edits", max_pca_edits},
          {"project_steps", project_steps},
          {"log_path", log_path}};
}

ServiceConfig ServiceConfig::from_json(const json& j) {
  ServiceConfig c;
  try {
    c.model_dir = j.value("model_dir", c.model_dir.string());
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.workers = j.value("workers", c.workers);
    c.basis_cache_dir = j.value("basis_cache_dir", c.basis_cache_dir.string());
    c.archive_dir = j.value("archive_dir", c.archive_dir.string());
    c.max_upload_bytes = j.value("max_upload_bytes", c.max_upload_bytes);
    c.pca_samples = j.value("pca_samples", c.pca_samples);
    c.pca_seed = j.value("pca_seed", c.pca_seed);
    c.max_pca_edits = j.value("max_pca_edits", c.max_pca_edits);
    c.project_steps = j.value("project_steps", c.project_steps);
    c.log_path = j.value("log_path", c.log_path);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("service config: ") + e.what());
  }
  c.validate();
  return c;
}

ServiceConfig ServiceConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open service config " + path.string());
  const auto j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("service config " + path.string() + " is not a JSON object");
  return from_json(j);
}

void ServiceConfig::apply_env(const std::function<const char*(const char*)>& getenv_fn) {
  auto str = [&](const char* name, auto&& apply) {
    if (const char* v = getenv_fn(name); v && *v) apply(std::string(v));
  };
  auto to_int = [](const char* name, const std::string& v) {
    try {
      std::size_t used = 0;
      const int x = std::stoi(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw ConfigError(std::string(name) + " must be an integer, got '" + v + "'");
    }
  };
  str("NOISEGATE_MODEL_DIR", [&](const std::string& v) { model_dir = v; });
  str("NOISEGATE_HOST", [&](const std::string& v) { host = v; });
  str("NOISEGATE_PORT", [&](const std::string& v) { port = to_int("NOISEGATE_PORT", v); });
  str("NOISEGATE_WORKERS", [&](const std::string& v) { workers = to_int("NOISEGATE_WORKERS", v); });
  str("NOISEGATE_BASIS_CACHE_DIR", [&](const std::string& v) { basis_cache_dir = v; });
  str("NOISEGATE_ARCHIVE_DIR", [&](const std::string& v) { archive_dir = v; });
  str("NOISEGATE_LOG", [&](const std::string& v) { log_path = v; });
  validate();
}

namespace {

enum class ModelStatus { kLoading, kReady, kFailed };

const char* status_name(ModelStatus s) {
  switch (s) {
    case ModelStatus::kLoading: return "loading";
    case ModelStatus::kReady: return "ready";
    case ModelStatus::kFailed: return "failed";
  }
  return "unknown";
}

struct ModelSlot {
  std::string id;
  fs::path path;
  std::atomic<ModelStatus> status{ModelStatus::kLoading};
  std::string error;
  std::string checkpoint_sha;
  std::shared_ptr<const Generator> generator;
  std::mutex forward_mu;
  std::mutex basis_mu;
  std::shared_ptr<const latent_tools::PcaBasis> basis;
};

struct Job {
  std::string id;
  std::string model_id;
  ImageTensor target;
  std::string image_sha;
  latent_tools::ProjectOptions opts;
  std::string status = "queued";
  int step = 0;
  json result;
  std::string error;
  std::string error_type;
};

// Thrown inside handlers and turned into a JSON error response.
struct HttpError {
  int status;
  std::string message;
  json extra = json::object();
};

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

struct Service::Impl {
  ServiceConfig config;
  CheckpointLoader loader;
  httplib::Server server;
  std::thread listen_thread;
  std::thread load_thread;
  std::thread job_thread;
  int bound_port = -1;
  std::atomic<bool> stopping{false};

  std::map<std::string, std::unique_ptr<ModelSlot>> models;
  std::mutex load_mu;
  std::condition_variable load_cv;
  int pending_loads = 0;

  std::mutex archive_mu;
  std::map<std::string, std::vector<std::uint8_t>> archives;

  std::mutex job_mu;
  std::condition_variable job_cv;
  std::map<std::string, std::shared_ptr<Job>> jobs;
  std::deque<std::shared_ptr<Job>> job_queue;
  std::uint64_t next_job = 1;

  std::mutex log_mu;
  std::ofstream log_file;
  std::ostream* log = nullptr;

  Impl(ServiceConfig c, CheckpointLoader l) : config(std::move(c)), loader(std::move(l)) {
    config.validate();
    if (!loader) loader = [](const fs::path& p) { return load_checkpoint(p); };
    if (config.log_path == "-") {
      log = &std::cerr;
    } else if (!config.log_path.empty()) {
      log_file.open(config.log_path, std::ios::app);
      if (!log_file) throw ConfigError("cannot open request log " + config.log_path);
      log = &log_file;
    }
    std::error_code ec;
    if (fs::is_directory(config.model_dir, ec)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(config.model_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".ngar") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        auto slot = std::make_unique<ModelSlot>();
        slot->id = f.stem().string();
        slot->path = f;
        models.emplace(slot->id, std::move(slot));
      }
    }
    pending_loads = static_cast<int>(models.size());
    routes();
  }

  // ---- models -------------------------------------------------------------

  void load_all() {
    for (auto& [id, slot] : models) {
      if (stopping) break;
      try {
        auto ck = loader(slot->path);
        if (!ck.generator) throw ConfigError("checkpoint has no generator");
        slot->checkpoint_sha = sha256_hex(read_file_bytes(slot->path));
        slot->generator = std::move(ck.generator);
        slot->status = ModelStatus::kReady;
      } catch (const std::exception& e) {
        slot->error = e.what();
        slot->status = ModelStatus::kFailed;
      }
      std::lock_guard lk(load_mu);
      --pending_loads;
      load_cv.notify_all();
    }
    std::lock_guard lk(load_mu);
    pending_loads = 0;
    load_cv.notify_all();
  }

  ModelSlot& ready_model(const std::string& id) {
    auto it = models.find(id);
    if (it == models.end()) throw HttpError{404, "unknown model '" + id + "'", {{"field", "model_id"}}};
    auto& slot = *it->second;
    switch (slot.status.load()) {
      case ModelStatus::kLoading: throw HttpError{503, "model '" + id + "' is still loading"};
      case ModelStatus::kFailed: throw HttpError{500, "model '" + id + "' failed to load: " + slot.error};
      case ModelStatus::kReady: break;
    }
    return slot;
  }

  fs::path basis_cache_path(const ModelSlot& slot) const {
    return config.basis_cache_dir / (slot.id + "-" + slot.checkpoint_sha.substr(0, 16) + "-" +
                                     std::to_string(config.pca_samples) + ".pca.ngar");
  }

  std::shared_ptr<const latent_tools::PcaBasis> basis_for(ModelSlot& slot) {
    std::lock_guard lk(slot.basis_mu);
    if (slot.basis) return slot.basis;
    const auto& g = *slot.generator;
    const int n = std::max(config.pca_samples, g.arch().latent_dim + 1);
    const bool cached = !config.basis_cache_dir.empty();
    if (cached && fs::exists(basis_cache_path(slot))) {
      try {
        auto b = latent_tools::load_pca_basis(basis_cache_path(slot));
        if (b.dim() == g.arch().latent_dim && b.meta.value("checkpoint_sha256", std::string{}) == slot.checkpoint_sha) {
          slot.basis = std::make_shared<const latent_tools::PcaBasis>(std::move(b));
          return slot.basis;
        }
      } catch (const Error&) {
        // recomputed below
      }
    }
    latent_tools::PcaBasis b;
    {
      std::lock_guard fwd(slot.forward_mu);
      b = latent_tools::compute_pca_basis(g, n, config.pca_seed);
    }
    b.meta["checkpoint_sha256"] = slot.checkpoint_sha;
    b.meta["model_id"] = slot.id;
    if (cached) {
      fs::create_directories(config.basis_cache_dir);
      latent_tools::save_pca_basis(basis_cache_path(slot), b);
    }
    slot.basis = std::make_shared<const latent_tools::PcaBasis>(std::move(b));
    return slot.basis;
  }

  bool basis_available(ModelSlot& slot) {
    std::lock_guard lk(slot.basis_mu);
    return slot.basis || (!config.basis_cache_dir.empty() && fs::exists(basis_cache_path(slot)));
  }

  // ---- archives -------------------------------------------------------------

  std::string store_archive(std::vector<std::uint8_t> bytes) {
    auto id = sha256_hex(bytes);
    if (!config.archive_dir.empty()) {
      fs::create_directories(config.archive_dir);
      const auto p = config.archive_dir / (id + ".ngar");
      if (!fs::exists(p)) write_file_bytes(p, bytes);
    }
    std::lock_guard lk(archive_mu);
    archives.emplace(id, std::move(bytes));
    return id;
  }

  std::optional<std::vector<std::uint8_t>> find_archive(const std::string& id) {
    {
      std::lock_guard lk(archive_mu);
      if (auto it = archives.find(id); it != archives.end()) return it->second;
    }
    const bool plausible = id.size() == 64 && std::all_of(id.begin(), id.end(), [](char c) {
                             return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
                           });
    if (!plausible || config.archive_dir.empty()) return std::nullopt;
    const auto p = config.archive_dir / (id + ".ngar");
    if (!fs::exists(p)) return std::nullopt;
    auto bytes = read_file_bytes(p);
    if (sha256_hex(bytes) != id) return std::nullopt;
    std::lock_guard lk(archive_mu);
    archives.emplace(id, bytes);
    return bytes;
  }

  // ---- jobs -------------------------------------------------------------------

  void job_worker() {
    for (;;) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock lk(job_mu);
        job_cv.wait(lk, [&] { return stopping || !job_queue.empty(); });
        if (stopping) return;
        job = job_queue.front();
        job_queue.pop_front();
        job->status = "running";
      }
      run_job(*job);
    }
  }

  void run_job(Job& job) {
    json result;
    std::string error, error_type;
    try {
      auto& slot = ready_model(job.model_id);
      const auto& g = *slot.generator;
      auto progress = [&](int step, double) {
        std::lock_guard lk(job_mu);
        job.step = step + 1;
        return !stopping.load();
      };
      auto r = latent_tools::project(job.target, g, job.opts, progress);
      if (stopping) throw Error("service stopped");
      LatentArchive a{job.model_id, g.arch(), g.gates(), r.w_plus, r.noise,
                      json{{"projected_from_sha256", job.image_sha}, {"options", job.opts.to_json()}}};
      const auto archive_id = store_archive(a.encode());
      const auto smoothed = latent_tools::smooth_trace(r.loss_trace, std::min<int>(50, static_cast<int>(r.loss_trace.size())));
      const auto png = encode_png(r.final_image);
      result = {{"archive_id", archive_id},
                {"best_step", r.best_step},
                {"best_loss", r.best_loss},
                {"initial_loss", r.loss_trace.front().second},
                {"final_loss", r.loss_trace.back().second},
                {"steps", job.opts.steps},
                {"smoothed_final_loss", smoothed.empty() ? r.loss_trace.back().second : smoothed.back()},
                {"mse", pixel_mse(r.final_image, job.target)},
                {"image_png_base64", base64_encode(png)}};
    } catch (const NumericFailure& e) {
      error = e.what();
      error_type = "numeric_failure";
    } catch (const HttpError& e) {
      error = e.message;
      error_type = "model_unavailable";
    } catch (const std::exception& e) {
      error = e.what();
      error_type = "error";
    }
    std::lock_guard lk(job_mu);
    if (error.empty()) {
      job.status = "done";
      job.result = std::move(result);
    } else {
      job.status = "failed";
      job.error = std::move(error);
      job.error_type = std::move(error_type);
    }
  }

  // ---- handlers -------------------------------------------------------------

  template <typename F>
  httplib::Server::Handler wrap(F f) {
    return [this, f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const HttpError& e) {
        json body = {{"error", e.message}};
        body.update(e.extra);
        send_json(res, e.status, body);
      } catch (const FormatError& e) {
        send_json(res, 422, {{"error", e.what()}, {"offset", e.offset()}});
      } catch (const NumericFailure& e) {
        send_json(res, 500, {{"error", e.what()}, {"error_type", "numeric_failure"}});
      } catch (const std::exception& e) {
        send_json(res, 500, {{"error", e.what()}});
      }
    };
  }

  void check_upload_size(const httplib::Request& req) const {
    if (req.body.size() > config.max_upload_bytes) {
      throw HttpError{413, "payload of " + std::to_string(req.body.size()) + " bytes exceeds the limit of " +
                               std::to_string(config.max_upload_bytes)};
    }
  }

  static std::span<const std::uint8_t> body_bytes(const httplib::Request& req) {
    return {reinterpret_cast<const std::uint8_t*>(req.body.data()), req.body.size()};
  }

  json model_entry(ModelSlot& slot) {
    json e = {{"model_id", slot.id}, {"status", status_name(slot.status.load())}};
    if (slot.status == ModelStatus::kReady) {
      const auto& g = *slot.generator;
      const int l = g.num_layers();
      e["resolution"] = g.arch().resolution;
      e["gate_config"] = g.gates().to_string();
      e["D"] = g.arch().latent_dim;
      e["L"] = l;
      e["basis_available"] = basis_available(slot);
      e["ranges"] = SessionRanges{}.to_json(l, g.arch().latent_dim, config.max_pca_edits);
    } else if (slot.status == ModelStatus::kFailed) {
      e["error"] = slot.error;
    }
    return e;
  }

  void handle_models(const httplib::Request&, httplib::Response& res) {
    auto list = json::array();
    for (auto& [id, slot] : models) list.push_back(model_entry(*slot));
    send_json(res, 200, {{"models", list}});
  }

  void handle_pca(const httplib::Request& req, httplib::Response& res) {
    auto& slot = ready_model(req.path_params.at("model_id"));
    const auto basis = basis_for(slot);
    int k = std::min(10, basis->k());
    if (req.has_param("k")) {
      const auto v = req.get_param_value("k");
      try {
        std::size_t used = 0;
        k = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
      } catch (const std::exception&) {
        throw HttpError{400, "k must be an integer", {{"field", "k"}}};
      }
      if (k < 1 || k > basis->k()) {
        throw HttpError{400, "k must be within [1, " + std::to_string(basis->k()) + "]", {{"field", "k"}}};
      }
    }
    std::vector<double> variances(basis->variances.data(), basis->variances.data() + k);
    send_json(res, 200,
              {{"model_id", slot.id},
               {"k", k},
               {"total_directions", basis->k()},
               {"variances", variances},
               {"n_samples", basis->meta.value("n_samples", 0)},
               {"seed", basis->meta.value("seed", std::uint64_t{0})}});
  }

  void handle_generate(const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) throw HttpError{400, "request body is not valid JSON"};
    std::vector<FieldError> errors;
    auto parsed = parse_session(body, errors);
    auto bad_request = [&] {
      auto fields = json::array();
      for (const auto& e : errors) fields.push_back(e.to_json());
      return HttpError{400, "session failed validation", {{"fields", fields}}};
    };
    if (!parsed) throw bad_request();
    auto session = std::move(*parsed);
    auto& slot = ready_model(session.model_id);
    const auto& g = *slot.generator;
    validate_session(session,
                     {g.num_layers(), g.arch().latent_dim, g.arch().latent_dim, config.max_pca_edits}, errors);
    if (!errors.empty()) throw bad_request();

    std::optional<LatentArchive> source;
    if (session.archive_id) {
      auto bytes = find_archive(*session.archive_id);
      if (!bytes) throw HttpError{404, "unknown archive '" + *session.archive_id + "'", {{"field", "archive_id"}}};
      source = LatentArchive::decode(*bytes);
      if (auto why = compatibility_problem(*source, g.arch(), g.gates()); !why.empty()) {
        throw HttpError{409, why + " (archive made for model '" + source->model_id + "')",
                        {{"required_model", source->model_id}}};
      }
    }
    std::shared_ptr<const latent_tools::PcaBasis> basis;
    if (!session.pca_edits.empty()) basis = basis_for(slot);

    RenderResult r;
    {
      std::lock_guard lk(slot.forward_mu);
      if (source) {
        EditSession s = session;
        s.archive_id.reset();
        s.explicit_w_plus = source->w_plus;
        r = render_session(g, basis.get(), s, &source->noise);
      } else {
        r = render_session(g, basis.get(), session);
      }
    }
    LatentArchive out{session.model_id, g.arch(), g.gates(), r.w_plus, r.noise, {{"session", session.to_json()}}};
    const auto archive_id = store_archive(out.encode());
    const auto png = encode_png(r.image);
    const auto hash = session.hash();
    res.set_header("X-Session-Hash", hash);
    res.set_header("X-Archive-Id", archive_id);
    if (req.get_param_value("format") == "png") {
      res.status = 200;
      res.set_content(std::string(png.begin(), png.end()), "image/png");
      return;
    }
    send_json(res, 200,
              {{"model_id", session.model_id},
               {"session_hash", hash},
               {"archive_id", archive_id},
               {"width", r.image.width},
               {"height", r.image.height},
               {"image_png_base64", base64_encode(png)}});
  }

  void handle_latent_get(const httplib::Request& req, httplib::Response& res) {
    const auto& id = req.path_params.at("archive_id");
    auto bytes = find_archive(id);
    if (!bytes) throw HttpError{404, "unknown archive '" + id + "'"};
    res.status = 200;
    res.set_header("Content-Disposition", "attachment; filename=\"" + id + ".ngar\"");
    res.set_content(std::string(bytes->begin(), bytes->end()), "application/octet-stream");
  }

  void handle_latent_post(const httplib::Request& req, httplib::Response& res) {
    check_upload_size(req);
    if (!req.has_param("model_id")) throw HttpError{400, "model_id query parameter is required", {{"field", "model_id"}}};
    auto& slot = ready_model(req.get_param_value("model_id"));
    const auto archive = LatentArchive::decode(body_bytes(req));
    const auto& g = *slot.generator;
    if (auto why = compatibility_problem(archive, g.arch(), g.gates()); !why.empty()) {
      throw HttpError{409, why + " (archive made for model '" + archive.model_id + "')",
                      {{"required_model", archive.model_id}}};
    }
    const auto id = store_archive(std::vector<std::uint8_t>(req.body.begin(), req.body.end()));
    send_json(res, 201,
              {{"archive_id", id},
               {"model_id", slot.id},
               {"source_model_id", archive.model_id},
               {"L", archive.w_plus.size()},
               {"D", archive.w_plus.dim()},
               {"gate_config", archive.gates.to_string()}});
  }

  void handle_project(const httplib::Request& req, httplib::Response& res) {
    check_upload_size(req);
    if (!req.has_param("model_id")) throw HttpError{400, "model_id query parameter is required", {{"field", "model_id"}}};
    auto& slot = ready_model(req.get_param_value("model_id"));
    auto job = std::make_shared<Job>();
    job->model_id = slot.id;
    job->opts.steps = config.project_steps;
    auto int_param = [&](const char* name, auto& out, long long lo) {
      if (!req.has_param(name)) return;
      const auto v = req.get_param_value(name);
      try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used != v.size() || x < lo) throw std::invalid_argument(v);
        out = static_cast<std::decay_t<decltype(out)>>(x);
      } catch (const std::exception&) {
        throw HttpError{400, std::string(name) + " must be an integer >= " + std::to_string(lo), {{"field", name}}};
      }
    };
    int_param("steps", job->opts.steps, 1);
    int_param("noise_seed", job->opts.noise_seed, 0);
    if (req.has_param("optimize_noise")) job->opts.optimize_noise = req.get_param_value("optimize_noise") != "0";
    try {
      job->target = decode_image(body_bytes(req));
    } catch (const FormatError& e) {
      send_json(res, 422, {{"error", std::string("image does not decode: ") + e.what()}, {"offset", e.offset()}});
      return;
    }
    const int r = slot.generator->arch().resolution;
    if (job->target.height != r || job->target.width != r) {
      throw HttpError{422, "image is " + std::to_string(job->target.width) + "x" + std::to_string(job->target.height) +
                               ", model expects " + std::to_string(r) + "x" + std::to_string(r)};
    }
    job->image_sha = sha256_hex(body_bytes(req));
    {
      std::lock_guard lk(job_mu);
      job->id = "job-" + std::to_string(next_job++);
      jobs.emplace(job->id, job);
      job_queue.push_back(job);
    }
    job_cv.notify_one();
    send_json(res, 202, {{"job_id", job->id}, {"status", "queued"}, {"status_url", "/v1/jobs/" + job->id}});
  }

  void handle_job(const httplib::Request& req, httplib::Response& res) {
    const auto& id = req.path_params.at("job_id");
    std::lock_guard lk(job_mu);
    auto it = jobs.find(id);
    if (it == jobs.end()) throw HttpError{404, "unknown job '" + id + "'"};
    const auto& job = *it->second;
    json body = {{"job_id", job.id},
                 {"model_id", job.model_id},
                 {"status", job.status},
                 {"step", job.step},
                 {"steps", job.opts.steps}};
    if (job.status == "done") body["result"] = job.result;
    if (job.status == "failed") {
      body["error"] = job.error;
      body["error_type"] = job.error_type;
    }
    send_json(res, 200, body);
  }

  void routes() {
    server.new_task_queue = [n = config.workers] { return new httplib::ThreadPool(static_cast<std::size_t>(n)); };
    server.set_payload_max_length(config.max_upload_bytes + 1);
    server.Get("/v1/models", wrap([this](auto& q, auto& s) { handle_models(q, s); }));
    server.Get("/v1/pca/:model_id", wrap([this](auto& q, auto& s) { handle_pca(q, s); }));
    server.Post("/v1/generate", wrap([this](auto& q, auto& s) { handle_generate(q, s); }));
    server.Post("/v1/project", wrap([this](auto& q, auto& s) { handle_project(q, s); }));
    server.Get("/v1/jobs/:job_id", wrap([this](auto& q, auto& s) { handle_job(q, s); }));
    server.Get("/v1/latent/:archive_id", wrap([this](auto& q, auto& s) { handle_latent_get(q, s); }));
    server.Post("/v1/latent", wrap([this](auto& q, auto& s) { handle_latent_post(q, s); }));
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      const char* msg = res.status == 413 ? "payload too large" : res.status == 404 ? "no such route" : "request failed";
      send_json(res, res.status, {{"error", msg}});
    });
    server.set_logger([this](const httplib::Request& req, const httplib::Response& res) {
      if (!log) return;
      const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count();
      json line = {{"ts_ms", now}, {"method", req.method}, {"path", req.path}, {"status", res.status},
                   {"bytes_in", req.body.size()}, {"bytes_out", res.body.size()}};
      if (res.has_header("X-Session-Hash")) line["session_hash"] = res.get_header_value("X-Session-Hash");
      if (res.has_header("X-Archive-Id")) line["archive_id"] = res.get_header_value("X-Archive-Id");
      std::lock_guard lk(log_mu);
      *log << line.dump() << '\n' << std::flush;
    });
  }
};

Service::Service(ServiceConfig config, CheckpointLoader loader)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(loader))) {}

Service::~Service() { stop(); }

int Service::start() {
  auto& im = *impl_;
  if (im.bound_port >= 0) return im.bound_port;
  if (im.config.port == 0) {
    im.bound_port = im.server.bind_to_any_port(im.config.host);
  } else {
    im.bound_port = im.server.bind_to_port(im.config.host, im.config.port) ? im.config.port : -1;
  }
  if (im.bound_port < 0) {
    throw ConfigError("cannot bind " + im.config.host + ":" + std::to_string(im.config.port));
  }
  im.load_thread = std::thread([&im] { im.load_all(); });
  im.job_thread = std::thread([&im] { im.job_worker(); });
  im.listen_thread = std::thread([&im] { im.server.listen_after_bind(); });
  im.server.wait_until_ready();
  return im.bound_port;
}

void Service::wait() {
  if (impl_->listen_thread.joinable()) impl_->listen_thread.join();
}

void Service::stop() {
  auto& im = *impl_;
  if (im.stopping.exchange(true)) return;
  im.server.stop();
  im.job_cv.notify_all();
  if (im.listen_thread.joinable()) im.listen_thread.join();
  if (im.job_thread.joinable()) im.job_thread.join();
  if (im.load_thread.joinable()) im.load_thread.join();
}

void Service::wait_until_loaded() {
  auto& im = *impl_;
  std::unique_lock lk(im.load_mu);
  im.load_cv.wait(lk, [&] { return im.pending_loads == 0 || im.stopping; });
}

int Service::port() const { return impl_->bound_port; }

const ServiceConfig& Service::config() const { return impl_->config; }

}  // namespace noisegate::service
