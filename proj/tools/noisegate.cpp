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

// noisegate: command-line front end for training, evaluation, latent tools,
// dataset preparation and the inference service.

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include "noisegate/container.hpp"
#include "noisegate/data/fetch.hpp"
#include "noisegate/data/image_ops.hpp"
#include "noisegate/data/manifest.hpp"
#include "noisegate/data/pipeline.hpp"
#include "noisegate/error.hpp"
#include "noisegate/eval/experiments.hpp"
#include "noisegate/eval/features.hpp"
#include "noisegate/eval/fid.hpp"
#include "noisegate/latent_tools/pca.hpp"
#include "noisegate/latent_tools/project.hpp"
#include "noisegate/model.hpp"
#include "noisegate/service/server.hpp"
#include "noisegate/service/session.hpp"
#include "noisegate/training/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace noisegate;

namespace {

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open " + p.string());
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(p.string() + " is not valid JSON");
  return j;
}

void write_text(const fs::path& p, const std::string& text) {
  write_file_bytes(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void emit(const json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << '\n';
  } else {
    write_text(out, j.dump(2) + "\n");
  }
}

// [N, 3, R, R] float tensor in [-1, 1].
torch::Tensor dataset_tensor(const data::PackedDataset& ds) {
  const auto n = static_cast<std::int64_t>(ds.size());
  const std::int64_t r = ds.resolution();
  auto u8 = torch::from_blob(const_cast<std::uint8_t*>(ds.raw().data()), {n, r, r, 3}, torch::kUInt8);
  return u8.permute({0, 3, 1, 2}).to(torch::kFloat32).div(127.5).sub(1.0).contiguous();
}

eval::FeatureStats reference_stats(const fs::path& path, const eval::FeatureExtractor& extractor) {
  const auto ar = Archive::load(path);
  if (ar.kind() == "feature-stats") {
    auto s = eval::load_stats(path);
    if (s.extractor != extractor.id()) {
      throw ConfigError("reference stats use extractor '" + s.extractor + "', requested '" + extractor.id() + "'");
    }
    return s;
  }
  if (ar.kind() == "packed-dataset") return eval::image_stats(dataset_tensor(data::PackedDataset::load(path)), extractor);
  throw ConfigError(path.string() + " is neither feature stats nor a packed dataset");
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    if (dash != std::string::npos && dash > 0) {
      const auto lo = std::stoull(item.substr(0, dash));
      const auto hi = std::stoull(item.substr(dash + 1));
      for (auto s = lo; s <= hi; ++s) out.push_back(s);
    } else if (!item.empty()) {
      out.push_back(std::stoull(item));
    }
  }
  if (out.empty()) throw InvalidArgument("empty seed list '" + text + "'");
  return out;
}

ImageTensor tile(const std::vector<std::vector<ImageTensor>>& grid) {
  const int rows = static_cast<int>(grid.size());
  const int cols = static_cast<int>(grid.front().size());
  const int h = grid[0][0].height, w = grid[0][0].width;
  ImageTensor out(rows * h, cols * w);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < 3; ++c) out.at(i * h + y, j * w + x, c) = grid[i][j].at(y, x, c);
  return out;
}

volatile std::sig_atomic_t g_stop_requested = 0;

void on_signal(int) { g_stop_requested = 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"noise-gated StyleGAN2 toolkit"};
  app.require_subcommand(1);
  std::function<void()> action;

  // ---- train ----------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train a generator on a packed dataset");
  struct {
    std::string data, out, gates = "fine-only", config, arch;
    int latent_dim = 64, channel_max = 64, mapping_layers = 2;
    std::int64_t total_images = -1;
    int batch = -1;
    std::uint64_t seed = 0;
    bool seed_set = false;
  } tr;
  train->add_option("--data", tr.data, "packed dataset (.ngar)")->required();
  train->add_option("--out", tr.out, "output directory")->required();
  train->add_option("--gates", tr.gates, "noise gate spec, e.g. fine-only, all-on, off:4-32");
  train->add_option("--config", tr.config, "training config JSON");
  train->add_option("--arch", tr.arch, "architecture JSON (resolution comes from the dataset otherwise)");
  train->add_option("--latent-dim", tr.latent_dim);
  train->add_option("--channel-max", tr.channel_max);
  train->add_option("--mapping-layers", tr.mapping_layers);
  train->add_option("--total-images", tr.total_images);
  train->add_option("--batch", tr.batch);
  auto* seed_opt = train->add_option("--seed", tr.seed);
  train->callback([&] {
    action = [&, seed_opt] {
      const auto ds = data::PackedDataset::load(tr.data);
      ArchConfig arch;
      if (!tr.arch.empty()) {
        arch = ArchConfig::from_json(read_json(tr.arch));
      } else {
        arch.resolution = ds.resolution();
        arch.latent_dim = tr.latent_dim;
        arch.channel_max = tr.channel_max;
        arch.mapping_layers = tr.mapping_layers;
      }
      if (arch.resolution != ds.resolution()) {
        throw ConfigError("architecture resolution " + std::to_string(arch.resolution) + " differs from dataset " +
                          std::to_string(ds.resolution()));
      }
      arch.validate();
      auto cfg = tr.config.empty() ? training::TrainConfig{} : training::TrainConfig::from_json(read_json(tr.config));
      if (tr.total_images > 0) cfg.total_images = tr.total_images;
      if (tr.batch > 0) cfg.batch_size = tr.batch;
      if (seed_opt->count()) cfg.seed = tr.seed;
      cfg.validate();
      const auto gates = NoiseGateConfig::parse(tr.gates, arch);
      fs::create_directories(tr.out);
      write_text(fs::path(tr.out) / "train_config.json",
                 json{{"arch", arch.to_json()}, {"gates", gates.to_string()}, {"train", cfg.to_json()}}.dump(2) + "\n");
      auto result = training::train_loop(arch, gates, cfg, dataset_tensor(ds), tr.out,
                                         [](const training::Trainer& t, int step) {
                                           std::cerr << "snapshot at step " << step << " (" << t.images_seen()
                                                     << " images)\n";
                                         });
      std::cout << result.final_checkpoint.string() << '\n';
    };
  });

  // ---- generate -------------------------------------------------------------
  auto* gen = app.add_subcommand("generate", "render images from seeds or an edit session");
  struct {
    std::string checkpoint, out = "out.png", session, basis;
    std::string seeds = "0";
    std::int64_t noise_seed = 0;
    double psi = 1.0;
  } ge;
  gen->add_option("--checkpoint", ge.checkpoint)->required();
  gen->add_option("--seeds", ge.seeds, "latent seeds, e.g. 0-7,12");
  gen->add_option("--noise-seed", ge.noise_seed);
  gen->add_option("--psi", ge.psi);
  gen->add_option("--session", ge.session, "edit session JSON (overrides seeds)");
  gen->add_option("--basis", ge.basis, "PCA basis for session edits");
  gen->add_option("--out", ge.out, "PNG path; several seeds produce a horizontal strip");
  gen->callback([&] {
    action = [&] {
      const auto g = load_checkpoint(ge.checkpoint).generator;
      if (!ge.session.empty()) {
        std::vector<service::FieldError> errors;
        auto s = service::parse_session(read_json(ge.session), errors);
        if (s) {
          service::validate_session(*s, {g->num_layers(), g->arch().latent_dim, g->arch().latent_dim, 1 << 20}, errors);
        }
        if (!errors.empty()) {
          std::string msg = "invalid session:";
          for (const auto& e : errors) msg += "\n  " + e.field + ": " + e.message;
          throw InvalidArgument(msg);
        }
        std::optional<latent_tools::PcaBasis> basis;
        if (!s->pca_edits.empty()) {
          if (ge.basis.empty()) throw ConfigError("session has PCA edits; pass --basis");
          basis = latent_tools::load_pca_basis(ge.basis);
        }
        save_png(ge.out, service::render_session(*g, basis ? &*basis : nullptr, *s).image);
        return;
      }
      std::vector<std::vector<ImageTensor>> row(1);
      for (auto seed : parse_seeds(ge.seeds)) {
        row[0].push_back(g->generate(seed, static_cast<std::uint64_t>(ge.noise_seed), static_cast<float>(ge.psi)).image);
      }
      save_png(ge.out, tile(row));
    };
  });

  // ---- eval -----------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "FID experiments");
  ev->require_subcommand(1);
  struct {
    std::string checkpoint, reference, data, out, spec, mode = "random";
    std::string extractor = "random-conv";
    int n = 2000, batch = 32;
    std::uint64_t latent_seed = 0, seed_a = 1, seed_b = 2;
    double psi = 1.0;
  } eo;
  auto* fid = ev->add_subcommand("fid", "FID of generated samples against a reference");
  fid->add_option("--checkpoint", eo.checkpoint)->required();
  fid->add_option("--reference", eo.reference, "feature stats or packed dataset")->required();
  fid->add_option("--n", eo.n);
  fid->add_option("--mode", eo.mode, "constant | random");
  fid->add_option("--latent-seed", eo.latent_seed);
  fid->add_option("--noise-seed", eo.seed_a);
  fid->add_option("--psi", eo.psi);
  fid->add_option("--extractor", eo.extractor);
  fid->add_option("--batch", eo.batch);
  fid->add_option("--out", eo.out);
  fid->callback([&] {
    action = [&] {
      const auto ex = eval::make_extractor(eo.extractor);
      const auto g = load_checkpoint(eo.checkpoint).generator;
      eval::SampleSpec spec;
      spec.n = eo.n;
      spec.latent_seed = eo.latent_seed;
      spec.mode = eval::parse_noise_mode(eo.mode);
      spec.noise_seed = eo.seed_a;
      spec.psi = static_cast<float>(eo.psi);
      spec.batch = eo.batch;
      const double d = eval::frechet_distance(eval::generated_stats(*g, *ex, spec), reference_stats(eo.reference, *ex));
      emit({{"fid", d}, {"n", eo.n}, {"mode", eo.mode}, {"extractor", ex->id()}, {"gates", g->gates().to_string()}},
           eo.out);
    };
  });
  auto* stats = ev->add_subcommand("stats", "feature statistics of a packed dataset");
  stats->add_option("--data", eo.data)->required();
  stats->add_option("--extractor", eo.extractor);
  stats->add_option("--out", eo.out)->required();
  stats->callback([&] {
    action = [&] {
      const auto ex = eval::make_extractor(eo.extractor);
      eval::save_stats(eo.out, eval::image_stats(dataset_tensor(data::PackedDataset::load(eo.data)), *ex));
    };
  });
  auto* ns = ev->add_subcommand("noise-sensitivity", "FID between two noise draws over the same latents");
  ns->add_option("--checkpoint", eo.checkpoint)->required();
  ns->add_option("--n", eo.n);
  ns->add_option("--seed-a", eo.seed_a);
  ns->add_option("--seed-b", eo.seed_b);
  ns->add_option("--latent-seed", eo.latent_seed);
  ns->add_option("--extractor", eo.extractor);
  ns->add_option("--batch", eo.batch);
  ns->add_option("--out", eo.out);
  ns->callback([&] {
    action = [&] {
      const auto ex = eval::make_extractor(eo.extractor);
      const auto g = load_checkpoint(eo.checkpoint).generator;
      const double d = eval::noise_sensitivity(*g, *ex, eo.n, eo.seed_a, eo.seed_b, eo.latent_seed, eo.batch);
      emit({{"fid", d}, {"n", eo.n}, {"extractor", ex->id()}, {"gates", g->gates().to_string()}}, eo.out);
    };
  });
  auto* abl = ev->add_subcommand("ablation", "run an ablation table");
  abl->add_option("--spec", eo.spec)->required();
  abl->add_option("--reference", eo.reference, "overrides the spec's reference");
  abl->add_option("--out", eo.out);
  abl->callback([&] {
    action = [&] {
      const auto spec = eval::AblationSpec::from_json(read_json(eo.spec));
      const auto base = fs::path(eo.spec).parent_path();
      auto resolve_path = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
      const auto ex = eval::make_extractor(spec.extractor);
      const auto ref = reference_stats(eo.reference.empty() ? resolve_path(spec.reference) : fs::path(eo.reference), *ex);
      const auto table = eval::run_ablation(spec, ref, [&](const std::string& ck) {
        return std::shared_ptr<const Generator>(load_checkpoint(resolve_path(ck)).generator);
      });
      std::cerr << table.to_text();
      emit(table.to_json(), eo.out);
    };
  });

  // ---- latent ---------------------------------------------------------------
  auto* lat = app.add_subcommand("latent", "PCA, projection and style-mix grids");
  lat->require_subcommand(1);
  struct {
    std::string checkpoint, out, target, archive, image, trace, options, coarse = "0-3", fine = "4-7";
    int n = 10000, k = -1, steps = 1000, cutoff = 4;
    std::uint64_t seed = 0, noise_seed = 0;
    double psi = 1.0;
  } lo;
  auto* pca = lat->add_subcommand("pca", "PCA basis of W");
  pca->add_option("--checkpoint", lo.checkpoint)->required();
  pca->add_option("--n", lo.n);
  pca->add_option("--k", lo.k);
  pca->add_option("--seed", lo.seed);
  pca->add_option("--out", lo.out)->required();
  pca->callback([&] {
    action = [&] {
      const auto g = load_checkpoint(lo.checkpoint).generator;
      const auto b = latent_tools::compute_pca_basis(*g, lo.n, lo.seed, lo.k);
      latent_tools::save_pca_basis(lo.out, b);
      std::vector<double> v(b.variances.data(), b.variances.data() + std::min(10, b.k()));
      std::cout << json{{"k", b.k()}, {"top_variances", v}}.dump() << '\n';
    };
  });
  auto* proj = lat->add_subcommand("project", "invert an image into W+ and noise");
  proj->add_option("--checkpoint", lo.checkpoint)->required();
  proj->add_option("--target", lo.target)->required();
  proj->add_option("--options", lo.options, "projection options JSON");
  proj->add_option("--steps", lo.steps);
  proj->add_option("--noise-seed", lo.noise_seed);
  proj->add_option("--archive", lo.archive, "latent archive output")->required();
  proj->add_option("--image", lo.image, "re-rendered PNG output");
  proj->add_option("--trace", lo.trace, "loss trace CSV output");
  proj->callback([&] {
    action = [&] {
      const auto g = load_checkpoint(lo.checkpoint).generator;
      auto opts = lo.options.empty() ? latent_tools::ProjectOptions{}
                                     : latent_tools::ProjectOptions::from_json(read_json(lo.options));
      if (proj->get_option("--steps")->count()) opts.steps = lo.steps;
      if (proj->get_option("--noise-seed")->count()) opts.noise_seed = lo.noise_seed;
      const auto target = load_image(lo.target);
      const auto r = latent_tools::project(target, *g, opts);
      service::LatentArchive a{fs::path(lo.checkpoint).stem().string(), g->arch(), g->gates(), r.w_plus, r.noise,
                               {{"options", opts.to_json()}}};
      const auto bytes = a.encode();
      write_file_bytes(lo.archive, bytes);
      if (!lo.image.empty()) save_png(lo.image, r.final_image);
      if (!lo.trace.empty()) {
        std::string csv = "step,loss\n";
        for (const auto& [s, l] : r.loss_trace) csv += std::to_string(s) + "," + std::to_string(l) + "\n";
        write_text(lo.trace, csv);
      }
      std::cout << json{{"best_step", r.best_step}, {"best_loss", r.best_loss},
                        {"mse", pixel_mse(r.final_image, target)}}.dump()
                << '\n';
    };
  });
  auto* grid = lat->add_subcommand("mix-grid", "style-mix grid of coarse x fine seeds");
  grid->add_option("--checkpoint", lo.checkpoint)->required();
  grid->add_option("--coarse", lo.coarse);
  grid->add_option("--fine", lo.fine);
  grid->add_option("--cutoff", lo.cutoff);
  grid->add_option("--noise-seed", lo.noise_seed);
  grid->add_option("--psi", lo.psi);
  grid->add_option("--out", lo.out)->required();
  grid->callback([&] {
    action = [&] {
      const auto g = load_checkpoint(lo.checkpoint).generator;
      auto to_w = [&](const std::string& list) {
        std::vector<LatentWPlus> out;
        for (auto s : parse_seeds(list)) out.push_back(g->generate(s, 0, static_cast<float>(lo.psi)).w_plus);
        return out;
      };
      save_png(lo.out, tile(latent_tools::mix_grid(*g, to_w(lo.coarse), to_w(lo.fine), lo.cutoff,
                                                   sample_noise(lo.noise_seed, g->arch()))));
    };
  });

  // ---- data -----------------------------------------------------------------
  auto* dat = app.add_subcommand("data", "dataset preparation");
  dat->require_subcommand(1);
  struct {
    std::string api_base, crop, root = "dataset", in, out, list, sr_backend, extractor = "random-conv", report;
    int resolution = 256, limit = -1, retries = 3;
    double keep = 1.0;
  } dop;
  auto manifest_path = [&] { return fs::path(dop.root) / "manifest.json"; };
  auto* fetch = dat->add_subcommand("fetch", "download the card catalog and raw images");
  fetch->add_option("--api-base", dop.api_base, "http(s) API base or local mirror directory")->required();
  fetch->add_option("--root", dop.root);
  fetch->add_option("--resolution", dop.resolution);
  fetch->add_option("--limit", dop.limit);
  fetch->add_option("--retries", dop.retries);
  fetch->add_option("--crop", dop.crop, "art crop box x,y,w,h in card pixels");
  fetch->callback([&] {
    action = [&] {
      data::FetchOptions o;
      o.api_base = dop.api_base;
      o.out_dir = dop.root;
      o.resolution = dop.resolution;
      o.limit = dop.limit;
      o.max_retries = dop.retries;
      if (!dop.crop.empty()) {
        data::CropBox b;
        char c1 = 0, c2 = 0, c3 = 0;
        std::istringstream in(dop.crop);
        if (!(in >> b.x >> c1 >> b.y >> c2 >> b.width >> c3 >> b.height) || c1 != ',' || c2 != ',' || c3 != ',') {
          throw InvalidArgument("--crop expects x,y,w,h, got '" + dop.crop + "'");
        }
        o.default_crop = b;
      }
      data::FetchReport rep;
      const auto m = data::fetch_catalog(o, &rep);
      std::cout << json{{"entries", m.entries.size()}, {"downloaded", rep.downloaded}, {"reused", rep.reused},
                        {"failed", rep.failed}}.dump()
                << '\n';
    };
  });
  auto* cropc = dat->add_subcommand("crop", "crop and resample raw images into processed/");
  cropc->add_option("--root", dop.root);
  cropc->add_option("--resolution", dop.resolution);
  cropc->add_option("--sr-backend", dop.sr_backend, "upsample 2x with this backend before resampling");
  cropc->callback([&] {
    action = [&] {
      auto m = data::DatasetManifest::load(manifest_path());
      m = data::process_entries(m, dop.root, {dop.resolution, dop.sr_backend});
      m.save(manifest_path());
      int failed = 0;
      for (const auto& e : m.entries) failed += e.failed;
      std::cout << json{{"kept", m.kept().size()}, {"failed", failed}}.dump() << '\n';
    };
  });
  auto* sr = dat->add_subcommand("sr", "2x super-resolution of one image");
  sr->add_option("--in", dop.in)->required();
  sr->add_option("--out", dop.out)->required();
  sr->add_option("--backend", dop.sr_backend);
  sr->callback([&] {
    action = [&] {
      save_png(dop.out, data::super_resolve_2x(load_image(dop.in), dop.sr_backend.empty() ? "bicubic" : dop.sr_backend));
    };
  });
  auto* prune = dat->add_subcommand("prune", "apply a prune list (\"<id> <reason>\" per line)");
  prune->add_option("--root", dop.root);
  prune->add_option("--list", dop.list)->required();
  prune->callback([&] {
    action = [&] {
      std::vector<std::string> warnings;
      auto m = data::apply_prune_list_file(data::DatasetManifest::load(manifest_path()), dop.list, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
      m.save(manifest_path());
      std::cout << json{{"kept", m.kept().size()}}.dump() << '\n';
    };
  });
  auto* sel = dat->add_subcommand("select", "instance selection on processed images");
  sel->add_option("--root", dop.root);
  sel->add_option("--keep", dop.keep, "fraction to keep")->required();
  sel->add_option("--extractor", dop.extractor);
  sel->add_option("--report", dop.report, "scores JSON output");
  sel->callback([&] {
    action = [&] {
      auto m = data::DatasetManifest::load(manifest_path());
      std::vector<std::string> ids;
      std::vector<ImageTensor> images;
      for (const auto* e : m.kept()) {
        if (e->processed_path.empty()) throw ConfigError("entry " + e->id + " has not been processed; run data crop");
        ids.push_back(e->id);
        images.push_back(load_image(fs::path(dop.root) / e->processed_path));
      }
      const auto ex = eval::make_extractor(dop.extractor);
      const auto rep = data::instance_selection_scores(eval::extract_features(images, *ex), ids, dop.keep, ex->id());
      m = data::apply_selection(m, rep);
      m.save(manifest_path());
      if (!dop.report.empty()) {
        auto scores = json::array();
        for (const auto& s : rep.scores) scores.push_back({{"id", s.id}, {"density_score", s.density_score}});
        write_text(dop.report, json{{"embedding_id", ex->id()}, {"scores", scores}, {"drop", rep.drop}}.dump(2) + "\n");
      }
      std::cout << json{{"kept", rep.keep.size()}, {"dropped", rep.drop.size()}}.dump() << '\n';
    };
  });
  auto* pack = dat->add_subcommand("pack", "pack processed images into one container");
  pack->add_option("--root", dop.root);
  pack->add_option("--out", dop.out)->required();
  pack->callback([&] {
    action = [&] {
      const auto m = data::DatasetManifest::load(manifest_path());
      data::pack_dataset(m, dop.root, dop.out);
      std::cout << json{{"images", m.kept().size()}, {"resolution", m.resolution}}.dump() << '\n';
    };
  });

  // ---- serve ----------------------------------------------------------------
  auto* serve = app.add_subcommand("serve", "run the HTTP inference service");
  struct {
    std::string config, model_dir;
    int port = -1;
  } so;
  serve->add_option("--config", so.config, "service config JSON");
  serve->add_option("--model-dir", so.model_dir);
  serve->add_option("--port", so.port);
  serve->callback([&] {
    action = [&] {
      auto cfg = so.config.empty() ? service::ServiceConfig{} : service::ServiceConfig::load(so.config);
      cfg.apply_env([](const char* k) { return std::getenv(k); });
      if (!so.model_dir.empty()) cfg.model_dir = so.model_dir;
      if (so.port >= 0) cfg.port = so.port;
      cfg.validate();
      service::Service svc(cfg);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      const int port = svc.start();
      std::cerr << "listening on " << cfg.host << ":" << port << '\n';
      while (!g_stop_requested) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      svc.stop();
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (action) action();
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return 3;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 4;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
