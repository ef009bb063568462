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

#include "noisegate/data/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "noisegate/container.hpp"
#include "noisegate/data/image_ops.hpp"
#include "noisegate/error.hpp"
#include "noisegate/rng.hpp"

namespace noisegate::data {

DatasetManifest process_entries(const DatasetManifest& manifest, const std::filesystem::path& root,
                                const ProcessOptions& opts) {
  if (!is_power_of_two(opts.target_res)) {
    throw InvalidArgument("target resolution " + std::to_string(opts.target_res) + " is not a power of two");
  }
  if (!opts.sr_backend.empty()) {
    const auto names = sr_backends();
    if (std::find(names.begin(), names.end(), opts.sr_backend) == names.end()) {
      throw ConfigError("no super-resolution backend named '" + opts.sr_backend + "'");
    }
  }
  DatasetManifest out = manifest;
  out.resolution = opts.target_res;
  for (auto& e : out.entries) {
    if (e.pruned || e.failed) continue;
    try {
      auto img = load_image(root / e.raw_path);
      const CropBox box = e.crop_box.value_or(CropBox{0, 0, img.width, img.height});
      ImageTensor result;
      if (opts.sr_backend.empty()) {
        result = crop_and_resample(img, box, opts.target_res);
      } else {
        result = resample(super_resolve_2x(crop(img, box), opts.sr_backend), opts.target_res, opts.target_res);
      }
      e.processed_path = "processed/" + e.id + ".png";
      save_png(root / e.processed_path, result);
    } catch (const InvalidArgument& err) {
      e.failed = true;
      e.error = err.what();
      e.processed_path.clear();
    } catch (const FormatError& err) {
      e.failed = true;
      e.error = err.what();
      e.processed_path.clear();
    }
  }
  out.sort();
  return out;
}

DatasetManifest apply_prune_list(const DatasetManifest& manifest, const std::string& prune_text,
                                 std::vector<std::string>* warnings) {
  DatasetManifest out = manifest;
  std::istringstream in(prune_text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    const auto id_end = line.find_first_of(" \t\r", start);
    const std::string id = line.substr(start, id_end == std::string::npos ? std::string::npos : id_end - start);
    std::string reason;
    if (id_end != std::string::npos) {
      const auto rs = line.find_first_not_of(" \t", id_end);
      if (rs != std::string::npos) {
        reason = line.substr(rs);
        while (!reason.empty() && (reason.back() == '\r' || reason.back() == ' ' || reason.back() == '\t')) {
          reason.pop_back();
        }
      }
    }
    ManifestEntry* e = out.find(id);
    if (!e) {
      if (warnings) warnings->push_back("line " + std::to_string(lineno) + ": unknown id '" + id + "'");
      continue;
    }
    e->pruned = true;
    e->prune_reason = reason.empty() ? "manual" : reason;
  }
  return out;
}

DatasetManifest apply_prune_list_file(const DatasetManifest& manifest, const std::filesystem::path& prune_file,
                                      std::vector<std::string>* warnings) {
  const auto bytes = read_file_bytes(prune_file);
  return apply_prune_list(manifest, std::string(bytes.begin(), bytes.end()), warnings);
}

SelectionReport instance_selection_scores(const Eigen::MatrixXd& embeddings, const std::vector<std::string>& ids,
                                          double keep_fraction, const std::string& embedding_id, double lambda) {
  const auto n = embeddings.rows();
  const auto f = embeddings.cols();
  if (static_cast<Eigen::Index>(ids.size()) != n) throw InvalidArgument("one id per embedding row is required");
  if (n < 2 || f < 1) throw InvalidArgument("instance selection needs at least two non-empty embeddings");
  if (!(keep_fraction >= 0.0 && keep_fraction <= 1.0)) throw InvalidArgument("keep_fraction must lie in [0, 1]");
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ids[a] < ids[b]; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (ids[order[i]] == ids[order[i - 1]]) throw InvalidArgument("duplicate id '" + ids[order[i]] + "'");
  }
  Eigen::MatrixXd x(n, f);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = embeddings.row(order[i]);

  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  cov = 0.5 * (cov + cov.transpose());
  cov.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NumericFailure("embedding covariance is not positive definite after regularization");
  }
  const Eigen::MatrixXd l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  if (!std::isfinite(log_det)) throw NumericFailure("embedding covariance is degenerate after regularization");
  const Eigen::MatrixXd solved = llt.matrixL().solve(centered.transpose());  // L^-1 (x - mu)
  const double norm = static_cast<double>(f) * std::log(2.0 * std::numbers::pi);

  std::vector<double> sorted_scores(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    sorted_scores[i] = -0.5 * (solved.col(i).squaredNorm() + log_det + norm);
  }

  SelectionReport rep;
  rep.scores.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) rep.scores[order[i]] = {ids[order[i]], sorted_scores[i], embedding_id};

  const auto n_drop = static_cast<std::size_t>(std::floor((1.0 - keep_fraction) * static_cast<double>(n) + 1e-9));
  std::vector<std::size_t> rank(static_cast<std::size_t>(n));
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](auto a, auto b) { return sorted_scores[a] < sorted_scores[b]; });
  for (std::size_t r = 0; r < rank.size(); ++r) {
    (r < n_drop ? rep.drop : rep.keep).push_back(ids[order[rank[r]]]);
  }
  std::sort(rep.keep.begin(), rep.keep.end());
  std::sort(rep.drop.begin(), rep.drop.end());
  return rep;
}

DatasetManifest apply_selection(const DatasetManifest& manifest, const SelectionReport& report) {
  DatasetManifest out = manifest;
  for (const auto& id : report.drop) {
    if (auto* e = out.find(id); e && !e->pruned) {
      e->pruned = true;
      e->prune_reason = "instance-selection";
    }
  }
  return out;
}

void pack_dataset(const DatasetManifest& manifest, const std::filesystem::path& root,
                  const std::filesystem::path& out_file) {
  manifest.validate();
  const int r = manifest.resolution;
  auto kept = manifest.kept();
  std::sort(kept.begin(), kept.end(), [](auto a, auto b) { return a->id < b->id; });

  std::vector<std::string> missing;
  std::vector<ImageTensor> images;
  for (const auto* e : kept) {
    const auto path = root / e->processed_path;
    if (e->processed_path.empty() || !std::filesystem::exists(path)) {
      missing.push_back(e->id);
      continue;
    }
    auto img = load_image(path);
    if (img.height != r || img.width != r) {
      missing.push_back(e->id);
      continue;
    }
    images.push_back(std::move(img));
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw ConfigError("no processed " + std::to_string(r) + "x" + std::to_string(r) + " image for: " + list);
  }

  Archive ar("packed-dataset");
  nlohmann::json ids = nlohmann::json::array();
  nlohmann::json entries = nlohmann::json::array();
  std::vector<std::uint8_t> pixels;
  pixels.reserve(kept.size() * static_cast<std::size_t>(r) * r * 3);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    ids.push_back(kept[i]->id);
    entries.push_back({{"id", kept[i]->id}, {"sha256", kept[i]->sha256}, {"class_tags", kept[i]->class_tags}});
    const auto q = quantize(images[i]);
    pixels.insert(pixels.end(), q.begin(), q.end());
  }
  ar.meta()["resolution"] = r;
  ar.meta()["ids"] = ids;
  ar.meta()["entries"] = entries;
  ar.put_u8("images", {static_cast<std::int64_t>(kept.size()), r, r, 3}, pixels);
  ar.save(out_file);
}

PackedDataset PackedDataset::decode(std::span<const std::uint8_t> bytes) {
  const auto ar = Archive::decode(bytes);
  if (ar.kind() != "packed-dataset") throw FormatError("expected a packed-dataset archive, got '" + ar.kind() + "'", 0);
  PackedDataset d;
  d.resolution_ = ar.meta().value("resolution", 0);
  d.ids_ = ar.meta().value("ids", std::vector<std::string>{});
  d.pixels_ = ar.get_u8("images");
  const auto expect = d.ids_.size() * static_cast<std::size_t>(d.resolution_) * d.resolution_ * 3;
  if (d.resolution_ < 1 || d.pixels_.size() != expect) throw FormatError("packed dataset size mismatch", 0);
  return d;
}

PackedDataset PackedDataset::load(const std::filesystem::path& path) { return decode(read_file_bytes(path)); }

ImageTensor PackedDataset::image(std::size_t i) const {
  if (i >= size()) throw InvalidArgument("packed dataset index out of range");
  const std::size_t stride = static_cast<std::size_t>(resolution_) * resolution_ * 3;
  return dequantize(resolution_, resolution_, std::span(pixels_).subspan(i * stride, stride));
}

std::vector<std::size_t> PackedDataset::order(std::uint64_t seed) const { return shuffled_indices(size(), seed); }

}  // namespace noisegate::data
