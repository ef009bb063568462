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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "noisegate/image.hpp"
#include "noisegate/latent.hpp"
#include "noisegate/latent_tools/pca.hpp"

namespace noisegate {
class Generator;
}

namespace noisegate::service {

/// Inclusive bounds enforced on every session.
struct SessionRanges {
  static constexpr double kTruncationMin = -2.0;
  static constexpr double kTruncationMax = 2.0;
  static constexpr double kStrengthMin = 0.0;
  static constexpr double kStrengthMax = 1.0;
  static constexpr int kDirectionMax = 511;
  static constexpr double kWeightMin = -40.0;
  static constexpr double kWeightMax = 40.0;

  nlohmann::json to_json(int num_layers, int pca_k, int max_edits) const;
};

struct StyleMixRequest {
  std::int64_t seed = 0;
  int cutoff = 0;
  double strength = 0.0;
};

/// Everything that determines a served image. Rendering applies
/// seeds -> truncation -> style mix -> PCA edits -> synthesis.
struct EditSession {
  std::string model_id;
  std::int64_t latent_seed = 0;
  std::int64_t noise_seed = 0;
  double truncation = 1.0;
  std::optional<StyleMixRequest> style_mix;
  std::vector<latent_tools::PcaEdit> pca_edits;
  /// Replaces the seed-derived latent (and, for archive_id, the noise).
  std::optional<LatentWPlus> explicit_w_plus;
  std::optional<std::string> archive_id;

  nlohmann::json to_json() const;
  /// SHA-256 of the canonical JSON form.
  std::string hash() const;
};

struct FieldError {
  std::string field;
  std::string message;
  nlohmann::json to_json() const { return {{"field", field}, {"message", message}}; }
};

struct SessionLimits {
  int num_layers = 0;
  int latent_dim = 0;
  int pca_k = SessionRanges::kDirectionMax + 1;
  int max_edits = 10;
};

/// Parses and range-checks in one pass. Returns the session when `errors`
/// stays empty; every problem is reported with its JSON path.
std::optional<EditSession> parse_session(const nlohmann::json& j, std::vector<FieldError>& errors);
void validate_session(const EditSession& s, const SessionLimits& limits, std::vector<FieldError>& errors);

struct RenderResult {
  ImageTensor image;
  LatentWPlus w_plus;
  NoiseBuffers noise;
};

/// `basis` may be null when the session has no PCA edits. `noise_override`
/// replaces the noise drawn from noise_seed.
RenderResult render_session(const Generator& g, const latent_tools::PcaBasis* basis, const EditSession& s,
                            const NoiseBuffers* noise_override = nullptr);

/// Self-describing W+ and noise bundle (container kind "latent-archive").
/// Only buffers of gated-on sites are stored; decoding restores the others
/// as zeros.
struct LatentArchive {
  static constexpr int kFormatVersion = 1;

  std::string model_id;
  ArchConfig arch;
  NoiseGateConfig gates;
  LatentWPlus w_plus;
  NoiseBuffers noise;
  nlohmann::json provenance = nlohmann::json::object();

  std::vector<std::uint8_t> encode() const;
  /// FormatError on container damage or missing/ill-shaped tensors.
  static LatentArchive decode(std::span<const std::uint8_t> bytes);
};

/// Empty when the archive can drive a model with this architecture and gate
/// configuration; otherwise the reason it cannot.
std::string compatibility_problem(const LatentArchive& a, const ArchConfig& arch, const NoiseGateConfig& gates);

}  // namespace noisegate::service
