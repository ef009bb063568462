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
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace noisegate {

enum class DType { kF32, kF64, kU8 };

/// Single-file container shared by checkpoints, latent archives, PCA bases,
/// feature statistics and packed datasets.
///
/// Byte layout (all integers little-endian):
///
///   [0, 4)    magic "NGAR"
///   [4, 8)    u32 container version (currently 1)
///   [8, 16)   u64 manifest length M
///   [16, 16+M) UTF-8 JSON manifest, keys sorted
///   [16+M, 24+M) u64 blob length B
///   [24+M, 24+M+B) tensor blob
///
/// The manifest holds `format_version`, `kind`, a free-form `meta` object and
/// a `tensors` index of {name, dtype, shape, offset, nbytes}; offsets are
/// relative to the blob start and tensors appear in manifest order. f32 and
/// f64 payloads are IEEE-754 little-endian.
class Archive {
 public:
  static constexpr std::uint32_t kContainerVersion = 1;

  Archive() = default;
  explicit Archive(std::string kind) : kind_(std::move(kind)) {}

  const std::string& kind() const { return kind_; }
  nlohmann::json& meta() { return meta_; }
  const nlohmann::json& meta() const { return meta_; }

  void put_f32(const std::string& name, std::vector<std::int64_t> shape,
               std::span<const float> values);
  void put_f64(const std::string& name, std::vector<std::int64_t> shape,
               std::span<const double> values);
  void put_u8(const std::string& name, std::vector<std::int64_t> shape,
              std::span<const std::uint8_t> values);

  bool contains(const std::string& name) const;
  DType dtype(const std::string& name) const;
  const std::vector<std::int64_t>& shape(const std::string& name) const;
  std::vector<float> get_f32(const std::string& name) const;
  std::vector<double> get_f64(const std::string& name) const;
  std::vector<std::uint8_t> get_u8(const std::string& name) const;
  /// Tensor names in manifest order.
  std::vector<std::string> names() const;

  std::vector<std::uint8_t> encode() const;
  /// Throws FormatError with the offending byte offset.
  static Archive decode(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

 private:
  struct Entry {
    std::string name;
    DType dtype;
    std::vector<std::int64_t> shape;
    std::vector<std::uint8_t> bytes;  // already little-endian
  };

  const Entry& entry(const std::string& name) const;
  void put(Entry e);

  std::string kind_;
  nlohmann::json meta_ = nlohmann::json::object();
  std::vector<Entry> entries_;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace noisegate
