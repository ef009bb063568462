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

#include "noisegate/container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#include "noisegate/error.hpp"

namespace noisegate {
namespace {

constexpr char kMagic[4] = {'N', 'G', 'A', 'R'};

std::string dtype_name(DType d) {
  switch (d) {
    case DType::kF32:
      return "f32";
    case DType::kF64:
      return "f64";
    case DType::kU8:
      break;
  }
  return "u8";
}

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::kF32:
      return 4;
    case DType::kF64:
      return 8;
    case DType::kU8:
      break;
  }
  return 1;
}

std::uint64_t element_count(const std::vector<std::int64_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::uint64_t{1},
                         [](std::uint64_t acc, std::int64_t d) { return acc * static_cast<std::uint64_t>(d); });
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T read_le(std::span<const std::uint8_t> bytes, std::size_t pos) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[pos + i]) << (8 * i);
  return v;
}

void check_shape(const std::string& name, const std::vector<std::int64_t>& shape, std::size_t count) {
  for (auto d : shape) {
    if (d < 0) throw InvalidArgument("tensor '" + name + "' has a negative dimension");
  }
  if (element_count(shape) != count) {
    throw InvalidArgument("tensor '" + name + "' shape does not match value count");
  }
}

}  // namespace

void Archive::put(Entry e) {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& x) { return x.name == e.name; });
  if (it != entries_.end()) {
    *it = std::move(e);
  } else {
    entries_.push_back(std::move(e));
  }
}

void Archive::put_f32(const std::string& name, std::vector<std::int64_t> shape,
                      std::span<const float> values) {
  check_shape(name, shape, values.size());
  Entry e{name, DType::kF32, std::move(shape), {}};
  e.bytes.reserve(values.size() * 4);
  for (float f : values) append_le(e.bytes, std::bit_cast<std::uint32_t>(f));
  put(std::move(e));
}

void Archive::put_f64(const std::string& name, std::vector<std::int64_t> shape,
                      std::span<const double> values) {
  check_shape(name, shape, values.size());
  Entry e{name, DType::kF64, std::move(shape), {}};
  e.bytes.reserve(values.size() * 8);
  for (double f : values) append_le(e.bytes, std::bit_cast<std::uint64_t>(f));
  put(std::move(e));
}

void Archive::put_u8(const std::string& name, std::vector<std::int64_t> shape,
                     std::span<const std::uint8_t> values) {
  check_shape(name, shape, values.size());
  put(Entry{name, DType::kU8, std::move(shape), std::vector<std::uint8_t>(values.begin(), values.end())});
}

const Archive::Entry& Archive::entry(const std::string& name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& x) { return x.name == name; });
  if (it == entries_.end()) throw InvalidArgument("archive has no tensor named '" + name + "'");
  return *it;
}

bool Archive::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& x) { return x.name == name; });
}

DType Archive::dtype(const std::string& name) const { return entry(name).dtype; }

const std::vector<std::int64_t>& Archive::shape(const std::string& name) const { return entry(name).shape; }

std::vector<float> Archive::get_f32(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dtype != DType::kF32) throw InvalidArgument("tensor '" + name + "' is not f32");
  std::vector<float> out(e.bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::bit_cast<float>(read_le<std::uint32_t>(e.bytes, 4 * i));
  }
  return out;
}

std::vector<double> Archive::get_f64(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dtype != DType::kF64) throw InvalidArgument("tensor '" + name + "' is not f64");
  std::vector<double> out(e.bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::bit_cast<double>(read_le<std::uint64_t>(e.bytes, 8 * i));
  }
  return out;
}

std::vector<std::uint8_t> Archive::get_u8(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dtype != DType::kU8) throw InvalidArgument("tensor '" + name + "' is not u8");
  return e.bytes;
}

std::vector<std::string> Archive::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

std::vector<std::uint8_t> Archive::encode() const {
  nlohmann::json manifest;
  manifest["format_version"] = kContainerVersion;
  manifest["kind"] = kind_;
  manifest["meta"] = meta_;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& e : entries_) {
    manifest["tensors"].push_back({{"name", e.name},
                                   {"dtype", dtype_name(e.dtype)},
                                   {"shape", e.shape},
                                   {"offset", offset},
                                   {"nbytes", e.bytes.size()}});
    offset += e.bytes.size();
  }
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  append_le<std::uint32_t>(out, kContainerVersion);
  append_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  append_le<std::uint64_t>(out, offset);
  for (const auto& e : entries_) out.insert(out.end(), e.bytes.begin(), e.bytes.end());
  return out;
}

Archive Archive::decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw FormatError("container header truncated", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad container magic", 0);
  const auto version = read_le<std::uint32_t>(bytes, 4);
  if (version != kContainerVersion) {
    throw FormatError("unsupported container version " + std::to_string(version), 4);
  }
  const auto manifest_len = read_le<std::uint64_t>(bytes, 8);
  if (manifest_len > bytes.size() - 16) throw FormatError("manifest extends past end of data", bytes.size());

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(manifest_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what(), 16 + e.byte);
  }

  const std::uint64_t blob_len_pos = 16 + manifest_len;
  if (bytes.size() < blob_len_pos + 8) throw FormatError("blob length field truncated", bytes.size());
  const auto blob_len = read_le<std::uint64_t>(bytes, blob_len_pos);
  const std::uint64_t blob_start = blob_len_pos + 8;
  if (bytes.size() - blob_start != blob_len) {
    throw FormatError("blob holds " + std::to_string(bytes.size() - blob_start) + " bytes, manifest declares " +
                          std::to_string(blob_len),
                      bytes.size());
  }

  Archive out;
  try {
    if (manifest.at("format_version").get<std::uint32_t>() != kContainerVersion) {
      throw FormatError("manifest format_version mismatch", 16);
    }
    out.kind_ = manifest.at("kind").get<std::string>();
    out.meta_ = manifest.value("meta", nlohmann::json::object());
    for (const auto& t : manifest.at("tensors")) {
      Entry e;
      e.name = t.at("name").get<std::string>();
      const auto dt = t.at("dtype").get<std::string>();
      if (dt == "f32") {
        e.dtype = DType::kF32;
      } else if (dt == "f64") {
        e.dtype = DType::kF64;
      } else if (dt == "u8") {
        e.dtype = DType::kU8;
      } else {
        throw FormatError("tensor '" + e.name + "' has unknown dtype " + dt, 16);
      }
      e.shape = t.at("shape").get<std::vector<std::int64_t>>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      const auto nbytes = t.at("nbytes").get<std::uint64_t>();
      if (nbytes != element_count(e.shape) * dtype_size(e.dtype)) {
        throw FormatError("tensor '" + e.name + "' byte size does not match its shape", blob_start + offset);
      }
      if (offset > blob_len || nbytes > blob_len - offset) {
        throw FormatError("tensor '" + e.name + "' extends past end of blob", blob_start + blob_len);
      }
      const auto* p = bytes.data() + blob_start + offset;
      e.bytes.assign(p, p + nbytes);
      out.entries_.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest schema error: ") + e.what(), 16);
  }
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Readers see either the old file or the complete new one.
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ConfigError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void Archive::save(const std::filesystem::path& path) const { write_file_bytes(path, encode()); }

Archive Archive::load(const std::filesystem::path& path) { return decode(read_file_bytes(path)); }

}  // namespace noisegate
