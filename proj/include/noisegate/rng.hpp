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
#include <random>
#include <vector>

namespace noisegate {

/// SplitMix64 finalizer. Used to expand one user seed into independent
/// sub-stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for sub-stream `stream` of `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded generator whose output is fixed by the C++ standard, so that seeds
/// mean the same thing on every platform and across process restarts.
///
/// Bits come from std::mt19937_64 seeded with splitmix64(seed). Uniforms take
/// the top 53 bits. Normals use the Box-Muller transform on two uniforms
/// (u1 in (0,1], u2 in [0,1)): r = sqrt(-2 ln u1), and both r*cos(2 pi u2)
/// and r*sin(2 pi u2) are emitted in that order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double normal();
  float normal_f() { return static_cast<float>(normal()); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

std::vector<float> normal_vector(std::uint64_t seed, std::size_t n);

/// Fisher-Yates permutation of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

}  // namespace noisegate
