// Copyright 2026 The hebbalign Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "hebbalign/tensor.hpp"

namespace hebbalign {

// Seedable generator with a fully specified output sequence.
//
// Bits come from std::mt19937_64, whose sequence the C++ standard fixes.
// Uniforms take the top 53 bits: u = (x >> 11) * 2^-53, in [0, 1).
// Normals use the Box-Muller transform on two uniforms (u1 mapped to (0, 1])
// and cache the second variate. std::normal_distribution is deliberately not
// used because its algorithm differs between standard libraries. Ports in other
// languages reproduce the statistics, and bit-for-bit sequences as long as their
// libm log/sin/cos agree.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  double normal();                        // N(0, 1)
  // Unbiased integer in [0, n) by rejection.
  std::uint64_t uniform_index(std::uint64_t n);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// i.i.d. N(mean, std^2) entries. std == 0 returns a constant matrix without
// consuming randomness. Throws ParameterError for negative std.
Matrix gaussian_sample(Rng& rng, std::size_t rows, std::size_t cols, double mean, double std);
Matrix uniform_sample(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi);

// splitmix64 finalizer; used to derive independent seeds.
std::uint64_t mix64(std::uint64_t x);
// Seed for sub-stream `index` of a run seeded with `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);
// 64-bit FNV-1a, stable across platforms.
std::uint64_t fnv1a64(std::string_view text);

}  // namespace hebbalign
