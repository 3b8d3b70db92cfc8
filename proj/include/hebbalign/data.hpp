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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hebbalign/nn.hpp"
#include "hebbalign/rng.hpp"
#include "hebbalign/tensor.hpp"

namespace hebbalign {

enum class Split { train, val };
enum class TargetKind { regression, classification };

// Classification targets are an n x 1 matrix of class indices, the layout
// softmax_cross_entropy expects.
struct Dataset {
  Matrix inputs;
  Matrix targets;
  TargetKind kind = TargetKind::regression;
  Split split = Split::train;
  std::size_t num_classes = 0;  // classification only

  std::size_t size() const { return inputs.rows(); }
  void validate() const;
};

struct DatasetPair {
  Dataset train;
  Dataset val;
};

inline constexpr std::size_t kCifarPixels = 3072;
inline constexpr std::size_t kCifarRecordBytes = 1 + kCifarPixels;
inline constexpr std::size_t kCifarRecordsPerFile = 10000;

// Reads data_batch_1..5.bin and test_batch.bin. Pixels map to b / 127.5 - 1.
// With max_samples only the first records of each split are read.
DatasetPair load_cifar10(const std::filesystem::path& dir,
                         std::optional<std::size_t> max_samples = std::nullopt);

// One split's worth of records from an in-memory byte buffer. `source`
// names the buffer in error messages.
Dataset decode_cifar_records(const std::vector<std::uint8_t>& bytes, Split split,
                             std::optional<std::size_t> max_samples, const std::string& source);

// Inverse of decode_cifar_records.
std::vector<std::uint8_t> encode_cifar_records(const Dataset& ds);

struct TeacherSpec {
  MlpSpec spec;
  std::uint64_t seed = 0;
};

Params make_teacher(const TeacherSpec& teacher);

// Inputs ~ N(0, I); targets are the frozen teacher's outputs.
DatasetPair gen_teacher_dataset(const MlpSpec& spec, const Params& teacher, std::size_t n_train,
                                std::size_t n_val, Rng& rng);
DatasetPair gen_teacher_dataset(const TeacherSpec& teacher, std::size_t n_train,
                                std::size_t n_val, Rng& rng);

struct Batch {
  Matrix inputs;
  Matrix targets;
  std::vector<std::size_t> indices;
};

Batch gather(const Dataset& ds, const std::vector<std::size_t>& indices);

// Epoch e visits a permutation drawn from derive_seed(seed, e); the last
// batch of an epoch may be short.
class BatchIterator {
 public:
  BatchIterator(const Dataset& ds, std::size_t batch, std::uint64_t seed, bool shuffle = true);

  Batch next();
  std::size_t epoch() const { return epoch_; }
  // True when the previous next() finished an epoch.
  bool epoch_ended() const { return epoch_ended_; }
  std::size_t batches_per_epoch() const;

  std::vector<std::size_t> epoch_order(std::size_t epoch) const;

 private:
  const Dataset* ds_;
  std::size_t batch_;
  std::uint64_t seed_;
  bool shuffle_;
  std::size_t epoch_ = 0;
  std::size_t pos_ = 0;
  bool epoch_ended_ = false;
  std::vector<std::size_t> order_;
};

// In-place Fisher-Yates driven by Rng::uniform_index.
void shuffle_indices(std::vector<std::size_t>& v, Rng& rng);

inline constexpr std::size_t kVocabSize = 16;

// Lower bin edges: standard-normal quantiles at k/16, k = 1..15.
extern const std::array<double, kVocabSize - 1> kTokenEdges;

// Token = number of edges <= x, so bins are closed on the left and 0 maps
// to token 8.
int tokenize_value(double x);
// Row-wise tokenization of an n x d matrix into an n x d matrix of ids.
Matrix tokenize_sre_input(const Matrix& x);

// Flat binary cache, all integers little-endian:
//   "HBDS", u32 version (1), u32 flags (bit 0 classification, bit 1 val split),
//   u64 n, u64 input dim, u64 target dim, u64 num classes, u64 seed,
//   then inputs and targets as row-major float64.
void write_dataset_cache(const std::filesystem::path& path, const Dataset& ds, std::uint64_t seed);
Dataset read_dataset_cache(const std::filesystem::path& path, std::uint64_t* seed = nullptr);

}  // namespace hebbalign
