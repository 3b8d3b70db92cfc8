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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <unistd.h>

#include "doctest.h"
#include "hebbalign/data.hpp"
#include "hebbalign/error.hpp"
#include "test_support.hpp"

using namespace hebbalign;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("hebbalign_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<std::uint8_t> fake_records(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint8_t> bytes;
  for (std::size_t r = 0; r < n; ++r) {
    bytes.push_back(static_cast<std::uint8_t>(rng.uniform_index(10)));
    for (std::size_t j = 0; j < kCifarPixels; ++j) {
      bytes.push_back(static_cast<std::uint8_t>(rng.uniform_index(256)));
    }
  }
  return bytes;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

// Writes a tiny CIFAR-layout directory with `per_file` records per batch.
void write_fake_cifar(const fs::path& dir, std::size_t per_file) {
  for (int i = 1; i <= 5; ++i) {
    write_bytes(dir / ("data_batch_" + std::to_string(i) + ".bin"), fake_records(per_file, i));
  }
  write_bytes(dir / "test_batch.bin", fake_records(per_file, 99));
}

}  // namespace

TEST_CASE("cifar loader: layout, scaling and truncation") {
  TempDir tmp("cifar");
  write_fake_cifar(tmp.path, 20);
  const DatasetPair full = load_cifar10(tmp.path);
  CHECK(full.train.size() == 100);
  CHECK(full.train.inputs.cols() == 3072);
  CHECK(full.val.size() == 20);
  full.train.validate();
  const auto [lo, hi] = std::minmax_element(full.train.inputs.values().begin(),
                                             full.train.inputs.values().end());
  CHECK(*lo >= -1.0);
  CHECK(*hi <= 1.0);
  const auto raw = fake_records(20, 1);
  CHECK(full.train.targets(0, 0) == raw[0]);
  CHECK(full.train.inputs(0, 0) == raw[1] / 127.5 - 1.0);

  // Truncation keeps the first records and spans file boundaries.
  const DatasetPair cut = load_cifar10(tmp.path, 33);
  CHECK(cut.train.size() == 33);
  CHECK(cut.val.size() == 20);
  for (std::size_t i = 0; i < 33 * 3072; ++i) {
    REQUIRE(cut.train.inputs.values()[i] == full.train.inputs.values()[i]);
  }
}

TEST_CASE("cifar loader: round trip reproduces the bytes") {
  const auto bytes = fake_records(7, 3);
  const Dataset ds = decode_cifar_records(bytes, Split::train, std::nullopt, "mem");
  CHECK(encode_cifar_records(ds) == bytes);
  std::vector<std::uint8_t> extremes(kCifarRecordBytes, 0);
  extremes[0] = 9;
  extremes[1] = 255;
  const Dataset e = decode_cifar_records(extremes, Split::val, std::nullopt, "mem");
  CHECK(e.inputs(0, 0) == 1.0);
  CHECK(e.inputs(0, 1) == -1.0);
  CHECK(encode_cifar_records(e) == extremes);
}

TEST_CASE("cifar loader: errors carry byte offsets") {
  auto bytes = fake_records(3, 4);
  bytes[2 * kCifarRecordBytes] = 10;
  try {
    decode_cifar_records(bytes, Split::train, std::nullopt, "corrupt.bin");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("offset 6146") != std::string::npos);
  }
  auto short_bytes = fake_records(2, 5);
  short_bytes.resize(short_bytes.size() - 100);
  try {
    decode_cifar_records(short_bytes, Split::train, std::nullopt, "short.bin");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("offset 3073") != std::string::npos);
  }
  TempDir tmp("cifar_missing");
  CHECK_THROWS_AS(load_cifar10(tmp.path), DataError);
}

TEST_CASE("teacher dataset: determinism and forward oracle") {
  MlpSpec spec{32, {16, 16}, 32, ActivationKind::tanh, false, 1.0};
  const TeacherSpec teacher{spec, 7};
  Rng a(11), b(11);
  const DatasetPair d1 = gen_teacher_dataset(teacher, 200, 50, a);
  const DatasetPair d2 = gen_teacher_dataset(teacher, 200, 50, b);
  CHECK(d1.train.inputs == d2.train.inputs);
  CHECK(d1.train.targets == d2.train.targets);
  CHECK(d1.val.targets == d2.val.targets);
  CHECK(d1.train.inputs.cols() == 32);
  CHECK(d1.train.targets.cols() == 32);
  CHECK(d1.val.size() == 50);

  const Matrix again = forward(make_teacher(teacher), spec, d1.val.inputs).outputs;
  CHECK(testing::max_abs_diff(again, d1.val.targets) < 1e-12);

  Params zero = make_teacher(teacher);
  for (std::size_t i = 0; i < zero.size(); ++i) zero.mutable_value(i) *= 0.0;
  Rng c(12);
  const DatasetPair dz = gen_teacher_dataset(spec, zero, 20, 5, c);
  for (double v : dz.train.targets.values()) CHECK(v == 0.0);
}

TEST_CASE("batch iterator contracts") {
  Rng rng(13);
  Dataset ds;
  ds.inputs = testing::random_matrix(rng, 10, 2);
  ds.targets = testing::random_matrix(rng, 10, 1);

  BatchIterator whole(ds, 10, 1, false);
  const Batch all = whole.next();
  CHECK(all.inputs == ds.inputs);
  CHECK(whole.epoch_ended());

  BatchIterator it(ds, 4, 5);
  CHECK(it.batches_per_epoch() == 3);
  std::map<std::size_t, int> seen;
  std::vector<std::size_t> sizes;
  for (int k = 0; k < 3; ++k) {
    const Batch b = it.next();
    sizes.push_back(b.indices.size());
    for (std::size_t i : b.indices) ++seen[i];
  }
  CHECK(it.epoch_ended());
  CHECK(sizes == std::vector<std::size_t>{4, 4, 2});
  CHECK(seen.size() == 10);
  for (auto& [i, count] : seen) CHECK(count == 1);

  BatchIterator x(ds, 3, 42), y(ds, 3, 42);
  for (int k = 0; k < 20; ++k) CHECK(x.next().indices == y.next().indices);
  CHECK(x.epoch() == 4);
  CHECK(x.epoch_order(1) != x.epoch_order(2));

  CHECK_THROWS_AS(BatchIterator(ds, 11, 1), ParameterError);
}

TEST_CASE("tokenizer bins") {
  CHECK(tokenize_value(-50.0) == 0);
  CHECK(tokenize_value(50.0) == 15);
  CHECK(tokenize_value(0.0) == 8);
  CHECK(tokenize_value(-1e-12) == 7);
  CHECK(tokenize_value(kTokenEdges[3]) == 4);

  Rng rng(14);
  std::vector<int> hist(16, 0);
  const int n = 1000000;
  for (int i = 0; i < n; ++i) ++hist[tokenize_value(rng.normal())];
  for (int h : hist) CHECK(std::abs(h / (n / 16.0) - 1.0) < 0.02);

  const Matrix t = tokenize_sre_input(Matrix::from_rows({{-9, 0, 9}}));
  CHECK(t == Matrix::from_rows({{0, 8, 15}}));
  CHECK_THROWS_AS(tokenize_value(std::nan("")), DataError);
}

TEST_CASE("dataset cache round trip") {
  TempDir tmp("cache");
  Rng rng(15);
  Dataset ds;
  ds.inputs = testing::random_matrix(rng, 6, 3);
  ds.targets = testing::random_matrix(rng, 6, 2);
  ds.split = Split::val;
  const fs::path p = tmp.path / "ds.bin";
  write_dataset_cache(p, ds, 0xdeadbeefULL);
  std::uint64_t seed = 0;
  const Dataset back = read_dataset_cache(p, &seed);
  CHECK(seed == 0xdeadbeefULL);
  CHECK(back.inputs == ds.inputs);
  CHECK(back.targets == ds.targets);
  CHECK(back.split == Split::val);
  CHECK(back.kind == TargetKind::regression);
  CHECK(fs::file_size(p) == 4 + 4 + 4 + 5 * 8 + 8 * (18 + 12));

  // Header bytes are little-endian.
  std::ifstream f(p, std::ios::binary);
  std::vector<unsigned char> head(20);
  f.read(reinterpret_cast<char*>(head.data()), 20);
  CHECK(head[0] == 'H');
  CHECK(head[4] == 1);
  CHECK(head[8] == 2);
  CHECK(head[12] == 6);

  fs::resize_file(p, fs::file_size(p) - 8);
  CHECK_THROWS_AS(read_dataset_cache(p), DataError);
}
