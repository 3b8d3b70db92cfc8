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

#include "hebbalign/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "hebbalign/error.hpp"

namespace hebbalign {

namespace {

constexpr char kCacheMagic[4] = {'H', 'B', 'D', 'S'};
constexpr std::uint32_t kCacheVersion = 1;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string() + " (byte offset 0)");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Little-endian encode/decode independent of host order.
template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint64_t bits;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<std::uint64_t>(v);
  } else {
    bits = static_cast<std::uint64_t>(v);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t& pos, const std::string& source) {
  if (in.size() < pos + sizeof(T)) {
    throw DataError(source + ": truncated at byte offset " + std::to_string(pos) + " (file has " +
                    std::to_string(in.size()) + " bytes)");
  }
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
  pos += sizeof(T);
  if constexpr (std::is_same_v<T, double>) {
    return std::bit_cast<double>(bits);
  } else {
    return static_cast<T>(bits);
  }
}

Dataset concat(std::vector<Dataset> parts, Split split) {
  std::size_t n = 0;
  for (const auto& p : parts) n += p.size();
  Dataset out;
  out.kind = TargetKind::classification;
  out.split = split;
  out.num_classes = 10;
  out.inputs = Matrix(n, kCifarPixels);
  out.targets = Matrix(n, 1);
  std::size_t row = 0;
  for (const auto& p : parts) {
    std::copy(p.inputs.values().begin(), p.inputs.values().end(),
              out.inputs.values().begin() + row * kCifarPixels);
    std::copy(p.targets.values().begin(), p.targets.values().end(), out.targets.values().begin() + row);
    row += p.size();
  }
  return out;
}

}  // namespace

void Dataset::validate() const {
  if (inputs.rows() == 0) throw DataError("dataset is empty");
  if (targets.rows() != inputs.rows()) {
    throw DataError("dataset has " + std::to_string(inputs.rows()) + " inputs but " +
                    std::to_string(targets.rows()) + " targets");
  }
  if (kind == TargetKind::classification) {
    if (targets.cols() != 1) throw DataError("classification targets must be a single column");
    for (double t : targets.values()) {
      if (t < 0 || t >= static_cast<double>(num_classes) || t != std::floor(t)) {
        throw DataError("class index " + std::to_string(t) + " outside [0, " +
                        std::to_string(num_classes) + ")");
      }
    }
  }
}

Dataset decode_cifar_records(const std::vector<std::uint8_t>& bytes, Split split,
                             std::optional<std::size_t> max_samples, const std::string& source) {
  std::size_t n = bytes.size() / kCifarRecordBytes;
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw DataError(source + ": short record at byte offset " +
                    std::to_string(n * kCifarRecordBytes) + " (file has " +
                    std::to_string(bytes.size()) + " bytes, records are " +
                    std::to_string(kCifarRecordBytes) + ")");
  }
  if (max_samples) n = std::min(n, *max_samples);
  Dataset ds;
  ds.kind = TargetKind::classification;
  ds.split = split;
  ds.num_classes = 10;
  ds.inputs = Matrix(n, kCifarPixels);
  ds.targets = Matrix(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t off = r * kCifarRecordBytes;
    const std::uint8_t label = bytes[off];
    if (label > 9) {
      throw DataError(source + ": corrupt record " + std::to_string(r) + " at byte offset " +
                      std::to_string(off) + ": label " + std::to_string(label) + " > 9");
    }
    ds.targets(r, 0) = label;
    auto row = ds.inputs.row_span(r);
    for (std::size_t j = 0; j < kCifarPixels; ++j) row[j] = bytes[off + 1 + j] / 127.5 - 1.0;
  }
  return ds;
}

std::vector<std::uint8_t> encode_cifar_records(const Dataset& ds) {
  if (ds.inputs.cols() != kCifarPixels || ds.targets.cols() != 1) {
    throw ShapeError("encode_cifar_records: expected n x 3072 inputs and n x 1 labels");
  }
  std::vector<std::uint8_t> out;
  out.reserve(ds.size() * kCifarRecordBytes);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    out.push_back(static_cast<std::uint8_t>(ds.targets(r, 0)));
    for (double x : ds.inputs.row_span(r)) {
      const long b = std::lround((x + 1.0) * 127.5);
      out.push_back(static_cast<std::uint8_t>(std::clamp(b, 0L, 255L)));
    }
  }
  return out;
}

DatasetPair load_cifar10(const std::filesystem::path& dir, std::optional<std::size_t> max_samples) {
  auto load_split = [&](const std::vector<std::string>& files, Split split) {
    std::vector<Dataset> parts;
    std::size_t have = 0;
    for (const auto& name : files) {
      if (max_samples && have >= *max_samples) break;
      const std::filesystem::path path = dir / name;
      std::optional<std::size_t> want;
      if (max_samples) want = *max_samples - have;
      parts.push_back(decode_cifar_records(read_file(path), split, want, path.string()));
      if (parts.back().size() == 0) throw DataError(path.string() + ": no records (byte offset 0)");
      have += parts.back().size();
    }
    return concat(std::move(parts), split);
  };
  DatasetPair out;
  out.train = load_split({"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
                          "data_batch_4.bin", "data_batch_5.bin"},
                         Split::train);
  out.val = load_split({"test_batch.bin"}, Split::val);
  return out;
}

Params make_teacher(const TeacherSpec& teacher) {
  Rng rng(teacher.seed);
  return init_params(teacher.spec, rng);
}

DatasetPair gen_teacher_dataset(const MlpSpec& spec, const Params& teacher, std::size_t n_train,
                                std::size_t n_val, Rng& rng) {
  if (n_train == 0 || n_val == 0) throw ParameterError("gen_teacher_dataset: sizes must be positive");
  auto make = [&](std::size_t n, Split split) {
    Dataset ds;
    ds.kind = TargetKind::regression;
    ds.split = split;
    ds.inputs = gaussian_sample(rng, n, spec.input_dim, 0.0, 1.0);
    ds.targets = forward(teacher, spec, ds.inputs).outputs;
    return ds;
  };
  DatasetPair out;
  out.train = make(n_train, Split::train);
  out.val = make(n_val, Split::val);
  return out;
}

DatasetPair gen_teacher_dataset(const TeacherSpec& teacher, std::size_t n_train,
                                std::size_t n_val, Rng& rng) {
  return gen_teacher_dataset(teacher.spec, make_teacher(teacher), n_train, n_val, rng);
}

Batch gather(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Batch b;
  b.indices = indices;
  b.inputs = Matrix(indices.size(), ds.inputs.cols());
  b.targets = Matrix(indices.size(), ds.targets.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src_in = ds.inputs.row_span(indices[i]);
    std::copy(src_in.begin(), src_in.end(), b.inputs.row_span(i).begin());
    const auto src_t = ds.targets.row_span(indices[i]);
    std::copy(src_t.begin(), src_t.end(), b.targets.row_span(i).begin());
  }
  return b;
}

void shuffle_indices(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.uniform_index(i)]);
  }
}

BatchIterator::BatchIterator(const Dataset& ds, std::size_t batch, std::uint64_t seed, bool shuffle)
    : ds_(&ds), batch_(batch), seed_(seed), shuffle_(shuffle) {
  if (batch == 0 || batch > ds.size()) {
    throw ParameterError("batch size " + std::to_string(batch) + " must be in [1, " +
                         std::to_string(ds.size()) + "]");
  }
  order_ = epoch_order(0);
}

std::vector<std::size_t> BatchIterator::epoch_order(std::size_t epoch) const {
  std::vector<std::size_t> order(ds_->size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_) {
    Rng rng(derive_seed(seed_, epoch));
    shuffle_indices(order, rng);
  }
  return order;
}

std::size_t BatchIterator::batches_per_epoch() const {
  return (ds_->size() + batch_ - 1) / batch_;
}

Batch BatchIterator::next() {
  if (pos_ >= order_.size()) {
    ++epoch_;
    pos_ = 0;
    order_ = epoch_order(epoch_);
  }
  const std::size_t end = std::min(pos_ + batch_, order_.size());
  std::vector<std::size_t> idx(order_.begin() + pos_, order_.begin() + end);
  pos_ = end;
  epoch_ended_ = pos_ >= order_.size();
  return gather(*ds_, idx);
}

const std::array<double, kVocabSize - 1> kTokenEdges = {
    -1.5341205443525459,  -1.1503493803760079,  -0.88714655901887585, -0.67448975019608171,
    -0.48877641111466941, -0.31863936396437514, -0.15731068461017067, 0.0,
    0.15731068461017067,  0.31863936396437514,  0.48877641111466941,  0.67448975019608171,
    0.88714655901887585,  1.1503493803760079,   1.5341205443525459,
};

int tokenize_value(double x) {
  if (std::isnan(x)) throw DataError("tokenize: NaN input");
  return static_cast<int>(std::upper_bound(kTokenEdges.begin(), kTokenEdges.end(), x) -
                          kTokenEdges.begin());
}

Matrix tokenize_sre_input(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out.values()[i] = tokenize_value(x.values()[i]);
  return out;
}

void write_dataset_cache(const std::filesystem::path& path, const Dataset& ds, std::uint64_t seed) {
  std::vector<std::uint8_t> out(kCacheMagic, kCacheMagic + 4);
  put<std::uint32_t>(out, kCacheVersion);
  std::uint32_t flags = 0;
  if (ds.kind == TargetKind::classification) flags |= 1u;
  if (ds.split == Split::val) flags |= 2u;
  put<std::uint32_t>(out, flags);
  put<std::uint64_t>(out, ds.inputs.rows());
  put<std::uint64_t>(out, ds.inputs.cols());
  put<std::uint64_t>(out, ds.targets.cols());
  put<std::uint64_t>(out, ds.num_classes);
  put<std::uint64_t>(out, seed);
  for (double v : ds.inputs.values()) put(out, v);
  for (double v : ds.targets.values()) put(out, v);

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + tmp.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Dataset read_dataset_cache(const std::filesystem::path& path, std::uint64_t* seed) {
  const std::vector<std::uint8_t> in = read_file(path);
  const std::string source = path.string();
  if (in.size() < 4 || !std::equal(kCacheMagic, kCacheMagic + 4, in.begin())) {
    throw DataError(source + ": bad magic at byte offset 0");
  }
  std::size_t pos = 4;
  const auto version = get<std::uint32_t>(in, pos, source);
  if (version != kCacheVersion) {
    throw DataError(source + ": unsupported version " + std::to_string(version) +
                    " at byte offset 4");
  }
  const auto flags = get<std::uint32_t>(in, pos, source);
  const auto n = get<std::uint64_t>(in, pos, source);
  const auto d_in = get<std::uint64_t>(in, pos, source);
  const auto d_out = get<std::uint64_t>(in, pos, source);
  const auto classes = get<std::uint64_t>(in, pos, source);
  const auto s = get<std::uint64_t>(in, pos, source);
  const std::size_t expected = pos + 8 * (n * d_in + n * d_out);
  if (in.size() != expected) {
    throw DataError(source + ": payload size mismatch at byte offset " + std::to_string(pos) +
                    ": expected " + std::to_string(expected) + " bytes total, found " +
                    std::to_string(in.size()));
  }
  Dataset ds;
  ds.kind = (flags & 1u) ? TargetKind::classification : TargetKind::regression;
  ds.split = (flags & 2u) ? Split::val : Split::train;
  ds.num_classes = classes;
  ds.inputs = Matrix(n, d_in);
  ds.targets = Matrix(n, d_out);
  for (double& v : ds.inputs.values()) v = get<double>(in, pos, source);
  for (double& v : ds.targets.values()) v = get<double>(in, pos, source);
  if (seed) *seed = s;
  return ds;
}

}  // namespace hebbalign
