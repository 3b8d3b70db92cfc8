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
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hebbalign/nn.hpp"
#include "hebbalign/rules.hpp"

namespace hebbalign {

enum class ModelKind { mlp, transformer };
enum class DataKind { teacher, cifar10 };

std::string_view to_string(ModelKind k);
std::string_view to_string(DataKind k);

struct DataConfig {
  DataKind kind = DataKind::teacher;
  std::string path;  // cifar10 directory; empty means $HEBBALIGN_DATA
  std::optional<std::size_t> max_train;
  std::optional<std::size_t> max_val;
  std::size_t n_train = 20000;  // teacher only
  std::size_t n_val = 2000;
  std::vector<std::size_t> teacher_hidden = {128, 128};
  ActivationKind teacher_activation = ActivationKind::tanh;
  std::uint64_t teacher_seed = 1;
  std::uint64_t seed = 2;  // teacher inputs
};

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch = 256;
  std::optional<LossKind> loss;  // default: mse for teacher, cross entropy for cifar10
  std::uint64_t seed = 0;
  std::size_t record_every = 1;
  std::size_t neuron_every = 10;  // in units of record_every
  std::size_t window = 200;       // steps
  std::optional<std::vector<int>> instrument_layers;  // 1-based; empty optional = all
};

// Axis name (gamma, sigma, eta, batch, init_scale, activation) and its values
// as written in the config.
using SweepAxis = std::pair<std::string, std::vector<std::string>>;

struct ExperimentConfig {
  std::string name = "experiment";
  ModelKind model_kind = ModelKind::mlp;
  // The MLP, or the transformer's head (whose input dim follows embed_dim).
  MlpSpec mlp;
  TransformerSpec transformer;
  DataConfig data;
  RuleConfig rule;
  NoiseConfig noise;
  TrainConfig train;
  std::vector<SweepAxis> sweep;

  ModelSpec model() const;
  LossKind loss() const;
  void validate() const;
};

// `key = value` lines; '#' starts a comment. Unknown keys and malformed
// values throw ConfigError naming the key and line.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Every key in schema order, so parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& cfg);

// Applies "key=value".
void apply_override(ExperimentConfig& cfg, std::string_view assignment);
void set_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);
std::string get_value(const ExperimentConfig& cfg, std::string_view key);

struct ConfigKey {
  std::string key;
  std::string help;
};
const std::vector<ConfigKey>& config_schema();

// Config key an axis name maps to, e.g. gamma -> rule.weight_decay.
std::string sweep_axis_key(std::string_view axis);

std::string config_hash(const ExperimentConfig& cfg);

}  // namespace hebbalign
