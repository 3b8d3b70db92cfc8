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

#include "doctest.h"
#include "hebbalign/config.hpp"
#include "hebbalign/error.hpp"

using namespace hebbalign;

namespace {

bool throws_with(const std::string& text, const std::string& needle) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

}  // namespace

TEST_CASE("config: defaults round trip through text") {
  const ExperimentConfig def;
  const std::string text = serialize_config(def);
  CHECK(serialize_config(parse_config(text)) == text);
  CHECK(parse_config("").name == "experiment");
  CHECK(config_hash(parse_config(text)) == config_hash(def));
}

TEST_CASE("config: every field survives a round trip") {
  const std::string text = R"(
# comment line
name = sweep_a
model.kind = transformer
model.hidden_dims = 64, 32
model.activation = relu   # trailing comment
model.use_bias = true
model.init_scale = 0.1
model.transformer.layers = 1
data.max_train = 500
rule.kind = randomnn
rule.eta = 0.001
rule.weight_decay = 5e-05
rule.grad_clip = 2.5
rule.randomnn.hidden_dims = 8,8
noise.sigma = 0.3
noise.mode = transient
train.loss = mse
train.instrument_layers = 1,3
sweep.gamma = 0,0.001,0.01
sweep.sigma = 0,0.1
)";
  const ExperimentConfig c = parse_config(text);
  CHECK(c.name == "sweep_a");
  CHECK(c.model_kind == ModelKind::transformer);
  CHECK(c.mlp.hidden_dims == std::vector<std::size_t>{64, 32});
  CHECK(c.mlp.activation == ActivationKind::relu);
  CHECK(c.mlp.use_bias);
  CHECK(c.mlp.init_scale == 0.1);
  CHECK(*c.data.max_train == 500);
  CHECK(c.rule.kind == RuleKind::randomnn);
  CHECK(c.rule.weight_decay == 5e-5);
  CHECK(*c.rule.grad_clip == 2.5);
  CHECK(c.noise.mode == NoiseMode::transient);
  CHECK(*c.train.instrument_layers == std::vector<int>{1, 3});
  REQUIRE(c.sweep.size() == 2);
  CHECK(c.sweep[0].first == "gamma");
  CHECK(c.sweep[0].second.size() == 3);

  const std::string again = serialize_config(c);
  CHECK(serialize_config(parse_config(again)) == again);
  CHECK(again.find("rule.eta = 0.001\n") != std::string::npos);
  CHECK(config_hash(c) != config_hash(ExperimentConfig{}));

  const ModelSpec m = c.model();
  const auto& t = std::get<TransformerSpec>(m);
  CHECK(t.head.input_dim == t.embed_dim);
  CHECK(t.head.hidden_dims == c.mlp.hidden_dims);
}

TEST_CASE("config: errors name the key and line") {
  CHECK(throws_with("name = a\nmodel.depth = 3\n", "line 2"));
  CHECK(throws_with("model.depth = 3\n", "model.depth"));
  CHECK(throws_with("rule.eta = fast\n", "rule.eta"));
  CHECK(throws_with("rule.kind = backprop\n", "rule.kind"));
  CHECK(throws_with("train.batch = -1\n", "train.batch"));
  CHECK(throws_with("just some words\n", "key = value"));
  CHECK(throws_with("sweep.temperature = 1,2\n", "sweep.temperature"));
  CHECK_THROWS_AS(load_config("/nonexistent/x.cfg"), ConfigError);
}

TEST_CASE("config: overrides and accessors") {
  ExperimentConfig c;
  apply_override(c, "rule.weight_decay=0.25");
  apply_override(c, " model.activation = sigmoid ");
  apply_override(c, "sweep.sigma=0,1");
  apply_override(c, "sweep.sigma=0,1,2");
  CHECK(c.rule.weight_decay == 0.25);
  CHECK(get_value(c, "model.activation") == "sigmoid");
  REQUIRE(c.sweep.size() == 1);
  CHECK(c.sweep[0].second.size() == 3);
  CHECK_THROWS_AS(apply_override(c, "rule.eta"), ConfigError);
  CHECK_THROWS_AS(get_value(c, "nope"), ConfigError);

  for (const char* axis : {"gamma", "sigma", "eta", "batch", "init_scale", "activation"}) {
    const std::string key = sweep_axis_key(axis);
    CHECK_NOTHROW(get_value(c, key));
  }
  CHECK(sweep_axis_key("gamma") == "rule.weight_decay");

  bool all_have_help = true;
  for (const auto& k : config_schema()) all_have_help = all_have_help && !k.help.empty();
  CHECK(all_have_help);
}

TEST_CASE("config: validation") {
  ExperimentConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.loss() == LossKind::mse);

  ExperimentConfig bad = c;
  bad.train.instrument_layers = std::vector<int>{4};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.train.batch = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.rule.eta = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  apply_override(bad, "sweep.batch=8,x");
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.data.kind = DataKind::cifar10;
  CHECK(bad.loss() == LossKind::softmax_cross_entropy);
  bad.train.loss = LossKind::mse;
  CHECK(bad.loss() == LossKind::mse);
}
