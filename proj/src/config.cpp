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

#include "hebbalign/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <variant>

#include "hebbalign/error.hpp"
#include "hebbalign/rng.hpp"

namespace hebbalign {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(std::string_view key, std::string_view s) {
  const std::string t = trim(s);
  double v = 0.0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) {
    throw ConfigError(std::string(key) + ": expected a number, got '" + t + "'");
  }
  return v;
}

template <typename T>
T parse_uint(std::string_view key, std::string_view s) {
  const std::string t = trim(s);
  T v = 0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + t + "'");
  }
  return v;
}

int parse_int(std::string_view key, std::string_view s) {
  const std::string t = trim(s);
  int v = 0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) {
    throw ConfigError(std::string(key) + ": expected an integer, got '" + t + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view s) {
  const std::string t = trim(s);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + t + "'");
}

std::vector<std::size_t> parse_sizes(std::string_view key, std::string_view s) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(s)) out.push_back(parse_uint<std::size_t>(key, item));
  return out;
}

std::string fmt_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

// Wraps an enum parser so its ConfigError names the key.
template <typename F>
auto parse_enum_for(std::string_view key, std::string_view s, F parse) {
  try {
    return parse(trim(s));
  } catch (const Error& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

struct Field {
  std::string key;
  std::string help;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
};

#define HB_DOUBLE(KEY, MEMBER, HELP)                                                        \
  Field {                                                                                   \
    KEY, HELP, [](const ExperimentConfig& c) { return fmt_double(c.MEMBER); },              \
        [](ExperimentConfig& c, std::string_view v) { c.MEMBER = parse_double(KEY, v); }    \
  }
#define HB_SIZE(KEY, MEMBER, HELP)                                                          \
  Field {                                                                                   \
    KEY, HELP, [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); },          \
        [](ExperimentConfig& c, std::string_view v) {                                       \
          c.MEMBER = parse_uint<std::size_t>(KEY, v);                                       \
        }                                                                                   \
  }
#define HB_U64(KEY, MEMBER, HELP)                                                           \
  Field {                                                                                   \
    KEY, HELP, [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); },          \
        [](ExperimentConfig& c, std::string_view v) {                                       \
          c.MEMBER = parse_uint<std::uint64_t>(KEY, v);                                     \
        }                                                                                   \
  }
#define HB_ENUM(KEY, MEMBER, PARSE, HELP)                                                   \
  Field {                                                                                   \
    KEY, HELP, [](const ExperimentConfig& c) { return std::string(to_string(c.MEMBER)); },  \
        [](ExperimentConfig& c, std::string_view v) {                                       \
          c.MEMBER = parse_enum_for(KEY, v, [](const std::string& s) { return PARSE(s); }); \
        }                                                                                   \
  }

ModelKind parse_model_kind(std::string_view s) {
  if (s == "mlp") return ModelKind::mlp;
  if (s == "transformer") return ModelKind::transformer;
  throw ConfigError("unknown model kind '" + std::string(s) + "'");
}

DataKind parse_data_kind(std::string_view s) {
  if (s == "teacher") return DataKind::teacher;
  if (s == "cifar10") return DataKind::cifar10;
  throw ConfigError("unknown data kind '" + std::string(s) + "'");
}

std::string fmt_optional_size(const std::optional<std::size_t>& v) {
  return v ? std::to_string(*v) : "none";
}

std::optional<std::size_t> parse_optional_size(std::string_view key, std::string_view v) {
  if (trim(v) == "none") return std::nullopt;
  return parse_uint<std::size_t>(key, v);
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"name", "run name, used as the run id prefix",
            [](const ExperimentConfig& c) { return c.name; },
            [](ExperimentConfig& c, std::string_view v) { c.name = trim(v); }},
      HB_ENUM("model.kind", model_kind, parse_model_kind, "mlp | transformer"),
      HB_SIZE("model.input_dim", mlp.input_dim, "MLP input dim (ignored for the transformer head)"),
      Field{"model.hidden_dims", "MLP (or transformer head) hidden widths, comma separated",
            [](const ExperimentConfig& c) { return fmt_sizes(c.mlp.hidden_dims); },
            [](ExperimentConfig& c, std::string_view v) {
              c.mlp.hidden_dims = parse_sizes("model.hidden_dims", v);
            }},
      HB_SIZE("model.output_dim", mlp.output_dim, "output dim (classes for cifar10)"),
      HB_ENUM("model.activation", mlp.activation, parse_activation,
              "tanh | relu | sigmoid | identity | gelu"),
      Field{"model.use_bias", "dense layers carry a bias",
            [](const ExperimentConfig& c) { return std::string(c.mlp.use_bias ? "true" : "false"); },
            [](ExperimentConfig& c, std::string_view v) {
              c.mlp.use_bias = parse_bool("model.use_bias", v);
            }},
      HB_DOUBLE("model.init_scale", mlp.init_scale, "multiplier on the Glorot-uniform init"),
      HB_SIZE("model.transformer.embed_dim", transformer.embed_dim, "token embedding width"),
      HB_SIZE("model.transformer.vocab", transformer.vocab, "token vocabulary"),
      HB_SIZE("model.transformer.max_seq", transformer.max_seq, "sequence length"),
      HB_SIZE("model.transformer.layers", transformer.layers, "encoder blocks"),
      HB_SIZE("model.transformer.heads", transformer.heads, "attention heads"),
      HB_SIZE("model.transformer.ff_dim", transformer.ff_dim, "feed-forward width"),
      HB_ENUM("model.transformer.ff_activation", transformer.ff_activation, parse_activation,
              "feed-forward activation"),
      HB_DOUBLE("model.transformer.init_scale", transformer.init_scale, "encoder init multiplier"),
      HB_ENUM("data.kind", data.kind, parse_data_kind, "teacher | cifar10"),
      Field{"data.path", "cifar10 directory; empty uses $HEBBALIGN_DATA",
            [](const ExperimentConfig& c) { return c.data.path; },
            [](ExperimentConfig& c, std::string_view v) { c.data.path = trim(v); }},
      Field{"data.max_train", "truncate the training split (none = all)",
            [](const ExperimentConfig& c) { return fmt_optional_size(c.data.max_train); },
            [](ExperimentConfig& c, std::string_view v) {
              c.data.max_train = parse_optional_size("data.max_train", v);
            }},
      Field{"data.max_val", "truncate the validation split (none = all)",
            [](const ExperimentConfig& c) { return fmt_optional_size(c.data.max_val); },
            [](ExperimentConfig& c, std::string_view v) {
              c.data.max_val = parse_optional_size("data.max_val", v);
            }},
      HB_SIZE("data.n_train", data.n_train, "teacher training examples"),
      HB_SIZE("data.n_val", data.n_val, "teacher validation examples"),
      Field{"data.teacher_hidden_dims", "teacher MLP hidden widths",
            [](const ExperimentConfig& c) { return fmt_sizes(c.data.teacher_hidden); },
            [](ExperimentConfig& c, std::string_view v) {
              c.data.teacher_hidden = parse_sizes("data.teacher_hidden_dims", v);
            }},
      HB_ENUM("data.teacher_activation", data.teacher_activation, parse_activation,
              "teacher activation"),
      HB_U64("data.teacher_seed", data.teacher_seed, "teacher parameter seed"),
      HB_U64("data.seed", data.seed, "teacher input seed"),
      HB_ENUM("rule.kind", rule.kind, parse_rule_kind, "sgd | adam | dfa | hebbian | oja | randomnn"),
      HB_DOUBLE("rule.eta", rule.eta, "learning rate"),
      HB_DOUBLE("rule.weight_decay", rule.weight_decay, "weight decay gamma"),
      HB_ENUM("rule.decay_kind", rule.decay_kind, parse_decay_kind, "l2 | l1 | none"),
      Field{"rule.hebb_sign", "+1 Hebbian, -1 anti-Hebbian",
            [](const ExperimentConfig& c) { return std::to_string(c.rule.hebb_sign); },
            [](ExperimentConfig& c, std::string_view v) {
              c.rule.hebb_sign = parse_int("rule.hebb_sign", v);
            }},
      HB_ENUM("rule.hebb_normalization", rule.hebb_normalization, parse_hebb_normalization,
              "none | weight_standardize | oja"),
      HB_ENUM("rule.hebb_tap", rule.hebb_tap, parse_hebb_tap, "preactivation | postactivation"),
      Field{"rule.grad_clip", "Frobenius clip of each signal (none = off)",
            [](const ExperimentConfig& c) {
              return c.rule.grad_clip ? fmt_double(*c.rule.grad_clip) : std::string("none");
            },
            [](ExperimentConfig& c, std::string_view v) {
              if (trim(v) == "none") {
                c.rule.grad_clip.reset();
              } else {
                c.rule.grad_clip = parse_double("rule.grad_clip", v);
              }
            }},
      HB_DOUBLE("rule.adam_beta1", rule.adam_beta1, "Adam first-moment decay"),
      HB_DOUBLE("rule.adam_beta2", rule.adam_beta2, "Adam second-moment decay"),
      HB_DOUBLE("rule.adam_eps", rule.adam_eps, "Adam epsilon"),
      Field{"rule.randomnn.hidden_dims", "frozen random net hidden widths",
            [](const ExperimentConfig& c) { return fmt_sizes(c.rule.randomnn.hidden); },
            [](ExperimentConfig& c, std::string_view v) {
              c.rule.randomnn.hidden = parse_sizes("rule.randomnn.hidden_dims", v);
            }},
      HB_SIZE("rule.randomnn.out_dim", rule.randomnn.out_dim, "frozen random net output dim"),
      HB_DOUBLE("rule.randomnn.target_norm", rule.randomnn.target_norm, "attractor weight norm"),
      HB_DOUBLE("rule.randomnn.clip", rule.randomnn.clip, "signal Frobenius clip"),
      HB_DOUBLE("rule.randomnn.epsilon", rule.randomnn.epsilon, "normalization epsilon"),
      HB_DOUBLE("rule.randomnn.projection_std", rule.randomnn.projection_std,
                "std of the fixed projections"),
      HB_DOUBLE("noise.sigma", noise.sigma, "std of parameter noise added each step"),
      HB_ENUM("noise.mode", noise.mode, parse_noise_mode, "persistent | transient"),
      HB_SIZE("train.epochs", train.epochs, "epochs"),
      HB_SIZE("train.batch", train.batch, "minibatch size"),
      Field{"train.loss", "mse | mse_mean | softmax_cross_entropy | auto",
            [](const ExperimentConfig& c) {
              return c.train.loss ? std::string(to_string(*c.train.loss)) : std::string("auto");
            },
            [](ExperimentConfig& c, std::string_view v) {
              if (trim(v) == "auto") {
                c.train.loss.reset();
              } else {
                c.train.loss = parse_enum_for("train.loss", v,
                                              [](const std::string& s) { return parse_loss(s); });
              }
            }},
      HB_U64("train.seed", train.seed, "master seed"),
      HB_SIZE("train.record_every", train.record_every, "steps between alignment records"),
      HB_SIZE("train.neuron_every", train.neuron_every,
              "per-neuron records every this many records"),
      HB_SIZE("train.window", train.window, "final window length in steps"),
      Field{"train.instrument_layers", "all, or comma separated 1-based layers",
            [](const ExperimentConfig& c) {
              if (!c.train.instrument_layers) return std::string("all");
              std::string out;
              for (std::size_t i = 0; i < c.train.instrument_layers->size(); ++i) {
                out += (i ? "," : "") + std::to_string((*c.train.instrument_layers)[i]);
              }
              return out;
            },
            [](ExperimentConfig& c, std::string_view v) {
              if (trim(v) == "all") {
                c.train.instrument_layers.reset();
                return;
              }
              std::vector<int> layers;
              for (const auto& item : split_list(v)) {
                layers.push_back(parse_int("train.instrument_layers", item));
              }
              c.train.instrument_layers = layers;
            }},
  };
  return table;
}

#undef HB_DOUBLE
#undef HB_SIZE
#undef HB_U64
#undef HB_ENUM

const Field* find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

constexpr std::string_view kSweepAxes[] = {"gamma", "sigma", "eta", "batch", "init_scale",
                                           "activation"};

}  // namespace

std::string_view to_string(ModelKind k) { return k == ModelKind::mlp ? "mlp" : "transformer"; }
std::string_view to_string(DataKind k) { return k == DataKind::teacher ? "teacher" : "cifar10"; }

ModelSpec ExperimentConfig::model() const {
  if (model_kind == ModelKind::mlp) return mlp;
  TransformerSpec t = transformer;
  t.head = mlp;
  t.head.input_dim = t.embed_dim;
  return t;
}

LossKind ExperimentConfig::loss() const {
  if (train.loss) return *train.loss;
  return data.kind == DataKind::cifar10 ? LossKind::softmax_cross_entropy : LossKind::mse;
}

void ExperimentConfig::validate() const {
  try {
    std::visit([](const auto& m) { m.validate(); }, model());
    rule.validate();
    noise.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (train.batch == 0) throw ConfigError("train.batch: must be positive");
  if (train.record_every == 0) throw ConfigError("train.record_every: must be positive");
  if (train.neuron_every == 0) throw ConfigError("train.neuron_every: must be positive");
  if (train.window < 2) throw ConfigError("train.window: must be at least 2");
  if (data.kind == DataKind::teacher) {
    if (model_kind == ModelKind::transformer &&
        (transformer.max_seq != 32 || transformer.vocab != 16)) {
      throw ConfigError("teacher data tokenizes 32 inputs into 16 bins: needs max_seq 32, vocab 16");
    }
  }
  if (data.kind == DataKind::cifar10 && model_kind == ModelKind::transformer) {
    throw ConfigError("data.kind: cifar10 is only wired to the MLP");
  }
  if (rule.kind == RuleKind::dfa && model_kind == ModelKind::transformer) {
    throw ConfigError("rule.kind: dfa is only defined for the MLP");
  }
  if (loss() == LossKind::softmax_cross_entropy && data.kind == DataKind::teacher) {
    throw ConfigError("train.loss: cross entropy needs class labels (data.kind = cifar10)");
  }
  const std::size_t layers = traced_layer_count(model());
  if (train.instrument_layers) {
    for (int l : *train.instrument_layers) {
      if (l < 1 || static_cast<std::size_t>(l) > layers) {
        throw ConfigError("train.instrument_layers: layer " + std::to_string(l) +
                          " outside [1, " + std::to_string(layers) + "]");
      }
    }
  }
  for (const auto& [axis, values] : sweep) {
    sweep_axis_key(axis);
    if (values.empty()) throw ConfigError("sweep." + axis + ": no values");
    ExperimentConfig probe = *this;
    for (const auto& v : values) set_value(probe, sweep_axis_key(axis), v);
  }
}

void set_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  if (key.substr(0, 6) == "sweep.") {
    const std::string axis(key.substr(6));
    sweep_axis_key(axis);
    auto values = split_list(value);
    for (auto& entry : cfg.sweep) {
      if (entry.first == axis) {
        entry.second = std::move(values);
        return;
      }
    }
    cfg.sweep.emplace_back(axis, std::move(values));
    return;
  }
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown config key '" + std::string(key) + "'");
  f->set(cfg, value);
}

std::string get_value(const ExperimentConfig& cfg, std::string_view key) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return f->get(cfg);
}

void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  }
  set_value(cfg, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    try {
      set_value(cfg, trim(std::string_view(t).substr(0, eq)), std::string_view(t).substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  for (const auto& [axis, values] : cfg.sweep) {
    out += "sweep." + axis + " = ";
    for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + values[i];
    out += "\n";
  }
  return out;
}

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = [] {
    std::vector<ConfigKey> s;
    for (const auto& f : fields()) s.push_back({f.key, f.help});
    for (auto axis : kSweepAxes) {
      s.push_back({"sweep." + std::string(axis),
                   "comma separated values for " + sweep_axis_key(axis)});
    }
    return s;
  }();
  return schema;
}

std::string sweep_axis_key(std::string_view axis) {
  if (axis == "gamma") return "rule.weight_decay";
  if (axis == "sigma") return "noise.sigma";
  if (axis == "eta") return "rule.eta";
  if (axis == "batch") return "train.batch";
  if (axis == "init_scale") return "model.init_scale";
  if (axis == "activation") return "model.activation";
  throw ConfigError("unknown sweep axis 'sweep." + std::string(axis) +
                    "' (gamma, sigma, eta, batch, init_scale, activation)");
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(serialize_config(cfg))));
  return buf;
}

}  // namespace hebbalign
