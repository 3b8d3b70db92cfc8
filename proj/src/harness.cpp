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

#include "hebbalign/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <unistd.h>

#include "hebbalign/error.hpp"
#include "hebbalign/rng.hpp"
#include "json.hpp"

namespace hebbalign {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Seed streams derived from train.seed.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kBatchStream = 2;
constexpr std::uint64_t kNoiseStream = 3;
constexpr std::uint64_t kRuleStream = 4;

constexpr std::size_t kEvalChunk = 1024;

std::size_t model_input_dim(const ExperimentConfig& cfg) {
  return cfg.model_kind == ModelKind::mlp ? cfg.mlp.input_dim : cfg.transformer.max_seq;
}

Dataset truncated(const Dataset& ds, std::optional<std::size_t> limit) {
  if (!limit || *limit >= ds.size()) return ds;
  std::vector<std::size_t> idx(*limit);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Batch b = gather(ds, idx);
  Dataset out = ds;
  out.inputs = std::move(b.inputs);
  out.targets = std::move(b.targets);
  return out;
}

std::mutex& cifar_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, std::shared_ptr<const DatasetPair>>& cifar_cache() {
  static std::map<std::string, std::shared_ptr<const DatasetPair>> c;
  return c;
}

std::string opt_str(std::optional<std::size_t> v) { return v ? std::to_string(*v) : "all"; }

}  // namespace

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const std::size_t tid = std::hash<std::thread::id>{}(std::this_thread::get_id());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(tid);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Headline headline_choice(const ExperimentConfig& cfg) {
  Headline h;
  const bool dfa = cfg.rule.kind == RuleKind::dfa;
  h.layer = mlp_layer_index(cfg.model(), dfa ? 1 : 2);
  h.metric = (dfa || cfg.rule.kind == RuleKind::randomnn) ? MetricKind::rule_vs_hebb
                                                          : MetricKind::grad_vs_hebb;
  return h;
}

std::shared_ptr<const DatasetPair> load_data(const ExperimentConfig& cfg) {
  const DataConfig& d = cfg.data;
  if (d.kind == DataKind::teacher) {
    MlpSpec teacher{model_input_dim(cfg), d.teacher_hidden, cfg.mlp.output_dim,
                    d.teacher_activation, false, 1.0};
    Rng rng(d.seed);
    DatasetPair pair = gen_teacher_dataset(TeacherSpec{teacher, d.teacher_seed}, d.n_train,
                                           d.n_val, rng);
    pair.train = truncated(pair.train, d.max_train);
    pair.val = truncated(pair.val, d.max_val);
    return std::make_shared<const DatasetPair>(std::move(pair));
  }
  std::string dir = d.path;
  if (dir.empty()) {
    const char* env = std::getenv("HEBBALIGN_DATA");
    if (!env || !*env) {
      throw DataError("no CIFAR-10 directory: set data.path or HEBBALIGN_DATA");
    }
    dir = env;
  }
  const std::string key = dir + "|" + opt_str(d.max_train) + "|" + opt_str(d.max_val);
  std::lock_guard lock(cifar_mutex());
  auto& cache = cifar_cache();
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  std::optional<std::size_t> limit;
  if (d.max_train && d.max_val) limit = std::max(*d.max_train, *d.max_val);
  DatasetPair pair = load_cifar10(dir, limit);
  pair.train = truncated(pair.train, d.max_train);
  pair.val = truncated(pair.val, d.max_val);
  auto ptr = std::make_shared<const DatasetPair>(std::move(pair));
  cache.emplace(key, ptr);
  return ptr;
}

namespace {

struct Evaluation {
  double loss = 0.0;
  std::optional<double> accuracy;
};

Evaluation evaluate(const Params& params, const ModelSpec& model, const Dataset& val,
                    const Matrix& val_inputs, LossKind loss) {
  Evaluation ev;
  const std::size_t n = val.size();
  if (n == 0) return ev;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    const std::size_t end = std::min(n, start + kEvalChunk);
    std::vector<std::size_t> idx(end - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    Dataset view;
    view.inputs = val_inputs;
    view.targets = val.targets;
    const Batch b = gather(view, idx);
    const ForwardPass pass = forward(params, model, b.inputs);
    loss_sum += loss_and_grad(pass.outputs, b.targets, loss).loss * static_cast<double>(idx.size());
    if (val.kind == TargetKind::classification) {
      for (std::size_t r = 0; r < pass.outputs.rows(); ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < pass.outputs.cols(); ++c) {
          if (pass.outputs(r, c) > pass.outputs(r, best)) best = c;
        }
        if (static_cast<double>(best) == b.targets(r, 0)) ++correct;
      }
    }
  }
  ev.loss = loss_sum / static_cast<double>(n);
  if (val.kind == TargetKind::classification) {
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  }
  return ev;
}

// Per instrumented layer state kept across steps.
struct LayerState {
  int layer = 0;
  std::string name;
  std::size_t weight_index = 0;
  std::map<MetricKind, std::vector<double>> series;
  StationarityAccumulator stationarity;
  Matrix signal_sum;
  Matrix ha_hb_sum;
  std::size_t window_steps = 0;
  NormSpread spread;
};

void check_data_shapes(const ExperimentConfig& cfg, const DatasetPair& data, LossKind loss) {
  const std::size_t in = model_input_dim(cfg);
  if (data.train.inputs.cols() != in) {
    throw ConfigError("model input dim " + std::to_string(in) + " does not match data dim " +
                      std::to_string(data.train.inputs.cols()));
  }
  const std::size_t out = cfg.mlp.output_dim;
  if (data.train.kind == TargetKind::classification) {
    if (data.train.num_classes != out) {
      throw ConfigError("model.output_dim must equal the " + std::to_string(data.train.num_classes) +
                        " classes");
    }
    if (loss != LossKind::softmax_cross_entropy) {
      throw ConfigError("train.loss: class labels need softmax_cross_entropy");
    }
  } else if (data.train.targets.cols() != out) {
    throw ConfigError("model.output_dim does not match the target dim");
  }
  if (data.train.size() < cfg.train.batch) {
    throw ConfigError("train.batch " + std::to_string(cfg.train.batch) + " exceeds the " +
                      std::to_string(data.train.size()) + " training examples");
  }
}

void write_run_dir(const fs::path& dir, const ExperimentConfig& cfg, const RunResult& r) {
  fs::create_directories(dir);
  write_file_atomic(dir / "config.cfg", serialize_config(cfg));
  write_records(r.records, dir / "records.csv", dir / "neurons.csv");
  write_file_atomic(dir / "summary.json", summary_json(r));
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  if (cfg.name.empty() || cfg.name.find('/') != std::string::npos) {
    throw ConfigError("name: must be non-empty and contain no '/'");
  }
  const ModelSpec model = cfg.model();
  const LossKind loss_kind = cfg.loss();
  const auto data = load_data(cfg);
  check_data_shapes(cfg, *data, loss_kind);
  const bool tokens = cfg.model_kind == ModelKind::transformer;

  Dataset model_train = data->train;
  Matrix val_inputs = data->val.inputs;
  if (tokens) {
    model_train.inputs = tokenize_sre_input(data->train.inputs);
    val_inputs = tokenize_sre_input(data->val.inputs);
  }

  const std::uint64_t seed = cfg.train.seed;
  Rng init_rng(derive_seed(seed, kInitStream));
  Params params = init_params(model, init_rng);
  Rng rule_rng(derive_seed(seed, kRuleStream));
  LearningRule rule(cfg.rule, model, data->train.inputs.cols(), params, rule_rng);
  Rng noise_rng(derive_seed(seed, kNoiseStream));
  BatchIterator batches(model_train, cfg.train.batch, derive_seed(seed, kBatchStream));

  RunResult result;
  result.run_id = cfg.name;
  result.config_hash = config_hash(cfg);
  result.headline = headline_choice(cfg);

  const std::int64_t total =
      static_cast<std::int64_t>(cfg.train.epochs * batches.batches_per_epoch());
  const std::int64_t window_start = total - static_cast<std::int64_t>(cfg.train.window);
  const std::int64_t record_every = static_cast<std::int64_t>(cfg.train.record_every);
  const std::int64_t neuron_every = record_every * static_cast<std::int64_t>(cfg.train.neuron_every);
  const bool gradient_rule = cfg.rule.kind == RuleKind::sgd || cfg.rule.kind == RuleKind::adam;
  constexpr HebbTap kTap = HebbTap::preactivation;

  std::set<int> instrumented;
  if (cfg.train.instrument_layers) {
    instrumented.insert(cfg.train.instrument_layers->begin(), cfg.train.instrument_layers->end());
  } else {
    for (std::size_t l = 1; l <= traced_layer_count(model); ++l) instrumented.insert(static_cast<int>(l));
  }
  instrumented.insert(result.headline.layer);
  std::map<int, LayerState> layers;

  std::vector<AlignmentRecord>& records = result.records;
  auto emit = [&](std::int64_t step, int layer, MetricKind metric, double value,
                  bool degenerate = false) {
    records.push_back({cfg.name, step, layer, metric, value, std::nullopt, degenerate});
    if (degenerate) ++result.degenerate_records;
    if (layer > 0) layers[layer].series[metric].push_back(value);
  };
  auto emit_val = [&](std::int64_t step) {
    const Evaluation ev = evaluate(params, model, data->val, val_inputs, loss_kind);
    emit(step, 0, MetricKind::loss_val, ev.loss);
    if (ev.accuracy) emit(step, 0, MetricKind::accuracy, *ev.accuracy);
    result.final_val_loss = ev.loss;
    result.final_val_accuracy = ev.accuracy;
  };

  emit_val(0);

  std::int64_t step = 0;
  try {
    while (step < total) {
      const std::int64_t s = step + 1;
      const Batch batch = batches.next();
      const Matrix raw_inputs =
          tokens ? gather(data->train, batch.indices).inputs : batch.inputs;
      // Stationarity looks at the total change of each traced weight, which in
      // persistent mode includes the injected noise.
      std::map<int, Matrix> before;
      if (s > window_start) {
        for (const auto& [layer, ls] : layers) before[layer] = params.value(ls.weight_index);
      }
      NoiseInjection inj = inject_noise(params, cfg.noise, noise_rng);
      const ForwardPass pass = forward(inj.evaluated, model, batch.inputs);
      const LossResult lr = loss_and_grad(pass.outputs, batch.targets, loss_kind);
      if (!std::isfinite(lr.loss)) {
        throw NumericError("non-finite training loss at step " + std::to_string(s));
      }
      const Backward bw = backward(inj.evaluated, model, pass, lr.grad);
      const LearningRule::Signals sig = rule.compute(inj.evaluated, pass, bw, lr.grad, raw_inputs);
      Params& target = inj.restore ? *inj.restore : inj.evaluated;
      const std::vector<Matrix> deltas = rule.apply(target, sig.native);
      params = std::move(target);

      const bool record = s % record_every == 0;
      const bool in_window = s > window_start;
      for (std::size_t ti = 0; ti < pass.traces.size(); ++ti) {
        const LayerTrace& t = pass.traces[ti];
        if (!instrumented.count(t.layer)) continue;
        LayerState& ls = layers[t.layer];
        ls.layer = t.layer;
        ls.name = t.name;
        ls.weight_index = t.weight_index;
        const Matrix& delta = deltas[t.weight_index];
        const Matrix& ascent = sig.ascent.value(t.weight_index);
        if (in_window) {
          const auto b = before.find(t.layer);
          ls.stationarity.add(b != before.end() ? params.value(t.weight_index) - b->second : delta);
          if (ls.window_steps == 0) {
            ls.signal_sum = ascent;
            ls.ha_hb_sum = ha_hb_mean(t, kTap);
          } else {
            ls.signal_sum += ascent;
            ls.ha_hb_sum += ha_hb_mean(t, kTap);
          }
          ++ls.window_steps;
        }
        if (s == total) ls.spread = representation_norm_spread(t.h_a);
        if (!record) continue;
        const Matrix hebb = hebbian_direction(t, kTap);
        const Cosine g = cosine_checked(-bw.grads.value(t.weight_index), hebb);
        emit(s, t.layer, MetricKind::grad_vs_hebb, g.value, g.degenerate);
        const Cosine f = cosine_checked(delta, hebb);
        emit(s, t.layer, MetricKind::full_update_vs_hebb, f.value, f.degenerate);
        if (s % neuron_every == 0) records.back().per_neuron = per_neuron_alignment(delta, hebb);
        if (!gradient_rule) {
          const Cosine r = cosine_checked(ascent, hebb);
          emit(s, t.layer, MetricKind::rule_vs_hebb, r.value, r.degenerate);
        }
        emit(s, t.layer, MetricKind::weight_norm, frob_norm(params.value(t.weight_index)));
        emit(s, t.layer, MetricKind::grad_hb_inner, grad_hb_inner(bw.pre_activation_grads[ti], t.h_b));
      }
      if (record) emit(s, 0, MetricKind::loss_train, lr.loss);
      step = s;
      if (batches.epoch_ended()) emit_val(step);
    }
  } catch (const NumericError& e) {
    result.failed = true;
    result.message = e.what();
  }
  result.steps = step;
  result.last_good_step = step;

  const std::size_t window_records =
      std::max<std::size_t>(1, cfg.train.window / cfg.train.record_every);
  for (auto& [layer, ls] : layers) {
    LayerSummary sum;
    sum.layer = layer;
    sum.name = ls.name;
    sum.weight_norm = frob_norm(params.value(ls.weight_index));
    sum.h_a_norm_mean = ls.spread.mean;
    sum.h_a_norm_std = ls.spread.std;
    if (ls.window_steps >= 2) {
      sum.stationarity = ls.stationarity.value();
      const double inv = 1.0 / static_cast<double>(ls.window_steps);
      sum.trace_alignment = trace_alignment(ls.signal_sum * inv, ls.ha_hb_sum * inv);
      if (!result.failed) {
        records.push_back({cfg.name, step, layer, MetricKind::trace_alignment, sum.trace_alignment,
                           std::nullopt, false});
      }
    } else {
      sum.stationarity = kNaN;
      sum.trace_alignment = kNaN;
    }
    for (const auto& [metric, series] : ls.series) {
      if (series.empty()) continue;
      sum.windows[metric] = final_window(series, window_records);
    }
    result.layers.push_back(std::move(sum));
  }

  for (const auto& e : params.entries()) {
    if (e.role == ParamRole::weight && e.layer > 0 && frob_norm(e.value) < kCollapseNorm) {
      result.collapsed = true;
    }
  }
  for (const auto& l : result.layers) {
    if (l.layer != result.headline.layer) continue;
    if (auto it = l.windows.find(result.headline.metric); it != l.windows.end()) {
      result.headline.mean = it->second.mean;
      result.headline.std = it->second.std;
    }
    result.converged = !result.failed && l.stationarity < kConvergedStationarity;
  }

  if (opts.out_dir) write_run_dir(*opts.out_dir / cfg.name, cfg, result);
  if (!opts.keep_records) {
    result.records.clear();
    result.records.shrink_to_fit();
  }
  return result;
}

std::vector<SweepCell> expand_sweep(const ExperimentConfig& base) {
  base.validate();
  std::vector<SweepCell> cells;
  std::size_t count = 1;
  for (const auto& [axis, values] : base.sweep) count *= values.size();
  for (std::size_t i = 0; i < count; ++i) {
    SweepCell cell;
    cell.index = i;
    cell.config = base;
    cell.config.sweep.clear();
    std::size_t rem = i;
    std::vector<std::size_t> pick(base.sweep.size());
    for (std::size_t a = base.sweep.size(); a-- > 0;) {
      pick[a] = rem % base.sweep[a].second.size();
      rem /= base.sweep[a].second.size();
    }
    std::string coord_text;
    for (std::size_t a = 0; a < base.sweep.size(); ++a) {
      const auto& [axis, values] = base.sweep[a];
      cell.coords.emplace_back(axis, values[pick[a]]);
      set_value(cell.config, sweep_axis_key(axis), values[pick[a]]);
      coord_text += (a ? "," : "") + axis + "=" + values[pick[a]];
      cell.config.name += "__" + axis + "=" + values[pick[a]];
    }
    if (!base.sweep.empty()) cell.config.train.seed = base.train.seed ^ fnv1a64(coord_text);
    cell.config.validate();
    cells.push_back(std::move(cell));
  }
  return cells;
}

PhaseGrid phase_grid_from(const std::vector<SweepCell>& cells, const std::vector<RunResult>& runs) {
  PhaseGrid grid;
  for (std::size_t i = 0; i < cells.size() && i < runs.size(); ++i) {
    if (runs[i].failed) continue;
    const ExperimentConfig& c = cells[i].config;
    grid.points.push_back({c.noise.sigma, c.rule.weight_decay, runs[i].headline.mean,
                           runs[i].headline.std, runs[i].final_val_loss});
  }
  return grid;
}

namespace {

bool is_phase_sweep(const ExperimentConfig& base) {
  if (base.sweep.empty()) return false;
  for (const auto& [axis, values] : base.sweep) {
    if (axis != "sigma" && axis != "gamma") return false;
  }
  return true;
}

std::string sweep_json(const ExperimentConfig& base, const std::vector<SweepCell>& cells,
                       const std::vector<RunResult>& runs) {
  json j;
  j["name"] = base.name;
  j["axes"] = json::array();
  for (const auto& [axis, values] : base.sweep) j["axes"].push_back({{"axis", axis}, {"values", values}});
  j["cells"] = json::array();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    json coords = json::object();
    for (const auto& [axis, value] : cells[i].coords) coords[axis] = value;
    j["cells"].push_back({{"index", i},
                          {"run_id", runs[i].run_id},
                          {"coords", coords},
                          {"failed", runs[i].failed},
                          {"message", runs[i].message}});
  }
  return j.dump(2) + "\n";
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& base, std::size_t jobs,
                      const std::optional<fs::path>& out_dir) {
  const std::vector<SweepCell> cells = expand_sweep(base);
  // Surface missing datasets before any worker starts.
  load_data(cells.front().config);

  SweepResult result;
  result.runs.resize(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      RunOptions opts;
      opts.out_dir = out_dir;
      opts.keep_records = false;
      try {
        result.runs[i] = run_experiment(cells[i].config, opts);
      } catch (const std::exception& e) {
        RunResult r;
        r.run_id = cells[i].config.name;
        r.config_hash = config_hash(cells[i].config);
        r.failed = true;
        r.message = e.what();
        result.runs[i] = std::move(r);
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(jobs, cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  if (is_phase_sweep(base)) result.phase_grid = phase_grid_from(cells, result.runs);
  if (out_dir) {
    write_file_atomic(*out_dir / "sweep.json", sweep_json(base, cells, result.runs));
    if (result.phase_grid) write_phase_grid(*result.phase_grid, *out_dir / "phase_grid.csv");
  }
  return result;
}

// ---- records CSV ----

namespace {

constexpr std::string_view kRecordsHeader = "run_id,step,layer,metric,value";
constexpr std::string_view kNeuronsHeader = "run_id,step,layer,neuron,value";

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

template <typename T>
T parse_field(std::string_view s, const std::string& where) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw DataError(where + ": bad field '" + std::string(s) + "'");
  }
  return v;
}

// Calls fn(fields, where) for every data row; checks the header.
template <typename Fn>
void for_each_row(const fs::path& path, std::string_view header, std::size_t width, Fn fn) {
  const std::string text = read_file(path);
  std::size_t pos = 0;
  std::size_t lineno = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (lineno == 1) {
      if (line != header) throw DataError(where + ": expected header '" + std::string(header) + "'");
      continue;
    }
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != width) {
      throw DataError(where + ": expected " + std::to_string(width) + " fields, got " +
                      std::to_string(fields.size()));
    }
    fn(fields, where);
  }
  if (lineno == 0) throw DataError(path.string() + ": empty file, missing header");
}

}  // namespace

void write_records(const std::vector<AlignmentRecord>& records, const fs::path& records_csv,
                   const fs::path& neurons_csv) {
  std::string out;
  out.reserve(64 * records.size() + 64);
  out += kRecordsHeader;
  out += '\n';
  std::string neurons(kNeuronsHeader);
  neurons += '\n';
  for (const auto& r : records) {
    const std::string prefix =
        r.run_id + "," + std::to_string(r.step) + "," + std::to_string(r.layer) + ",";
    out += prefix;
    out += to_string(r.metric);
    out += ',';
    out += format_real(r.value);
    out += '\n';
    if (r.per_neuron) {
      for (std::size_t i = 0; i < r.per_neuron->size(); ++i) {
        neurons += prefix + std::to_string(i) + "," + format_real((*r.per_neuron)[i]) + "\n";
      }
    }
  }
  write_file_atomic(records_csv, out);
  write_file_atomic(neurons_csv, neurons);
}

std::vector<AlignmentRecord> read_records(const fs::path& records_csv,
                                          const std::optional<fs::path>& neurons_csv) {
  std::vector<AlignmentRecord> records;
  for_each_row(records_csv, kRecordsHeader, 5, [&](const auto& f, const std::string& where) {
    AlignmentRecord r;
    r.run_id = std::string(f[0]);
    r.step = parse_field<std::int64_t>(f[1], where);
    r.layer = parse_field<int>(f[2], where);
    try {
      r.metric = parse_metric_kind(f[3]);
    } catch (const Error& e) {
      throw DataError(where + ": " + e.what());
    }
    r.value = parse_field<double>(f[4], where);
    r.degenerate = is_cosine_metric(r.metric) && r.value == 0.0;
    records.push_back(std::move(r));
  });
  if (!neurons_csv) return records;

  std::map<std::tuple<std::string, std::int64_t, int>, std::size_t> owner;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].metric == MetricKind::full_update_vs_hebb) {
      owner[{records[i].run_id, records[i].step, records[i].layer}] = i;
    }
  }
  for_each_row(*neurons_csv, kNeuronsHeader, 5, [&](const auto& f, const std::string& where) {
    const auto key = std::make_tuple(std::string(f[0]), parse_field<std::int64_t>(f[1], where),
                                     parse_field<int>(f[2], where));
    const auto it = owner.find(key);
    if (it == owner.end()) throw DataError(where + ": no matching full_update_vs_hebb record");
    auto& pn = records[it->second].per_neuron;
    if (!pn) pn.emplace();
    const auto neuron = parse_field<std::size_t>(f[3], where);
    if (neuron != pn->size()) throw DataError(where + ": neuron index out of order");
    pn->push_back(parse_field<double>(f[4], where));
  });
  return records;
}

// ---- summary JSON ----

namespace {

json real(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double real_from(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

}  // namespace

std::string summary_json(const RunResult& r) {
  json j;
  j["run_id"] = r.run_id;
  j["config_hash"] = r.config_hash;
  j["steps"] = r.steps;
  j["failed"] = r.failed;
  j["message"] = r.message;
  j["last_good_step"] = r.last_good_step;
  j["collapsed"] = r.collapsed;
  j["converged"] = r.converged;
  j["final_val_loss"] = real(r.final_val_loss);
  j["final_val_accuracy"] = r.final_val_accuracy ? real(*r.final_val_accuracy) : json(nullptr);
  j["headline"] = {{"layer", r.headline.layer},
                   {"metric", std::string(to_string(r.headline.metric))},
                   {"mean", real(r.headline.mean)},
                   {"std", real(r.headline.std)}};
  j["degenerate_records"] = r.degenerate_records;
  j["layers"] = json::array();
  for (const auto& l : r.layers) {
    json windows = json::object();
    for (const auto& [metric, w] : l.windows) {
      windows[std::string(to_string(metric))] = {
          {"window", w.window}, {"count", w.count}, {"mean", real(w.mean)}, {"std", real(w.std)}};
    }
    j["layers"].push_back({{"layer", l.layer},
                           {"name", l.name},
                           {"stationarity", real(l.stationarity)},
                           {"trace_alignment", real(l.trace_alignment)},
                           {"weight_norm", real(l.weight_norm)},
                           {"h_a_norm_mean", real(l.h_a_norm_mean)},
                           {"h_a_norm_std", real(l.h_a_norm_std)},
                           {"windows", windows}});
  }
  return j.dump(2) + "\n";
}

RunResult parse_summary_json(const std::string& text) {
  RunResult r;
  try {
    const json j = json::parse(text);
    r.run_id = j.at("run_id").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.steps = j.at("steps").get<std::int64_t>();
    r.failed = j.at("failed").get<bool>();
    r.message = j.at("message").get<std::string>();
    r.last_good_step = j.at("last_good_step").get<std::int64_t>();
    r.collapsed = j.at("collapsed").get<bool>();
    r.converged = j.at("converged").get<bool>();
    r.final_val_loss = real_from(j.at("final_val_loss"));
    if (!j.at("final_val_accuracy").is_null()) {
      r.final_val_accuracy = j.at("final_val_accuracy").get<double>();
    }
    const json& h = j.at("headline");
    r.headline.layer = h.at("layer").get<int>();
    r.headline.metric = parse_metric_kind(h.at("metric").get<std::string>());
    r.headline.mean = real_from(h.at("mean"));
    r.headline.std = real_from(h.at("std"));
    r.degenerate_records = j.at("degenerate_records").get<std::size_t>();
    for (const json& lj : j.at("layers")) {
      LayerSummary l;
      l.layer = lj.at("layer").get<int>();
      l.name = lj.at("name").get<std::string>();
      l.stationarity = real_from(lj.at("stationarity"));
      l.trace_alignment = real_from(lj.at("trace_alignment"));
      l.weight_norm = real_from(lj.at("weight_norm"));
      l.h_a_norm_mean = real_from(lj.at("h_a_norm_mean"));
      l.h_a_norm_std = real_from(lj.at("h_a_norm_std"));
      for (const auto& [name, w] : lj.at("windows").items()) {
        WindowStats ws;
        ws.window = w.at("window").get<std::size_t>();
        ws.count = w.at("count").get<std::size_t>();
        ws.mean = real_from(w.at("mean"));
        ws.std = real_from(w.at("std"));
        l.windows[parse_metric_kind(name)] = ws;
      }
      r.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed summary: ") + e.what());
  }
  return r;
}

RunResult read_summary(const fs::path& path) {
  try {
    return parse_summary_json(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---- phase grid CSV ----

namespace {
constexpr std::string_view kPhaseHeader = "sigma,gamma,alignment,alignment_std,val_loss";
}

void write_phase_grid(const PhaseGrid& grid, const fs::path& path) {
  std::vector<PhasePoint> pts = grid.points;
  std::sort(pts.begin(), pts.end(), [](const PhasePoint& a, const PhasePoint& b) {
    return a.sigma != b.sigma ? a.sigma < b.sigma : a.gamma < b.gamma;
  });
  std::string out(kPhaseHeader);
  out += '\n';
  for (const auto& p : pts) {
    out += format_real(p.sigma) + "," + format_real(p.gamma) + "," + format_real(p.alignment) +
           "," + format_real(p.alignment_std) + "," + format_real(p.val_loss) + "\n";
  }
  write_file_atomic(path, out);
}

PhaseGrid read_phase_grid(const fs::path& path) {
  PhaseGrid grid;
  for_each_row(path, kPhaseHeader, 5, [&](const auto& f, const std::string& where) {
    grid.points.push_back({parse_field<double>(f[0], where), parse_field<double>(f[1], where),
                           parse_field<double>(f[2], where), parse_field<double>(f[3], where),
                           parse_field<double>(f[4], where)});
  });
  return grid;
}

}  // namespace hebbalign
