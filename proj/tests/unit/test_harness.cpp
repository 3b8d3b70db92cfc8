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

#include <chrono>
#include <cmath>
#include <fstream>

#include <unistd.h>

#include "doctest.h"
#include "hebbalign/error.hpp"
#include "hebbalign/export.hpp"
#include "hebbalign/harness.hpp"

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

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.name = "tiny";
  c.mlp.hidden_dims = {16, 16};
  c.data.teacher_hidden = {16, 16};
  c.data.n_train = 256;
  c.data.n_val = 64;
  c.train.epochs = 2;
  c.train.batch = 32;
  c.train.window = 8;
  c.train.neuron_every = 4;
  c.rule.eta = 0.05;
  return c;
}

void write_fake_cifar(const fs::path& dir, std::size_t per_file) {
  Rng rng(3);
  for (const std::string f : {"data_batch_1", "data_batch_2", "data_batch_3", "data_batch_4",
                              "data_batch_5", "test_batch"}) {
    std::vector<char> bytes;
    for (std::size_t r = 0; r < per_file; ++r) {
      bytes.push_back(static_cast<char>(rng.uniform_index(10)));
      for (std::size_t j = 0; j < kCifarPixels; ++j) {
        bytes.push_back(static_cast<char>(rng.uniform_index(256)));
      }
    }
    std::ofstream(dir / (f + ".bin"), std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

const WindowStats& window_of(const RunResult& r, int layer, MetricKind m) {
  for (const auto& l : r.layers) {
    if (l.layer == layer) return l.windows.at(m);
  }
  throw std::runtime_error("layer not found");
}

}  // namespace

TEST_CASE("run: epochs=0 gives initial validation metrics only") {
  ExperimentConfig c = tiny();
  c.train.epochs = 0;
  const RunResult r = run_experiment(c);
  CHECK(r.steps == 0);
  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].metric == MetricKind::loss_val);
  CHECK(r.records[0].step == 0);
  CHECK(r.final_val_loss > 0.0);
  CHECK_FALSE(r.converged);
  CHECK_FALSE(r.failed);
}

TEST_CASE("run: record stream layout") {
  const ExperimentConfig c = tiny();
  const RunResult r = run_experiment(c);
  CHECK(r.steps == 16);
  CHECK(r.layers.size() == 3);
  std::map<MetricKind, int> counts;
  int neuron_records = 0;
  for (const auto& rec : r.records) {
    ++counts[rec.metric];
    if (rec.per_neuron) {
      ++neuron_records;
      CHECK(rec.metric == MetricKind::full_update_vs_hebb);
      CHECK(rec.step % 4 == 0);
    }
    if (is_cosine_metric(rec.metric) && rec.metric != MetricKind::trace_alignment) {
      CHECK(std::abs(rec.value) <= 1.0 + 1e-12);
    }
  }
  CHECK(counts[MetricKind::grad_vs_hebb] == 16 * 3);
  CHECK(counts[MetricKind::full_update_vs_hebb] == 16 * 3);
  CHECK(counts[MetricKind::rule_vs_hebb] == 0);
  CHECK(counts[MetricKind::loss_train] == 16);
  CHECK(counts[MetricKind::loss_val] == 3);
  CHECK(counts[MetricKind::trace_alignment] == 3);
  CHECK(counts[MetricKind::accuracy] == 0);
  CHECK(neuron_records == 4 * 3);
  CHECK(window_of(r, 2, MetricKind::grad_vs_hebb).count == 8);
  CHECK(r.headline.layer == 2);
  CHECK(r.headline.mean == window_of(r, 2, MetricKind::grad_vs_hebb).mean);

  ExperimentConfig sparse = c;
  sparse.train.record_every = 4;
  sparse.train.instrument_layers = std::vector<int>{3};
  sparse.rule.kind = RuleKind::randomnn;
  sparse.rule.randomnn.hidden = {8};
  const RunResult s = run_experiment(sparse);
  std::map<int, int> per_layer;
  for (const auto& rec : s.records) {
    if (rec.metric == MetricKind::rule_vs_hebb) ++per_layer[rec.layer];
  }
  // The headline layer is always instrumented.
  CHECK(per_layer[2] == 4);
  CHECK(per_layer[3] == 4);
  CHECK(per_layer.count(1) == 0);
  CHECK(s.headline.metric == MetricKind::rule_vs_hebb);
}

TEST_CASE("run: identical configs reproduce bit for bit") {
  ExperimentConfig c = tiny();
  c.noise.sigma = 0.01;
  const RunResult a = run_experiment(c);
  const RunResult b = run_experiment(c);
  CHECK(summary_json(a) == summary_json(b));
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) REQUIRE(a.records[i].value == b.records[i].value);
  c.train.seed = 99;
  CHECK(summary_json(run_experiment(c)) != summary_json(a));
}

TEST_CASE("run: collapse and numeric failure") {
  ExperimentConfig c = tiny();
  c.rule.decay_kind = DecayKind::l1;
  c.rule.weight_decay = 100.0;
  const RunResult collapsed = run_experiment(c);
  CHECK(collapsed.collapsed);
  CHECK_FALSE(collapsed.failed);

  ExperimentConfig blow = tiny();
  blow.mlp.activation = ActivationKind::identity;
  blow.rule.eta = 1e3;
  blow.train.epochs = 50;
  const RunResult r = run_experiment(blow);
  CHECK(r.failed);
  CHECK(r.last_good_step < 50 * 8);
  CHECK(r.steps == r.last_good_step);
  CHECK_FALSE(r.message.empty());
}

TEST_CASE("run: configuration and data errors") {
  ExperimentConfig c = tiny();
  c.train.batch = 1000;
  CHECK_THROWS_AS(run_experiment(c), ConfigError);
  c = tiny();
  c.data.kind = DataKind::cifar10;
  c.data.path = "/nonexistent/cifar";
  c.mlp.input_dim = 3072;
  c.mlp.output_dim = 10;
  CHECK_THROWS_AS(run_experiment(c), DataError);
}

TEST_CASE("run: cifar classification on a fake directory") {
  TempDir tmp("harness_cifar");
  write_fake_cifar(tmp.path, 20);
  ExperimentConfig c = tiny();
  c.data.kind = DataKind::cifar10;
  c.data.path = tmp.path.string();
  c.mlp.input_dim = 3072;
  c.mlp.output_dim = 10;
  c.data.max_train = 64;
  const RunResult r = run_experiment(c);
  CHECK(r.steps == 4);
  REQUIRE(r.final_val_accuracy);
  CHECK(*r.final_val_accuracy >= 0.0);
  CHECK(*r.final_val_accuracy <= 1.0);
  int acc = 0;
  for (const auto& rec : r.records) acc += rec.metric == MetricKind::accuracy;
  CHECK(acc == 3);

  ExperimentConfig wrong = c;
  wrong.mlp.input_dim = 7;
  CHECK_THROWS_AS(run_experiment(wrong), ConfigError);
  wrong = c;
  wrong.mlp.output_dim = 4;
  CHECK_THROWS_AS(run_experiment(wrong), ConfigError);
  wrong = c;
  wrong.train.loss = LossKind::mse;
  CHECK_THROWS_AS(run_experiment(wrong), ConfigError);
}

TEST_CASE("run: transformer and dfa wiring") {
  ExperimentConfig t = tiny();
  t.model_kind = ModelKind::transformer;
  t.transformer.embed_dim = 8;
  t.transformer.layers = 1;
  t.transformer.heads = 2;
  t.transformer.ff_dim = 8;
  t.train.epochs = 1;
  const RunResult tr = run_experiment(t);
  CHECK(tr.headline.layer == 6 + 2);
  CHECK(tr.layers.size() == 6 + 3);
  CHECK(std::isfinite(tr.final_val_loss));

  ExperimentConfig d = tiny();
  d.rule.kind = RuleKind::dfa;
  const Headline h = headline_choice(d);
  CHECK(h.layer == 1);
  CHECK(h.metric == MetricKind::rule_vs_hebb);
  CHECK_FALSE(run_experiment(d).failed);
}

TEST_CASE("records csv round trip") {
  TempDir tmp("records");
  std::vector<AlignmentRecord> recs = {
      {"a", 0, 0, MetricKind::loss_val, 1.0 / 3.0, std::nullopt, false},
      {"a", 1, 2, MetricKind::full_update_vs_hebb, -0.125, std::vector<double>{0.1, -0.2, 0.0}, false},
      {"a", 1, 2, MetricKind::grad_vs_hebb, 0.0, std::nullopt, true},
      {"a", 2, 1, MetricKind::weight_norm, 1e-300, std::nullopt, false},
  };
  write_records(recs, tmp.path / "r.csv", tmp.path / "n.csv");
  const auto back = read_records(tmp.path / "r.csv", tmp.path / "n.csv");
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].run_id == recs[i].run_id);
    CHECK(back[i].step == recs[i].step);
    CHECK(back[i].layer == recs[i].layer);
    CHECK(back[i].metric == recs[i].metric);
    CHECK(back[i].value == recs[i].value);
    CHECK(back[i].per_neuron == recs[i].per_neuron);
    CHECK(back[i].degenerate == recs[i].degenerate);
  }
  CHECK(read_file(tmp.path / "r.csv").find("a,0,0,loss_val,0.33333333333333331\n") !=
        std::string::npos);

  write_records({}, tmp.path / "e.csv", tmp.path / "en.csv");
  CHECK(read_file(tmp.path / "e.csv") == "run_id,step,layer,metric,value\n");
  CHECK(read_records(tmp.path / "e.csv").empty());

  std::ofstream(tmp.path / "bad.csv") << "run_id,step,layer,metric,value\na,1,2,grad_vs_hebb,0.5\na,x,2,grad_vs_hebb,0.5\n";
  try {
    read_records(tmp.path / "bad.csv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
  std::ofstream(tmp.path / "bad2.csv") << "run_id,step,layer,metric,value\na,1,2,nonsense,0.5\n";
  CHECK_THROWS_AS(read_records(tmp.path / "bad2.csv"), DataError);
}

TEST_CASE("records csv: 1e5 records write and read quickly") {
  TempDir tmp("records_bench");
  std::vector<AlignmentRecord> recs;
  for (int i = 0; i < 100000; ++i) {
    recs.push_back({"bench", i, i % 3 + 1, MetricKind::grad_vs_hebb, std::sin(i), std::nullopt, false});
  }
  const auto t0 = std::chrono::steady_clock::now();
  write_records(recs, tmp.path / "r.csv", tmp.path / "n.csv");
  const auto back = read_records(tmp.path / "r.csv");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(back.size() == recs.size());
  CHECK(back.back().value == recs.back().value);
  CHECK(secs < 5.0);
}

TEST_CASE("summary json round trip") {
  const RunResult r = run_experiment(tiny());
  const std::string text = summary_json(r);
  const RunResult back = parse_summary_json(text);
  CHECK(summary_json(back) == text);
  CHECK(back.headline.mean == r.headline.mean);
  CHECK_THROWS_AS(parse_summary_json("{\"run_id\": 3}"), DataError);
}

TEST_CASE("sweep: expansion, seeds and the 1x1 grid") {
  ExperimentConfig base = tiny();
  apply_override(base, "sweep.gamma=0,0.01");
  apply_override(base, "sweep.sigma=0,0.1,0.2");
  const auto cells = expand_sweep(base);
  REQUIRE(cells.size() == 6);
  CHECK(cells[1].config.name == "tiny__gamma=0__sigma=0.1");
  CHECK(cells[1].config.noise.sigma == 0.1);
  CHECK(cells[4].config.rule.weight_decay == 0.01);
  CHECK(cells[4].config.train.seed == (base.train.seed ^ fnv1a64("gamma=0.01,sigma=0.1")));
  CHECK(cells[4].config.sweep.empty());

  ExperimentConfig one = tiny();
  apply_override(one, "sweep.gamma=0.01");
  const SweepResult s = run_sweep(one, 2);
  REQUIRE(s.runs.size() == 1);
  const RunResult direct = run_experiment(expand_sweep(one)[0].config);
  CHECK(summary_json(s.runs[0]) == summary_json(direct));
  REQUIRE(s.phase_grid);
  CHECK(s.phase_grid->points.size() == 1);
}

TEST_CASE("sweep: 3x3 grid reproduces identical files and exports") {
  ExperimentConfig base = tiny();
  base.train.epochs = 1;
  apply_override(base, "sweep.sigma=0,0.05,0.1");
  apply_override(base, "sweep.gamma=0,0.01,0.1");
  TempDir a("sweep_a"), b("sweep_b");
  const SweepResult ra = run_sweep(base, 3, a.path);
  const SweepResult rb = run_sweep(base, 1, b.path);
  REQUIRE(ra.runs.size() == 9);
  for (std::size_t i = 0; i < 9; ++i) {
    const fs::path rel = ra.runs[i].run_id;
    CHECK(read_file(a.path / rel / "records.csv") == read_file(b.path / rel / "records.csv"));
    CHECK(read_file(a.path / rel / "summary.json") == read_file(b.path / rel / "summary.json"));
  }
  CHECK(read_file(a.path / "phase_grid.csv") == read_file(b.path / "phase_grid.csv"));
  CHECK(count_lines(a.path / "phase_grid.csv") == 10);
  const PhaseGrid g = read_phase_grid(a.path / "phase_grid.csv");
  CHECK(g.points.size() == 9);

  const auto files = export_bundles(a.path);
  REQUIRE(files.size() == 5);
  CHECK(count_lines(a.path / "export" / "heatmap.csv") == 10);
  std::map<std::string, std::string> first;
  for (const auto& f : files) first[f.filename().string()] = read_file(f);
  export_bundles(a.path);
  for (const auto& f : files) CHECK(read_file(f) == first[f.filename().string()]);
  CHECK(read_file(a.path / "export" / "heatmap.csv") == read_file(a.path / "phase_grid.csv"));
  CHECK(first["alignment_vs_gamma.csv"].rfind(kAlignmentVsGammaHeader, 0) == 0);
  CHECK(count_lines(a.path / "export" / "neuron_raster.csv") > 1);

  // The sliding-window columns against a direct recomputation.
  const std::string run = ra.runs[4].run_id;
  const auto recs = read_records(a.path / run / "records.csv");
  std::vector<double> series;
  for (const auto& r : recs) {
    if (r.layer == 2 && r.metric == MetricKind::grad_vs_hebb) series.push_back(r.value);
  }
  std::ifstream in(a.path / "export" / "window_series.csv");
  std::string line;
  std::getline(in, line);
  std::size_t k = 0;
  const std::size_t w = base.train.window;
  while (std::getline(in, line)) {
    if (line.rfind(run + ",", 0) != 0 || line.find(",2,grad_vs_hebb,") == std::string::npos) continue;
    const std::size_t lo = k + 1 >= w ? k + 1 - w : 0;
    long double sum = 0.0L, sq = 0.0L;
    for (std::size_t i = lo; i <= k; ++i) sum += series[i];
    const long double mean = sum / static_cast<long double>(k + 1 - lo);
    for (std::size_t i = lo; i <= k; ++i) sq += (series[i] - mean) * (series[i] - mean);
    const double sd = std::sqrt(static_cast<double>(sq / static_cast<long double>(k + 1 - lo)));
    const auto c1 = line.rfind(',');
    const auto c0 = line.rfind(',', c1 - 1);
    CHECK(std::stod(line.substr(c0 + 1, c1 - c0 - 1)) == doctest::Approx(static_cast<double>(mean)).epsilon(1e-12));
    CHECK(std::stod(line.substr(c1 + 1)) == doctest::Approx(sd).epsilon(1e-9));
    ++k;
  }
  CHECK(k == series.size());

  fs::remove_all(a.path / ra.runs[2].run_id);
  fs::remove_all(a.path / ra.runs[7].run_id);
  try {
    export_bundles(a.path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(ra.runs[2].run_id) != std::string::npos);
    CHECK(msg.find(ra.runs[7].run_id) != std::string::npos);
  }
}

TEST_CASE("sweep: failing cells are recorded and the rest continue") {
  ExperimentConfig base = tiny();
  base.mlp.activation = ActivationKind::identity;
  base.train.epochs = 50;
  apply_override(base, "sweep.eta=0.01,1000");
  const SweepResult s = run_sweep(base, 2);
  REQUIRE(s.runs.size() == 2);
  CHECK_FALSE(s.runs[0].failed);
  CHECK(s.runs[1].failed);
  CHECK_FALSE(s.phase_grid);
}
