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

#include "hebbalign/export.hpp"

#include <algorithm>
#include <map>

#include "hebbalign/error.hpp"
#include "hebbalign/harness.hpp"
#include "json.hpp"

namespace hebbalign {

namespace fs = std::filesystem;

namespace {

struct RunEntry {
  fs::path dir;
  ExperimentConfig config;
  RunResult summary;
};

std::vector<fs::path> run_dirs(const fs::path& dir) {
  if (fs::exists(dir / "summary.json") && !fs::exists(dir / "sweep.json")) return {dir};
  if (!fs::exists(dir / "sweep.json")) {
    throw DataError(dir.string() + ": neither sweep.json nor summary.json found");
  }
  const auto j = nlohmann::json::parse(read_file(dir / "sweep.json"), nullptr, false);
  if (j.is_discarded() || !j.contains("cells")) {
    throw DataError((dir / "sweep.json").string() + ": malformed");
  }
  std::vector<fs::path> dirs;
  std::vector<std::string> missing;
  for (const auto& cell : j.at("cells")) {
    const fs::path d = dir / cell.at("run_id").get<std::string>();
    if (fs::exists(d / "summary.json")) {
      dirs.push_back(d);
    } else {
      missing.push_back(cell.at("run_id").get<std::string>());
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing runs:";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }
  return dirs;
}

std::string csv_bool(bool b) { return b ? "true" : "false"; }

}  // namespace

std::vector<fs::path> export_bundles(const fs::path& dir, const fs::path& out_dir) {
  const fs::path out = out_dir.empty() ? dir / "export" : out_dir;
  std::vector<RunEntry> runs;
  for (const auto& d : run_dirs(dir)) {
    RunEntry e{d, load_config(d / "config.cfg"), read_summary(d / "summary.json")};
    if (!e.summary.failed) runs.push_back(std::move(e));
  }
  std::sort(runs.begin(), runs.end(),
            [](const RunEntry& a, const RunEntry& b) { return a.summary.run_id < b.summary.run_id; });

  std::string curves = std::string(kAlignmentVsGammaHeader) + "\n";
  std::string scatter = std::string(kLossVsAlignmentHeader) + "\n";
  std::string series = std::string(kWindowSeriesHeader) + "\n";
  std::string raster = std::string(kNeuronRasterHeader) + "\n";
  PhaseGrid grid;

  for (const auto& e : runs) {
    const ExperimentConfig& c = e.config;
    const RunResult& s = e.summary;
    for (const auto& layer : s.layers) {
      for (const auto& [metric, w] : layer.windows) {
        if (!is_cosine_metric(metric)) continue;
        curves += s.run_id + "," + std::string(to_string(c.mlp.activation)) + "," +
                  format_real(c.rule.weight_decay) + "," + format_real(c.noise.sigma) + "," +
                  format_real(c.rule.eta) + "," + std::to_string(c.train.batch) + "," +
                  std::to_string(layer.layer) + "," + std::string(to_string(metric)) + "," +
                  format_real(w.mean) + "," + format_real(w.std) + "," + csv_bool(s.converged) +
                  "," + csv_bool(s.collapsed) + "\n";
      }
    }
    scatter += s.run_id + "," + format_real(c.rule.weight_decay) + "," + format_real(c.noise.sigma) +
               "," + format_real(s.headline.mean) + "," + format_real(s.final_val_loss) + "\n";
    grid.points.push_back({c.noise.sigma, c.rule.weight_decay, s.headline.mean, s.headline.std,
                           s.final_val_loss});

    // Window stats are recomputed over each (layer, metric) series in step order.
    const auto records = read_records(e.dir / "records.csv", e.dir / "neurons.csv");
    const std::size_t window = std::max<std::size_t>(1, c.train.window / c.train.record_every);
    std::map<std::pair<int, MetricKind>, std::vector<const AlignmentRecord*>> by_series;
    for (const auto& r : records) {
      if (is_cosine_metric(r.metric) && r.metric != MetricKind::trace_alignment) {
        by_series[{r.layer, r.metric}].push_back(&r);
      }
      if (r.per_neuron) {
        for (std::size_t i = 0; i < r.per_neuron->size(); ++i) {
          raster += r.run_id + "," + std::to_string(r.step) + "," + std::to_string(r.layer) + "," +
                    std::to_string(i) + "," + format_real((*r.per_neuron)[i]) + "\n";
        }
      }
    }
    for (const auto& [key, rows] : by_series) {
      std::vector<double> values;
      values.reserve(rows.size());
      for (const auto* r : rows) values.push_back(r->value);
      const auto stats = sliding_stats(values, window);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        series += rows[i]->run_id + "," + std::to_string(rows[i]->step) + "," +
                  std::to_string(key.first) + "," + std::string(to_string(key.second)) + "," +
                  format_real(values[i]) + "," + format_real(stats[i].mean) + "," +
                  format_real(stats[i].std) + "\n";
      }
    }
  }

  std::vector<fs::path> files = {out / "alignment_vs_gamma.csv", out / "heatmap.csv",
                                 out / "window_series.csv", out / "neuron_raster.csv",
                                 out / "loss_vs_alignment.csv"};
  write_file_atomic(files[0], curves);
  write_phase_grid(grid, files[1]);
  write_file_atomic(files[2], series);
  write_file_atomic(files[3], raster);
  write_file_atomic(files[4], scatter);
  return files;
}

}  // namespace hebbalign
