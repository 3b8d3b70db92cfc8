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
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hebbalign/align.hpp"
#include "hebbalign/config.hpp"
#include "hebbalign/data.hpp"
#include "hebbalign/oracle.hpp"

namespace hebbalign {

struct LayerSummary {
  int layer = 0;
  std::string name;
  double stationarity = 0.0;  // over the final window of total weight changes
  double trace_alignment = 0.0;
  double weight_norm = 0.0;   // final Frobenius norm
  double h_a_norm_mean = 0.0; // spread of per-sample input norms at the last step
  double h_a_norm_std = 0.0;
  std::map<MetricKind, WindowStats> windows;
};

struct Headline {
  int layer = 0;
  MetricKind metric = MetricKind::grad_vs_hebb;
  double mean = 0.0;
  double std = 0.0;
};

struct RunResult {
  std::string run_id;
  std::string config_hash;
  std::int64_t steps = 0;
  bool failed = false;
  std::string message;
  std::int64_t last_good_step = 0;
  bool collapsed = false;
  bool converged = false;  // headline layer stationarity < kConvergedStationarity
  double final_val_loss = 0.0;
  std::optional<double> final_val_accuracy;  // classification only
  Headline headline;
  std::vector<LayerSummary> layers;
  std::size_t degenerate_records = 0;
  std::vector<AlignmentRecord> records;  // not part of the summary file
};

inline constexpr double kConvergedStationarity = 0.1;
inline constexpr double kCollapseNorm = 1e-6;

// Layer and metric the headline alignment is read from: layer 2 of the MLP
// part (layer 1 for dfa); grad_vs_hebb except for dfa and randomnn, whose own
// signal is compared via rule_vs_hebb.
Headline headline_choice(const ExperimentConfig& cfg);

// Teacher data is regenerated deterministically; cifar10 splits are cached
// per (path, limits) for the life of the process.
std::shared_ptr<const DatasetPair> load_data(const ExperimentConfig& cfg);

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;  // run dir is out_dir / run_id
  bool keep_records = true;
};

// Throws ConfigError for invalid configs and DataError for missing data.
// Numeric blow-up ends the run early with failed = true.
RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

// One cell of a sweep: the base config with the axis values applied, seed
// train.seed ^ fnv1a64(coordinates) and name base__axis=value__...
struct SweepCell {
  std::size_t index = 0;
  std::vector<std::pair<std::string, std::string>> coords;
  ExperimentConfig config;
};

std::vector<SweepCell> expand_sweep(const ExperimentConfig& base);

struct SweepResult {
  std::vector<RunResult> runs;  // cell order
  std::optional<PhaseGrid> phase_grid;
};

// Cells run on up to `jobs` threads. A failing cell is recorded and the rest
// continue. With out_dir set, each cell writes its run dir plus sweep.json and,
// for (sigma, gamma) sweeps, phase_grid.csv.
SweepResult run_sweep(const ExperimentConfig& base, std::size_t jobs,
                      const std::optional<std::filesystem::path>& out_dir = std::nullopt);

// PhaseGrid from (sigma, gamma) cells. Failed cells are left out.
PhaseGrid phase_grid_from(const std::vector<SweepCell>& cells, const std::vector<RunResult>& runs);

// records.csv: run_id,step,layer,metric,value
// neurons.csv: run_id,step,layer,neuron,value (per-neuron values of
// full_update_vs_hebb records)
void write_records(const std::vector<AlignmentRecord>& records,
                   const std::filesystem::path& records_csv,
                   const std::filesystem::path& neurons_csv);
// A cosine record read back with value exactly 0 is marked degenerate.
std::vector<AlignmentRecord> read_records(
    const std::filesystem::path& records_csv,
    const std::optional<std::filesystem::path>& neurons_csv = std::nullopt);

std::string summary_json(const RunResult& r);
RunResult parse_summary_json(const std::string& text);
RunResult read_summary(const std::filesystem::path& path);

// sigma,gamma,alignment,alignment_std,val_loss
void write_phase_grid(const PhaseGrid& grid, const std::filesystem::path& path);
PhaseGrid read_phase_grid(const std::filesystem::path& path);

// Writes path.tmp.<unique> then renames over path.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

// %.17g
std::string format_real(double v);

}  // namespace hebbalign
