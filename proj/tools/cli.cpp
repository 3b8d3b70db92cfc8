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

#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "hebbalign/config.hpp"
#include "hebbalign/error.hpp"
#include "hebbalign/export.hpp"
#include "hebbalign/harness.hpp"
#include "hebbalign/oracle.hpp"
#include "json.hpp"

namespace hebbalign {

namespace {

namespace fs = std::filesystem;

struct ConfigFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_samples;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--config", f.config, "experiment config file (key = value lines)");
  cmd->add_option("--set", f.overrides, "override a config key, e.g. --set rule.weight_decay=5e-3")
      ->take_all();
  cmd->add_option("--seed", f.seed, "master seed (train.seed)");
  cmd->add_option("--max-samples", f.max_samples, "truncate the training split (data.max_train)");
}

ExperimentConfig build_config(const ConfigFlags& f) {
  ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
  for (const auto& o : f.overrides) apply_override(cfg, o);
  if (f.seed) cfg.train.seed = *f.seed;
  if (f.max_samples) cfg.data.max_train = *f.max_samples;
  cfg.validate();
  return cfg;
}

std::vector<double> parse_vector(const std::string& s, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(std::string(flag) + ": bad number '" + item + "'");
    }
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void print_summary(const RunResult& r, std::ostream& out) {
  out << r.run_id << ": steps " << r.steps << ", layer " << r.headline.layer << " "
      << to_string(r.headline.metric) << " " << fmt(r.headline.mean) << " +- "
      << fmt(r.headline.std) << ", val loss " << fmt(r.final_val_loss);
  if (r.final_val_accuracy) out << ", accuracy " << fmt(*r.final_val_accuracy);
  out << (r.converged ? ", converged" : ", not converged");
  if (r.collapsed) out << ", collapsed";
  if (r.failed) out << ", FAILED at step " << r.last_good_step << ": " << r.message;
  out << "\n";
}

unsigned default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hebbian alignment experiments: training runs, sweeps, oracle checks and exports.",
               "hebbalign"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 ok, 1 config error, 2 runtime failure, 3 no phase boundary.\n"
             "CIFAR-10 is read from data.path or the HEBBALIGN_DATA directory.");

  ConfigFlags run_flags;
  std::string run_out = "runs";
  auto* run = app.add_subcommand("run", "train one configuration and write its run dir");
  add_config_flags(run, run_flags);
  run->add_option("--out", run_out, "output root; the run dir is <out>/<name>")->capture_default_str();

  ConfigFlags sweep_flags;
  std::string sweep_out = "sweeps";
  unsigned jobs = default_jobs();
  auto* sweep = app.add_subcommand("sweep", "run the cartesian product of the sweep.* axes");
  add_config_flags(sweep, sweep_flags);
  sweep->add_option("--out", sweep_out, "output dir for the cell run dirs and sweep.json")
      ->capture_default_str();
  sweep->add_option("--jobs", jobs, "parallel cells")->capture_default_str();

  std::string ov, ox;
  double oy = 0.0, osigma = 0.0, ogamma = 0.0;
  std::uint64_t osamples = 1000000, oseed = 1;
  auto* oracle = app.add_subcommand("oracle", "closed form vs Monte Carlo for the noisy linear model");
  oracle->add_option("--v", ov, "weights before noise, comma separated")->required();
  oracle->add_option("--x", ox, "input, comma separated")->required();
  oracle->add_option("--y", oy, "target")->required();
  oracle->add_option("--sigma", osigma, "noise std")->capture_default_str();
  oracle->add_option("--gamma", ogamma, "weight decay")->capture_default_str();
  oracle->add_option("--samples", osamples, "Monte Carlo samples")->capture_default_str();
  oracle->add_option("--seed", oseed, "Monte Carlo seed")->capture_default_str();
  oracle->add_option("--jobs", jobs, "Monte Carlo shards");

  std::string grid_path, fit_out;
  auto* fit = app.add_subcommand("fit-boundary", "fit gamma* = c sigma^p to a phase grid CSV");
  fit->add_option("--grid", grid_path, "phase_grid.csv or heatmap.csv")->required();
  fit->add_option("--out", fit_out, "write the fit report (JSON) here");

  std::string export_dir, export_out;
  auto* exp = app.add_subcommand("export", "write figure CSV bundles for a run or sweep dir");
  exp->add_option("--dir", export_dir, "run dir or sweep dir")->required();
  exp->add_option("--out", export_out, "bundle dir (default <dir>/export)");

  ConfigFlags validate_flags;
  std::string validate_path;
  bool print_schema = false;
  auto* val = app.add_subcommand("validate-config", "check a config file and print it resolved");
  val->add_option("path", validate_path, "config file");
  add_config_flags(val, validate_flags);
  val->add_flag("--schema", print_schema, "list every config key with its help text");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    // Subcommand help requests surface as CallForHelp from the subcommand.
    if (e.get_exit_code() == 0) {
      for (auto* sub : app.get_subcommands()) out << sub->help();
      if (app.get_subcommands().empty()) out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return 1;
  }

  try {
    if (*run) {
      const ExperimentConfig cfg = build_config(run_flags);
      if (!cfg.sweep.empty()) {
        throw ConfigError("sweep." + cfg.sweep.front().first +
                          ": the config has sweep axes, use the sweep subcommand");
      }
      RunOptions opts;
      opts.out_dir = fs::path(run_out);
      opts.keep_records = false;
      const RunResult r = run_experiment(cfg, opts);
      print_summary(r, out);
      out << "wrote " << (fs::path(run_out) / cfg.name).string() << "\n";
      return r.failed ? 2 : 0;
    }
    if (*sweep) {
      const ExperimentConfig cfg = build_config(sweep_flags);
      const SweepResult res = run_sweep(cfg, jobs, fs::path(sweep_out));
      bool any_failed = false;
      for (const auto& r : res.runs) {
        print_summary(r, out);
        any_failed = any_failed || r.failed;
      }
      out << "wrote " << res.runs.size() << " runs to " << sweep_out << "\n";
      return any_failed ? 2 : 0;
    }
    if (*oracle) {
      LinRegProblem p{parse_vector(ov, "--v"), parse_vector(ox, "--x"), oy, osigma, ogamma};
      try {
        p.validate();
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
      const double closed = closed_form_alignment(p);
      const MonteCarloResult mc = monte_carlo_alignment_parallel(p, osamples, oseed, jobs);
      const double se = mc.std_error();
      const double gap = std::abs(mc.mean - closed);
      const bool agree = gap <= 4.0 * se || gap <= 1e-12 * std::max(1.0, std::abs(closed));
      out << "closed_form " << format_real(closed) << "\n"
          << "monte_carlo " << format_real(mc.mean) << " +- " << format_real(se) << " (n=" << mc.n
          << ")\n"
          << "agreement " << (agree ? "yes" : "no") << " (|diff| = " << fmt(gap) << ")\n";
      return agree ? 0 : 2;
    }
    if (*fit) {
      const BoundaryFit f = phase_boundary_fit(read_phase_grid(grid_path));
      nlohmann::json j;
      j["exponent"] = f.exponent;
      j["coefficient"] = f.coefficient;
      j["residual"] = f.residual;
      j["crossings"] = nlohmann::json::array();
      for (const auto& c : f.crossings) j["crossings"].push_back({{"sigma", c.sigma}, {"gamma", c.gamma}});
      j["columns_without_crossing"] = f.columns_without_crossing;
      out << "exponent " << fmt(f.exponent) << ", coefficient " << fmt(f.coefficient)
          << ", rms log residual " << fmt(f.residual) << ", " << f.crossings.size()
          << " crossings\n";
      if (!fit_out.empty()) write_file_atomic(fit_out, j.dump(2) + "\n");
      return 0;
    }
    if (*exp) {
      for (const auto& p : export_bundles(export_dir, export_out)) out << "wrote " << p.string() << "\n";
      return 0;
    }
    if (*val) {
      if (print_schema) {
        for (const auto& k : config_schema()) out << k.key << "\t" << k.help << "\n";
        return 0;
      }
      if (!validate_path.empty()) validate_flags.config = validate_path;
      const ExperimentConfig cfg = build_config(validate_flags);
      out << serialize_config(cfg);
      return 0;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const BoundaryNotFound& e) {
    err << "no phase boundary: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace hebbalign
