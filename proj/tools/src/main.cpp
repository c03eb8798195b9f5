// Copyright 2026 The maskref Authors
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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "maskref/error.hpp"
#include "maskref_cli/config.hpp"
#include "maskref_cli/experiment.hpp"
#include "maskref_cli/plot.hpp"
#include "maskref_cli/verify.hpp"

namespace fs = std::filesystem;
using namespace maskref;
using namespace maskref::cli;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerify = 2;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> instance;
  std::optional<std::string> denoiser;
  std::optional<std::string> reward;
  std::optional<double> alpha;
  std::optional<std::string> mode;
  std::optional<unsigned> workers;
  std::optional<std::size_t> replicates;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "INI experiment config");
  app->add_option("--seed", f.seed, "Experiment seed");
  app->add_option("--out", f.out, "Output directory");
  app->add_option("--instance", f.instance, "Instance as L,V,T");
  app->add_option("--denoiser", f.denoiser, "exact | meanfield");
  app->add_option("--reward", f.reward, "Terminal reward, e.g. token_count:a, pattern:abba");
  app->add_option("--alpha", f.alpha, "Reward temperature");
  app->add_option("--mode", f.mode, "exact | mc:<m> | x0pred");
  app->add_option("--workers", f.workers, "Worker threads");
  app->add_option("--replicates", f.replicates, "Replicates per arm");
}

ExperimentConfig resolve(const CommonFlags& f, ExperimentConfig base = {}) {
  ExperimentConfig cfg = f.config.empty() ? std::move(base) : load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.output = *f.out;
  if (f.instance) {
    std::stringstream ss(*f.instance);
    std::string l, v, t;
    if (!std::getline(ss, l, ',') || !std::getline(ss, v, ',') || !std::getline(ss, t) ) {
      throw InvalidArgument("--instance expects L,V,T");
    }
    try {
      cfg.instance.length = std::stoul(l);
      cfg.instance.vocab = std::stoi(v);
      cfg.instance.T = std::stoi(t);
    } catch (const std::logic_error&) {
      throw InvalidArgument("--instance expects L,V,T");
    }
  }
  if (f.denoiser) cfg.instance.denoiser = *f.denoiser;
  if (f.reward) cfg.reward.name = *f.reward;
  if (f.alpha) cfg.reward.alpha = *f.alpha;
  if (f.mode) cfg.reward.mode = *f.mode;
  if (f.workers) cfg.workers = *f.workers;
  if (f.replicates) cfg.replicates = *f.replicates;
  cfg.validate();
  return cfg;
}

// Defaults for `verify`: the small oracle instance.
ExperimentConfig verify_defaults() {
  ExperimentConfig cfg;
  cfg.instance.length = 2;
  cfg.instance.vocab = 2;
  cfg.instance.T = 8;
  cfg.instance.data = "random";
  cfg.instance.data_seed = 7;
  cfg.instance.denoiser = "exact";
  cfg.reward.name = "pattern:ab";
  cfg.reward.mode = "exact";
  return cfg;
}

std::ofstream open_output(const ExperimentConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.output);
  const fs::path path = fs::path(cfg.output) / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"maskref: reward-guided sampling for masked discrete diffusion"};
  app.require_subcommand(1);

  CommonFlags run_f, sweep_f, ts_f, kn_f, verify_f;
  std::string run_sampler = "iterref";
  double run_budget = 4.0;
  std::string trace_path;
  auto* run = app.add_subcommand("run", "Run one sampler at one budget");
  add_common(run, run_f);
  run->add_option("--sampler", run_sampler, "ancestral | bon | svdd | fk | sop | iterref");
  run->add_option("--budget", run_budget, "NFE budget as a multiple of T");
  run->add_option("--trace", trace_path, "Write the IterRef trace CSV here");

  auto* sweep = app.add_subcommand("sweep", "Budget sweep over all configured samplers");
  add_common(sweep, sweep_f);
  auto* ts = app.add_subcommand("timesteps", "IterRef applied at single levels vs evenly");
  add_common(ts, ts_f);
  auto* kn = app.add_subcommand("kn", "IterRef over (k, N) pairs with a fixed k*N");
  add_common(kn, kn_f);

  VerifyOptions vopts;
  auto* verify = app.add_subcommand("verify", "Exact-enumeration audit of the refinement chain");
  add_common(verify, verify_f);
  verify->add_option("--jump", vopts.jump, "Kernel noising jump (0 = ceil(T/10))");
  verify->add_option("--chains", vopts.chains, "Chains for the convergence check");

  std::string plot_csv_path, plot_svg_path;
  auto* plot = app.add_subcommand("plot", "Render a results CSV as SVG");
  plot->add_option("csv", plot_csv_path, "Results CSV")->required();
  plot->add_option("svg", plot_svg_path, "Output SVG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (verify->parsed()) {
    try {
      const ExperimentConfig cfg = resolve(verify_f, verify_defaults());
      const VerifyReport report = verify_instance(cfg, vopts);
      print_verify(std::cout, report);
      return report.all_passed() ? kExitOk : kExitVerify;
    } catch (const std::exception& e) {
      std::cerr << "verify: " << e.what() << '\n';
      return kExitVerify;
    }
  }

  try {
    if (run->parsed()) {
      const ExperimentConfig cfg = resolve(run_f);
      const Instance inst = build_instance(cfg);
      const SamplerPlan plan = plan_for_budget(run_sampler, run_budget, cfg, inst);
      RngStream rng(row_seed(cfg.seed, run_sampler, 0, 0), 0);
      const RunOutcome out = execute(plan, inst, rng);
      std::cout << "sampler: " << run_sampler << " (n=" << plan.n << ")\n"
                << "sample: " << to_string(out.sample, inst.data->vocab()) << '\n'
                << "terminal_reward: "
                << format_double(terminal_reward(inst.reward, out.sample, inst.data->vocab())) << '\n'
                << "nfe_denoiser: " << out.ledger.denoiser_evals() << '\n'
                << "nfe_reward: " << out.ledger.reward_evals() << '\n'
                << "budget: " << plan.budget_nfe << '\n';
      if (!plan.note.empty()) std::cerr << plan.note << '\n';
      for (const auto& n : out.notes) std::cerr << n << '\n';
      if (!trace_path.empty()) {
        std::ofstream t(trace_path, std::ios::binary);
        if (!t) throw InvalidArgument("cannot write " + trace_path);
        write_trace_csv(t, out.trace);
      }
    } else if (sweep->parsed()) {
      const ExperimentConfig cfg = resolve(sweep_f);
      const SweepResult res = run_sweep(cfg);
      auto csv = open_output(cfg, "results.csv");
      write_rows_csv(csv, res.rows);
      auto summary = open_output(cfg, "summary.txt");
      print_summary(summary, res.summary);
      print_summary(std::cout, res.summary);
      for (const auto& line : res.log) std::cerr << line << '\n';
    } else if (ts->parsed()) {
      const ExperimentConfig cfg = resolve(ts_f);
      const auto rows = run_timestep_study(cfg);
      auto csv = open_output(cfg, "timesteps.csv");
      write_study_csv(csv, rows);
      write_study_csv(std::cout, rows);
    } else if (kn->parsed()) {
      const ExperimentConfig cfg = resolve(kn_f);
      const auto rows = run_kn_study(cfg);
      auto csv = open_output(cfg, "kn.csv");
      write_study_csv(csv, rows);
      write_study_csv(std::cout, rows);
    } else if (plot->parsed()) {
      plot_csv(plot_csv_path, plot_svg_path);
    }
  } catch (const CapExceeded& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitVerify;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}
