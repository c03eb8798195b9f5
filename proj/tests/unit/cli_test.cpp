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

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "maskref/error.hpp"
#include "maskref/samplers.hpp"
#include "maskref/stats.hpp"
#include "maskref_cli/config.hpp"
#include "maskref_cli/experiment.hpp"
#include "maskref_cli/plot.hpp"

namespace fs = std::filesystem;

namespace maskref::cli {
namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("maskref_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

int run_exe(const std::string& args) {
  const std::string cmd = std::string(MASKREF_EXE) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.instance.length = 2;
  cfg.instance.vocab = 2;
  cfg.instance.T = 8;
  cfg.instance.data = "random";
  cfg.instance.data_seed = 3;
  cfg.reward.name = "pattern:ab";
  cfg.replicates = 20;
  cfg.budgets = {1, 2, 4};
  return cfg;
}

std::string serialized(const ExperimentConfig& cfg) {
  std::ostringstream out;
  write_config(out, cfg);
  return out.str();
}

TEST(Config, RoundTripIsIdempotent) {
  ExperimentConfig cfg = small_config();
  cfg.instance.schedule = "custom";
  cfg.instance.alphas = {1, 0.9, 0.7, 0.55, 0.4, 0.3, 0.2, 0.1, 0};
  cfg.reward.alpha = 0.1 + 0.2;  // not exactly representable
  cfg.settings.sop_remask_fraction = 1.0 / 3.0;
  cfg.kn.pairs = {{2, 4}, {8, 1}};
  const std::string once = serialized(cfg);
  std::istringstream in(once);
  const std::string twice = serialized(parse_config(in));
  EXPECT_EQ(once, twice);
  for (const char* file : {"budget_token_count.ini", "budget_pattern.ini"}) {
    const std::string first = serialized(load_config(std::string(MASKREF_SOURCE_DIR) + "/configs/" + file));
    std::istringstream again(first);
    EXPECT_EQ(serialized(parse_config(again)), first) << file;
  }
}

TEST(Config, RejectsUnknownAndMalformed) {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
  };
  EXPECT_THROW(parse("[experiment]\nbogus = 1\n"), InvalidArgument);
  EXPECT_THROW(parse("[nowhere]\nseed = 1\n"), InvalidArgument);
  EXPECT_THROW(parse("[experiment]\nreplicates = 2x\n"), InvalidArgument);
  EXPECT_THROW(parse("[reward]\nalpha = -1\n"), InvalidArgument);
  EXPECT_THROW(parse("[experiment]\nsamplers = bon,magic\n"), InvalidArgument);
  EXPECT_THROW(parse("[experiment]\nbudgets = 0.5\n"), InvalidArgument);
  EXPECT_EQ(parse("[experiment]\nseed = 9\n").seed, 9U);
}

TEST(Plan, EvenlySpacedSteps) {
  EXPECT_EQ(evenly_spaced_steps(24, 3), (std::set<int>{6, 12, 18}));
  EXPECT_EQ(evenly_spaced_steps(8, 7).size(), 7U);
  EXPECT_THROW(evenly_spaced_steps(8, 8), InvalidArgument);
}

TEST(Plan, FitsTheBudget) {
  ExperimentConfig cfg = small_config();
  cfg.instance.length = 3;
  cfg.instance.T = 12;
  const Instance inst = build_instance(cfg);
  for (const auto& sampler : known_samplers()) {
    for (double m : {1.0, 2.0, 4.0, 8.0, 16.0}) {
      const SamplerPlan plan = plan_for_budget(sampler, m, cfg, inst);
      EXPECT_EQ(plan.budget_nfe, static_cast<std::uint64_t>(m * 12));
      if (plan.note.empty()) {
        EXPECT_LE(plan.predicted.total(), plan.budget_nfe) << sampler << " " << m;
      }
    }
    const SamplerPlan floor = plan_for_budget(sampler, 1.0, cfg, inst);
    if (sampler != "sop") {
      EXPECT_EQ(floor.predicted, cost::ancestral(12)) << sampler;
    }
  }
  EXPECT_THROW(plan_for_budget("bon", 0.5, cfg, inst), InvalidArgument);
}

TEST(Sweep, RowCountAndFairness) {
  ExperimentConfig cfg = small_config();
  cfg.samplers = {"bon", "iterref"};
  const SweepResult res = run_sweep(cfg);
  EXPECT_EQ(res.rows.size(), 120U);
  EXPECT_EQ(res.summary.size(), 6U);
  const Instance inst = build_instance(cfg);
  for (const auto& row : res.rows) {
    const SamplerPlan plan = plan_for_budget(row.sampler, row.budget, cfg, inst);
    // One refinement iteration: a fresh pool plus the chain's own reward.
    const std::uint64_t slack = plan.iterref.N * 2 + 1;
    EXPECT_LE(row.nfe_denoiser + row.nfe_reward, plan.budget_nfe + slack);
  }
}

TEST(Sweep, DeterministicAcrossRunsAndWorkers) {
  ExperimentConfig cfg = small_config();
  cfg.samplers = {"bon", "svdd", "fk", "sop", "iterref"};
  std::ostringstream a, b, c;
  write_rows_csv(a, run_sweep(cfg).rows);
  write_rows_csv(b, run_sweep(cfg).rows);
  cfg.workers = 4;
  write_rows_csv(c, run_sweep(cfg).rows);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str(), c.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')), kResultHeader);
}

TEST(Sweep, RowSeedReproducesTheRow) {
  ExperimentConfig cfg = small_config();
  cfg.samplers = {"fk"};
  cfg.budgets = {4};
  const SweepResult res = run_sweep(cfg);
  const Instance inst = build_instance(cfg);
  const SamplerPlan plan = plan_for_budget("fk", 4, cfg, inst);
  for (const auto& row : res.rows) {
    RngStream rng(row.seed, 0);
    const RunOutcome out = execute(plan, inst, rng);
    EXPECT_EQ(terminal_reward(inst.reward, out.sample, inst.data->vocab()), row.terminal_reward);
    EXPECT_EQ(out.ledger.denoiser_evals(), row.nfe_denoiser);
  }
}

TEST(Sweep, UnitBudgetIsIndistinguishable) {
  ExperimentConfig cfg = small_config();
  cfg.samplers = {"bon", "svdd", "fk", "iterref"};
  cfg.budgets = {1};
  cfg.replicates = 400;
  cfg.reward.name = "token_count:a";
  std::map<std::string, std::vector<double>> by;
  for (const auto& row : run_sweep(cfg).rows) by[row.sampler].push_back(row.terminal_reward);
  for (const auto& [name, rewards] : by) {
    if (name == "bon") continue;
    const double one = stats::mann_whitney_greater(rewards, by["bon"]).p_value;
    const double other = stats::mann_whitney_greater(by["bon"], rewards).p_value;
    EXPECT_GT(2 * std::min(one, other), 0.01) << name;
  }
}

TEST(Sweep, CsvRoundTrip) {
  ExperimentConfig cfg = small_config();
  cfg.samplers = {"svdd"};
  const auto rows = run_sweep(cfg).rows;
  std::ostringstream out;
  write_rows_csv(out, rows);
  std::istringstream in(out.str());
  const auto back = read_rows_csv(in);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].terminal_reward, rows[i].terminal_reward);
    EXPECT_EQ(back[i].seed, rows[i].seed);
  }
  std::istringstream bad("sampler,budget\nbon,1\n");
  EXPECT_THROW(read_rows_csv(bad), InvalidArgument);
}

TEST(Plot, DeterministicAndSinglePoint) {
  TempDir dir;
  ExperimentConfig cfg = small_config();
  cfg.samplers = {"bon"};
  cfg.budgets = {2};
  std::ofstream(dir / "r.csv") << [&] {
    std::ostringstream s;
    write_rows_csv(s, run_sweep(cfg).rows);
    return s.str();
  }();
  plot_csv((dir / "r.csv").string(), (dir / "a.svg").string());
  plot_csv((dir / "r.csv").string(), (dir / "b.svg").string());
  const std::string svg = slurp(dir / "a.svg");
  EXPECT_EQ(svg, slurp(dir / "b.svg"));
  EXPECT_EQ(svg.rfind("<svg", 0), 0U);
  EXPECT_NE(svg.find("bon"), std::string::npos);
}

TEST(Plot, EmptyCsvWritesNothing) {
  TempDir dir;
  spit(dir / "empty.csv", "");
  EXPECT_THROW(plot_csv((dir / "empty.csv").string(), (dir / "out.svg").string()), InvalidArgument);
  spit(dir / "header.csv", std::string(kResultHeader) + "\n");
  EXPECT_THROW(plot_csv((dir / "header.csv").string(), (dir / "out.svg").string()), InvalidArgument);
  EXPECT_FALSE(fs::exists(dir / "out.svg"));
}

TEST(Studies, TimestepArmsAndEqualCost) {
  ExperimentConfig cfg = small_config();
  cfg.instance.T = 10;
  cfg.timesteps.fractions = {1.0, 0.5, 0.1};
  cfg.timesteps.k = 8;
  cfg.timesteps.N = 2;
  cfg.timesteps.evenly_steps = 4;
  const auto rows = run_timestep_study(cfg);
  ASSERT_EQ(rows.size(), 4U);
  EXPECT_EQ(rows[0].steps, std::vector<int>{9});  // f = 1 clamps to T - 1
  EXPECT_EQ(rows[1].steps, std::vector<int>{5});
  EXPECT_EQ(rows[2].steps, std::vector<int>{1});
  EXPECT_EQ(rows[3].arm, "evenly");
  EXPECT_EQ(rows[3].k, 2U);
  // One refined-step cost of the evenly arm: its chain reward plus k fresh pools.
  const double step = 1 + 2.0 * 2 * 2;
  double lo = rows[0].mean_nfe, hi = rows[0].mean_nfe;
  for (const auto& r : rows) {
    lo = std::min(lo, r.mean_nfe);
    hi = std::max(hi, r.mean_nfe);
  }
  EXPECT_LE(hi - lo, step);
}

TEST(Studies, KnRowsShareTheirCost) {
  ExperimentConfig cfg = small_config();
  cfg.instance.T = 12;
  const auto rows = run_kn_study(cfg);
  ASSERT_EQ(rows.size(), 6U);
  EXPECT_EQ(rows.front().arm, "k=1,N=32");
  EXPECT_EQ(rows.back().arm, "k=32,N=1");
  for (const auto& r : rows) EXPECT_EQ(r.mean_nfe, rows.front().mean_nfe);
  cfg.kn.pairs = {{2, 4}, {3, 3}};
  EXPECT_THROW(run_kn_study(cfg), InvalidArgument);
}

// The (k=1, N) row against a separate one-shot selection loop: per refined
// step, N kernel draws, a uniform pick and one accept/reject.
TEST(Studies, SingleIterationRowMatchesOneShotSelection) {
  ExperimentConfig cfg = small_config();
  cfg.instance.T = 8;
  cfg.reward.mode = "exact";
  cfg.kn.pairs = {{1, 6}, {6, 1}};
  cfg.kn.stride = 2;
  cfg.replicates = 20000;
  const auto rows = run_kn_study(cfg);
  const Instance inst = build_instance(cfg);
  const Vocab& v = inst.data->vocab();
  const int T = inst.schedule.T();
  const std::set<int> steps = every_nth_step(T, cfg.kn.stride);
  const int jump = default_jump(T);
  std::vector<std::uint64_t> theirs(4, 0);
  RngStream rng(77, 0);
  NfeLedger ledger;
  for (std::size_t rep = 0; rep < cfg.replicates; ++rep) {
    Sequence x = Sequence::all_mask(2, v);
    for (int t = T; t >= 1; --t) {
      if (steps.contains(t)) {
        std::vector<KernelDraw> pool;
        for (int j = 0; j < 6; ++j) pool.push_back(kernel_propose(inst.denoiser, inst.reward, x, t, jump, rng, ledger));
        const KernelDraw& pick = pool[rng.below(6)];
        const double r_now = intermediate_reward(inst.reward, inst.denoiser, x, t, rng).value;
        if (rng.bernoulli(closed_form_acceptance(r_now, pick.reward.value, inst.reward.alpha))) x = pick.proposal;
      }
      x = reverse_step(inst.denoiser, x, t, t - 1, rng);
    }
    ++theirs[encode_terminal(x, v)];
  }
  // Study rows only keep rewards; compare reward histograms (pattern:ab is 0/1).
  std::vector<std::uint64_t> mine(2, 0), ref(2, 0);
  for (double r : rows.front().rewards) ++mine[r > 0.5 ? 1 : 0];
  const auto ab = encode_terminal(parse_sequence("ab", v), v);
  for (StateIndex s = 0; s < 4; ++s) ref[s == ab ? 1 : 0] += theirs[s];
  EXPECT_GT(stats::chi_squared_two_sample(mine, ref).p_value, 0.01);
}

TEST(Executable, VerifyExitCodes) {
  TempDir dir;
  EXPECT_EQ(run_exe("verify --chains 4000"), 0);
  EXPECT_EQ(run_exe("verify --chains 4000 --denoiser meanfield"), 0);
  spit(dir / "bad.ini",
       "[instance]\nlength = 2\nvocab = 2\nT = 4\nschedule = custom\nalphas = 1,0.4,0.6,0.2,0\n"
       "data = random\ndenoiser = exact\n[reward]\nname = pattern:ab\nmode = exact\n");
  EXPECT_EQ(run_exe("verify --config " + (dir / "bad.ini").string()), 2);
}

TEST(Executable, UsageErrorsAndCap) {
  TempDir dir;
  EXPECT_EQ(run_exe("frobnicate"), 1);
  EXPECT_EQ(run_exe("run --mode nonsense"), 1);
  spit(dir / "bad.ini", "[experiment]\nunknown_key = 1\n");
  EXPECT_EQ(run_exe("sweep --config " + (dir / "bad.ini").string()), 1);
  // Oracle matrices refuse (V+1)^L = 15625 states.
  EXPECT_EQ(run_exe("verify --instance 6,4,8"), 2);
}

TEST(Executable, SweepAndPlotFiles) {
  TempDir dir;
  const std::string out = (dir / "o").string();
  ASSERT_EQ(run_exe("sweep --instance 2,2,6 --reward pattern:ab --replicates 3 --out " + out), 0);
  const std::string first = slurp(dir / "o" / "results.csv");
  ASSERT_EQ(run_exe("sweep --instance 2,2,6 --reward pattern:ab --replicates 3 --out " + out), 0);
  EXPECT_EQ(slurp(dir / "o" / "results.csv"), first);
  EXPECT_TRUE(fs::exists(dir / "o" / "summary.txt"));
  ASSERT_EQ(run_exe("plot " + out + "/results.csv " + out + "/fig.svg"), 0);
  EXPECT_TRUE(fs::exists(dir / "o" / "fig.svg"));
  EXPECT_EQ(run_exe("run --instance 2,2,6 --reward pattern:ab --sampler iterref --budget 4 --trace " + out + "/trace.csv"), 0);
  EXPECT_EQ(slurp(dir / "o" / "trace.csv").rfind("t,iter,candidate_idx", 0), 0U);
}

}  // namespace
}  // namespace maskref::cli
