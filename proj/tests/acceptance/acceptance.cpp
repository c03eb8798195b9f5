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

// Acceptance harness: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "maskref/core.hpp"
#include "maskref/model.hpp"
#include "maskref/oracle.hpp"
#include "maskref/reward.hpp"
#include "maskref/rng.hpp"
#include "maskref/samplers.hpp"
#include "maskref/stats.hpp"
#include "maskref_cli/config.hpp"
#include "maskref_cli/experiment.hpp"

using namespace maskref;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

// L=2, V=2, T=8, exact posterior, random data (seed 7), PatternMatch "ab", alpha 0.1.
struct OracleInstance {
  std::shared_ptr<const DataDistribution> data =
      std::make_shared<const DataDistribution>(DataDistribution::random(2, 2, 7));
  Schedule schedule = Schedule::linear(8);
  Denoiser denoiser{DenoiserKind::kExactPosterior, data, schedule};
  RewardSpec spec{TerminalReward::parse("pattern:ab", data->vocab()), 0.1, RewardMode::exact()};
};

const OracleInstance& oracle_instance() {
  static const OracleInstance inst;
  return inst;
}

constexpr int kJump = 2;

Outcome criterion1() {
  const auto& o = oracle_instance();
  double asym = 0.0, rev = 0.0;
  for (int t : {2, 4, 6}) {
    const auto b = oracle::balance_audit(o.denoiser, o.spec, t, kJump);
    asym = std::max(asym, b.max_lambda_asymmetry);
    rev = std::max(rev, b.max_kernel_reversibility_residual);
  }
  return {asym <= 1e-10 && rev <= 1e-10,
          "lambda asymmetry " + fmt("%.2e", asym) + ", reversibility " + fmt("%.2e", rev)};
}

Outcome criterion2() {
  const auto& o = oracle_instance();
  double spread = 0.0;
  for (int t = 1; t < o.schedule.T(); ++t) {
    spread = std::max(spread, oracle::balance_audit(o.denoiser, o.spec, t, kJump).weight_spread);
  }
  // Sampled pools as well: spread of the weights of actual candidates.
  RngStream rng(2, 0);
  for (int t = 1; t < o.schedule.T(); ++t) {
    const MtmTables tables = oracle::mtm_tables(o.denoiser, o.spec, t, kJump);
    for (int c = 0; c < 50; ++c) {
      const Sequence x = decode(rng.categorical(tables.marginal), 2, o.data->vocab());
      const auto g = generic_mtm_step(o.denoiser, o.spec, tables, x, 4, rng);
      spread = std::max(spread, g.forward_weight_spread);
    }
  }
  return {spread <= 1e-10, "relative spread " + fmt("%.2e", spread)};
}

Outcome criterion3() {
  const auto& o = oracle_instance();
  RngStream rng(3, 0);
  std::map<int, MtmTables> tables;
  double gap = 0.0;
  for (int c = 0; c < 1000; ++c) {
    const int t = 1 + static_cast<int>(rng.below(o.schedule.T() - 1));
    auto it = tables.find(t);
    if (it == tables.end()) it = tables.emplace(t, oracle::mtm_tables(o.denoiser, o.spec, t, kJump)).first;
    const Sequence x = decode(rng.categorical(it->second.marginal), 2, o.data->vocab());
    const std::size_t N = 1 + rng.below(4);
    const auto g = generic_mtm_step(o.denoiser, o.spec, it->second, x, N, rng);
    gap = std::max(gap, std::abs(g.acceptance_ratio - g.closed_form_beta));
  }
  return {gap <= 1e-10, "max |generic - closed form| " + fmt("%.2e", gap) + " over 1000 cases"};
}

Outcome criterion4() {
  const auto& o = oracle_instance();
  double db = 0.0, fixed = 0.0;
  for (int t = 1; t < o.schedule.T(); ++t) {
    const auto b = oracle::balance_audit(o.denoiser, o.spec, t, kJump);
    db = std::max(db, b.max_detailed_balance_residual);
    fixed = std::max(fixed, b.stationarity_residual);
  }
  return {db <= 1e-10 && fixed <= 1e-10,
          "detailed balance " + fmt("%.2e", db) + ", stationarity " + fmt("%.2e", fixed)};
}

Outcome criterion5() {
  const auto& o = oracle_instance();
  IterRefConfig cfg;
  cfg.N = 4;
  cfg.k = 1;
  cfg.jump = kJump;
  const auto series = oracle::chain_convergence(o.denoiser, o.spec, 4, cfg, 50000, 200, {200},
                                                RngStream(5, 0));
  const double initial = series.front().tv;
  const double last = series.back().tv;
  return {initial >= 0.2 && last <= 0.05,
          "TV " + fmt("%.4f", initial) + " at start, " + fmt("%.4f", last) + " at iteration 200"};
}

Outcome criterion6() {
  const auto& o = oracle_instance();
  double worst = 0.0;
  for (int t = 1; t <= o.schedule.T(); ++t) {
    worst = std::max(worst, oracle::push_through_residual(
                                oracle::exact_target(*o.data, o.schedule, o.spec, t),
                                oracle::exact_optimal_kernel(o.denoiser, o.spec, t),
                                oracle::exact_target(*o.data, o.schedule, o.spec, t - 1)));
  }
  return {worst <= 1e-10, "max per-state residual " + fmt("%.2e", worst)};
}

Outcome criterion7() {
  auto data = std::make_shared<const DataDistribution>(DataDistribution::uniform(2, 2));
  const Schedule schedule = Schedule::linear(8);
  const Denoiser d(DenoiserKind::kExactPosterior, data, schedule);
  const Vocab& vocab = data->vocab();
  const RewardSpec pattern(TerminalReward::parse("pattern:ab", vocab), 0.1,
                           RewardMode::x0_prediction());
  const RewardSpec zero(TerminalReward::constant(0.0), 0.1, RewardMode::x0_prediction());
  IterRefConfig refine;
  refine.N = 1;
  refine.k = 1;
  refine.jump = default_jump(8);
  for (int t = 1; t <= 8; ++t) refine.effective_set.insert(t);

  constexpr std::size_t kRuns = 100000;
  using Arm = std::function<Sequence(RngStream&)>;
  auto counts = [&](const Arm& arm, std::uint64_t stream) {
    std::vector<std::uint64_t> c(terminal_space_size(2, 2), 0);
    RngStream rng(7, stream);
    for (std::size_t i = 0; i < kRuns; ++i) ++c[encode_terminal(arm(rng), vocab)];
    return c;
  };
  const auto base = counts([&](RngStream& r) { return ancestral(d, pattern, r).sample; }, 0);
  const std::vector<std::pair<std::string, Arm>> arms{
      {"bon", [&](RngStream& r) { return best_of_n(d, pattern, 1, r).sample; }},
      {"svdd", [&](RngStream& r) { return svdd(d, pattern, 1, r).sample; }},
      {"fk", [&](RngStream& r) { return fk_steering(d, pattern, 1, 4, r).sample; }},
      {"iterref", [&](RngStream& r) { return iterref(d, zero, refine, r).sample; }},
  };
  bool ok = true;
  std::string detail;
  std::uint64_t stream = 1;
  for (const auto& [name, arm] : arms) {
    const auto p = stats::chi_squared_two_sample(base, counts(arm, stream++)).p_value;
    ok = ok && p > 0.01;
    detail += (detail.empty() ? "" : ", ") + name + " p=" + fmt("%.3f", p);
  }
  return {ok, detail};
}

cli::ExperimentConfig budget_config(const std::string& name) {
  return cli::load_config(std::string(MASKREF_SOURCE_DIR) + "/configs/" + name);
}

std::map<std::pair<std::string, double>, std::vector<double>> group_rewards(
    const std::vector<cli::ResultRow>& rows) {
  std::map<std::pair<std::string, double>, std::vector<double>> out;
  for (const auto& r : rows) out[{r.sampler, r.budget}].push_back(r.terminal_reward);
  return out;
}

// Passes a comparison when IterRef's mean is at least the baseline's and the
// one-sided Wilcoxon rank-sum test finds no evidence that the baseline is
// better (p >= 0.05). The p-value for IterRef > baseline is printed too.
Outcome criterion8() {
  bool ok = true;
  std::string detail;
  for (const char* file : {"budget_token_count.ini", "budget_pattern.ini"}) {
    const cli::ExperimentConfig cfg = budget_config(file);
    const auto groups = group_rewards(cli::run_sweep(cfg).rows);
    for (double b : cfg.budgets) {
      const auto& ours = groups.at({"iterref", b});
      for (const char* base : {"bon", "svdd", "fk"}) {
        const auto& theirs = groups.at({base, b});
        const double m_ours = stats::mean(ours);
        const double m_theirs = stats::mean(theirs);
        const double p_worse = stats::mann_whitney_greater(theirs, ours).p_value;
        const double p_better = stats::mann_whitney_greater(ours, theirs).p_value;
        const bool pass = m_ours >= m_theirs && p_worse >= 0.05;
        ok = ok && pass;
        char buf[200];
        std::snprintf(buf, sizeof(buf),
                      "\n      %-4s %s %gx %-4s iterref %.4f vs %.4f  p(base>iterref)=%.3f "
                      "p(iterref>base)=%.3f",
                      pass ? "ok" : "LOSS", cfg.reward.name.c_str(), b, base, m_ours, m_theirs,
                      p_worse, p_better);
        detail += buf;
      }
    }
  }
  return {ok, detail};
}

// Grid over k, N in {1, 2, 4, 8}; adjacent cells along either axis must not
// drop by more than the sum of their standard errors.
Outcome criterion9() {
  constexpr std::size_t kReplicates = 200;
  const std::vector<std::size_t> axis{1, 2, 4, 8};
  bool ok = true;
  std::string detail;
  for (const char* file : {"budget_token_count.ini", "budget_pattern.ini"}) {
    const cli::ExperimentConfig cfg = budget_config(file);
    const cli::Instance inst = cli::build_instance(cfg);
    const int T = inst.schedule.T();
    std::map<std::pair<std::size_t, std::size_t>, std::pair<double, double>> cell;  // (k,N) -> mean,se
    std::size_t cell_index = 0;
    for (std::size_t k : axis) {
      for (std::size_t N : axis) {
        IterRefConfig rc;
        rc.k = k;
        rc.N = N;
        rc.jump = cfg.settings.iterref_jump > 0 ? cfg.settings.iterref_jump : default_jump(T);
        rc.effective_set = every_nth_step(T, cfg.kn.stride);
        std::vector<double> rewards;
        for (std::size_t rep = 0; rep < kReplicates; ++rep) {
          RngStream rng(cli::row_seed(cfg.seed, "grid", cell_index, rep), 0);
          const auto res = iterref(inst.denoiser, inst.reward, rc, rng);
          rewards.push_back(terminal_reward(inst.reward, res.sample, inst.data->vocab()));
        }
        cell[{k, N}] = {stats::mean(rewards), stats::standard_error(rewards)};
        ++cell_index;
      }
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "\n      %s, mean reward by k (rows) and N (cols):",
                  cfg.reward.name.c_str());
    detail += buf;
    for (std::size_t k : axis) {
      std::snprintf(buf, sizeof(buf), "\n      k=%zu", k);
      detail += buf;
      for (std::size_t N : axis) {
        const auto [m, se] = cell[{k, N}];
        std::snprintf(buf, sizeof(buf), "  %.3f(%.3f)", m, se);
        detail += buf;
      }
    }
    auto check = [&](std::pair<std::size_t, std::size_t> lo, std::pair<std::size_t, std::size_t> hi) {
      const auto [m0, s0] = cell[lo];
      const auto [m1, s1] = cell[hi];
      if (m1 < m0 - (s0 + s1)) {
        ok = false;
        std::snprintf(buf, sizeof(buf), "\n      drop (k=%zu,N=%zu) %.3f -> (k=%zu,N=%zu) %.3f",
                      lo.first, lo.second, m0, hi.first, hi.second, m1);
        detail += buf;
      }
    };
    for (std::size_t i = 0; i + 1 < axis.size(); ++i) {
      for (std::size_t fixed : axis) {
        check({axis[i], fixed}, {axis[i + 1], fixed});  // along k at fixed N
        check({fixed, axis[i]}, {fixed, axis[i + 1]});  // along N at fixed k
      }
    }
  }
  return {ok, detail};
}

// Random sampler configurations; every ledger must equal its analytic cost
// (replayed from the trace for IterRef).
Outcome criterion10() {
  RngStream rng(10, 0);
  std::size_t mismatches = 0;
  std::map<std::string, int> tally;
  for (int c = 0; c < 100; ++c) {
    const std::size_t L = 2 + rng.below(2);
    const int V = 2 + static_cast<int>(rng.below(2));
    const int T = 2 + static_cast<int>(rng.below(11));
    auto data = std::make_shared<const DataDistribution>(
        DataDistribution::random(L, V, rng.next_u64()));
    const Schedule schedule = Schedule::linear(T);
    const Denoiser d(rng.bernoulli(0.5) ? DenoiserKind::kExactPosterior : DenoiserKind::kMeanField,
                     data, schedule);
    const RewardMode mode = std::vector<RewardMode>{
        RewardMode::exact(), RewardMode::x0_prediction(),
        RewardMode::monte_carlo(1 + static_cast<std::uint32_t>(rng.below(5)))}[rng.below(3)];
    const bool flat = rng.bernoulli(0.25);
    const RewardSpec spec(flat ? TerminalReward::constant(0.0) : TerminalReward::token_count(0),
                          std::pow(10.0, -1.0 + rng.uniform()), mode);
    const std::size_t n = 1 + rng.below(6);
    NfeLedger got, want;
    const char* names[] = {"ancestral", "bon", "svdd", "fk", "sop", "iterref"};
    const std::size_t which = rng.below(6);
    switch (which) {
      case 0:
        got = ancestral(d, spec, rng).ledger;
        want = cost::ancestral(T);
        break;
      case 1:
        got = best_of_n(d, spec, n, rng).ledger;
        want = cost::best_of_n(T, n);
        break;
      case 2:
        got = svdd(d, spec, n, rng).ledger;
        want = cost::svdd(T, n, mode);
        break;
      case 3: {
        const std::size_t every = 1 + rng.below(4);
        got = fk_steering(d, spec, n, every, rng).ledger;
        want = cost::fk_steering(T, n, every, mode);
        break;
      }
      case 4: {
        SopConfig sc;
        sc.n = n;
        sc.m = 1 + rng.below(3);
        sc.remask_fraction = 0.2 + 0.7 * rng.uniform();
        got = sop_discrete(d, spec, sc, rng).ledger;
        want = cost::sop_discrete(sc, schedule, mode);
        break;
      }
      default: {
        IterRefConfig rc;
        rc.N = 1 + rng.below(4);
        rc.k = 1 + rng.below(5);
        rc.jump = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
        rc.pool_reuse = rng.bernoulli(0.5);
        for (int t = 1; t <= T; ++t) {
          if (rng.bernoulli(0.4)) rc.effective_set.insert(t);
        }
        if (rc.effective_set.empty()) rc.effective_set.insert(1 + static_cast<int>(rng.below(T)));
        if (rng.bernoulli(0.3)) rc.nfe_cap = T + rng.below(static_cast<std::uint64_t>(8 * T));
        const auto res = iterref(d, spec, rc, rng);
        got = res.ledger;
        want = cost::iterref_replay(T, rc, mode, res.trace);
        if (flat && !rc.nfe_cap) {
          // Constant reward: every candidate is accepted, so each iteration
          // draws a full pool.
          std::uint64_t refined = 0;
          for (int t : rc.effective_set) refined += t < T ? 1 : 0;
          NfeLedger closed;
          closed.charge_denoiser(T + refined * rc.k * rc.N);
          closed.charge_reward(refined * (mode.cost() + rc.k * rc.N * mode.cost()));
          if (!(closed == got)) ++mismatches;
        }
        break;
      }
    }
    ++tally[names[which]];
    if (!(got == want)) ++mismatches;
  }
  std::string detail = std::to_string(mismatches) + " mismatches;";
  for (const auto& [name, count] : tally) detail += " " + name + "=" + std::to_string(count);
  return {mismatches == 0, detail};
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "lambda symmetry and kernel reversibility", 10, criterion1},
      {2, "uniform forward weights", 10, criterion2},
      {3, "generic vs closed-form acceptance", 30, criterion3},
      {4, "detailed balance and stationarity", 30, criterion4},
      {5, "chain convergence to the tilted target", 120, criterion5},
      {6, "optimal-kernel induction", 10, criterion6},
      {7, "sampler reductions to ancestral", 120, criterion7},
      {8, "budget sweep: iterref vs bon/svdd/fk", 600, criterion8},
      {9, "monotone scaling in k and N", 600, criterion9},
      {10, "NFE ledger replay", 60, criterion10},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.contains(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.limit_seconds;
    const bool pass = o.passed && in_time;
    if (!pass) ++failures;
    std::printf("%s [%d] %s (%.1fs of %.0fs%s): %s\n", pass ? "PASS" : "FAIL", c.id, c.name, secs,
                c.limit_seconds, in_time ? "" : ", over time", o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
