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

#include "maskref_cli/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <istream>
#include <cstdio>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "maskref/error.hpp"
#include "maskref/stats.hpp"

namespace maskref::cli {

namespace {

// Runs job(i) for i in [0, count) on `workers` threads. Jobs write to their
// own slots, so the outcome is independent of scheduling.
void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& job) {
  workers = std::max(1U, std::min<unsigned>(workers, static_cast<unsigned>(count)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

int jump_for(const ExperimentConfig& cfg, int T) {
  return cfg.settings.iterref_jump > 0 ? cfg.settings.iterref_jump : default_jump(T);
}

template <typename CostFn>
std::size_t largest_fitting(std::uint64_t budget, CostFn cost) {
  std::size_t n = 1;
  while (cost(n + 1).total() <= budget) ++n;
  return n;
}

std::string overshoot_note(const SamplerPlan& plan) {
  std::ostringstream os;
  os << plan.sampler << " at " << format_double(plan.budget_multiplier)
     << "x: smallest configuration costs " << plan.predicted.total() << " > budget "
     << plan.budget_nfe;
  return os.str();
}

double mean_of(const std::vector<double>& xs) { return stats::mean(xs); }

}  // namespace

std::set<int> evenly_spaced_steps(int T, std::size_t count) {
  if (T < 2) throw InvalidArgument("evenly_spaced_steps: need T >= 2");
  if (count == 0 || count > static_cast<std::size_t>(T - 1)) {
    throw InvalidArgument("evenly_spaced_steps: count must be in [1, T - 1]");
  }
  std::set<int> steps;
  const double gap = static_cast<double>(T) / static_cast<double>(count + 1);
  for (std::size_t j = 1; j <= count; ++j) {
    steps.insert(T - static_cast<int>(std::lround(gap * static_cast<double>(j))));
  }
  return steps;
}

SamplerPlan plan_for_budget(const std::string& sampler, double multiplier,
                            const ExperimentConfig& cfg, const Instance& inst) {
  if (!(multiplier >= 1.0)) {
    throw InvalidArgument("budget " + format_double(multiplier) + "x is below one ancestral pass");
  }
  const int T = inst.schedule.T();
  const RewardMode& mode = inst.reward.mode;
  SamplerPlan plan;
  plan.sampler = sampler;
  plan.budget_multiplier = multiplier;
  plan.budget_nfe = static_cast<std::uint64_t>(std::floor(multiplier * T + 1e-9));
  const std::uint64_t B = plan.budget_nfe;
  if (sampler == "ancestral") {
    plan.predicted = cost::ancestral(T);
  } else if (sampler == "bon") {
    plan.n = largest_fitting(B, [&](std::size_t n) { return cost::best_of_n(T, n); });
    plan.predicted = cost::best_of_n(T, plan.n);
  } else if (sampler == "svdd") {
    plan.n = largest_fitting(B, [&](std::size_t n) { return cost::svdd(T, n, mode); });
    plan.predicted = cost::svdd(T, plan.n, mode);
  } else if (sampler == "fk") {
    plan.resample_every = cfg.settings.fk_resample_every;
    plan.n = largest_fitting(
        B, [&](std::size_t n) { return cost::fk_steering(T, n, plan.resample_every, mode); });
    plan.predicted = cost::fk_steering(T, plan.n, plan.resample_every, mode);
  } else if (sampler == "sop") {
    plan.sop.m = cfg.settings.sop_m;
    plan.sop.remask_fraction = cfg.settings.sop_remask_fraction;
    plan.sop.denoise_levels = cfg.settings.sop_denoise_levels;
    plan.sop.start_level = cfg.settings.sop_start_level;
    auto sop_cost = [&](std::size_t n) {
      SopConfig c = plan.sop;
      c.n = n;
      return cost::sop_discrete(c, inst.schedule, mode);
    };
    if (sop_cost(1).total() > B && plan.sop.m > 1) {
      plan.sop.m = 1;
      plan.note = "sop at " + format_double(multiplier) + "x: m reduced to 1 to fit the budget";
    }
    // Then start the search closer to the end, which removes rounds.
    while (sop_cost(1).total() > B && sop_plan(plan.sop, inst.schedule).start_level > 1) {
      plan.sop.start_level = sop_plan(plan.sop, inst.schedule).start_level - 1;
      plan.note = "sop at " + format_double(multiplier) + "x: m = " + std::to_string(plan.sop.m) +
                  ", start level lowered to " + std::to_string(plan.sop.start_level) +
                  " to fit the budget";
    }
    plan.n = largest_fitting(B, sop_cost);
    plan.sop.n = plan.n;
    plan.predicted = sop_cost(plan.n);
    if (plan.predicted.total() > B) plan.note = overshoot_note(plan);
  } else if (sampler == "iterref") {
    IterRefConfig& ir = plan.iterref;
    ir.N = cfg.settings.iterref_N;
    ir.k = cfg.settings.iterref_k;
    ir.jump = jump_for(cfg, T);
    ir.pool_reuse = cfg.settings.iterref_pool_reuse;
    ir.nfe_cap = B;
    const bool reuse = ir.pool_reuse && cfg.settings.iterref_sizing == "reuse";
    auto planned = [&](const IterRefConfig& c) {
      if (!reuse) return cost::iterref_worst_case(T, c, mode);
      // Every pool fully consumed: ceil(k / N) refills per refined level.
      const std::uint64_t refills = (c.k + c.N - 1) / c.N;
      const auto u = static_cast<std::uint64_t>(c.effective_set.size());
      NfeLedger l = cost::ancestral(T);
      l.charge_denoiser(u * refills * c.N);
      l.charge_reward(mode.cost() * u * (1 + refills * c.N));
      return l;
    };
    std::size_t steps = 0;
    for (std::size_t u = 1; T >= 2 && u <= static_cast<std::size_t>(T - 1); ++u) {
      ir.effective_set = evenly_spaced_steps(T, u);
      if (planned(ir).total() > B) break;
      steps = u;
    }
    if (steps == 0) {
      // No refined level is affordable; the cap turns the run into ancestral sampling.
      ir.effective_set = T >= 2 ? evenly_spaced_steps(T, 1) : std::set<int>{T};
      plan.note = "iterref at " + format_double(multiplier) + "x: no refinement affordable";
      plan.predicted = cost::ancestral(T);
    } else {
      ir.effective_set = evenly_spaced_steps(T, steps);
      if (steps == static_cast<std::size_t>(T - 1)) {
        IterRefConfig more = ir;
        while (true) {
          more.k = ir.k + 1;
          if (planned(more).total() > B) break;
          ir.k = more.k;
        }
      }
      plan.predicted = planned(ir);
    }
  } else {
    throw InvalidArgument("unknown sampler '" + sampler + "'");
  }
  if (plan.note.empty() && plan.predicted.total() > B) plan.note = overshoot_note(plan);
  return plan;
}

RunOutcome execute(const SamplerPlan& plan, const Instance& inst, RngStream& rng) {
  const Denoiser& d = inst.denoiser;
  const RewardSpec& spec = inst.reward;
  auto from_sample = [](SampleResult r) {
    return RunOutcome{std::move(r.sample), r.ledger, std::move(r.notes), {}};
  };
  if (plan.sampler == "ancestral") return from_sample(ancestral(d, spec, rng));
  if (plan.sampler == "bon") return from_sample(best_of_n(d, spec, plan.n, rng));
  if (plan.sampler == "svdd") return from_sample(svdd(d, spec, plan.n, rng));
  if (plan.sampler == "fk") {
    return from_sample(fk_steering(d, spec, plan.n, plan.resample_every, rng));
  }
  if (plan.sampler == "sop") return from_sample(sop_discrete(d, spec, plan.sop, rng));
  if (plan.sampler == "iterref") {
    IterRefResult r = iterref(d, spec, plan.iterref, rng);
    return RunOutcome{std::move(r.sample), r.ledger, std::move(r.notes), std::move(r.trace)};
  }
  throw InvalidArgument("unknown sampler '" + plan.sampler + "'");
}

std::uint64_t row_seed(std::uint64_t seed, const std::string& sampler, std::size_t budget_index,
                       std::size_t replicate) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ fnv1a(sampler));
  h = mix64(h ^ (static_cast<std::uint64_t>(budget_index) << 32));
  return mix64(h ^ static_cast<std::uint64_t>(replicate));
}

SweepResult run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const Instance inst = build_instance(cfg);
  SweepResult result;
  std::vector<SamplerPlan> plans;
  for (const auto& s : cfg.samplers) {
    for (double b : cfg.budgets) {
      plans.push_back(plan_for_budget(s, b, cfg, inst));
      if (!plans.back().note.empty()) result.log.push_back(plans.back().note);
      if (plans.back().predicted.total() < plans.back().budget_nfe) {
        std::ostringstream os;
        os << s << " at " << format_double(b) << "x: planned cost "
           << plans.back().predicted.total() << " of " << plans.back().budget_nfe
           << " (shortfall " << plans.back().budget_nfe - plans.back().predicted.total() << ")";
        result.log.push_back(os.str());
      }
    }
  }
  const std::size_t per_plan = cfg.replicates;
  result.rows.resize(plans.size() * per_plan);
  std::vector<std::vector<std::string>> notes(result.rows.size());
  parallel_for(result.rows.size(), cfg.workers, [&](std::size_t task) {
    const std::size_t p = task / per_plan;
    const std::size_t rep = task % per_plan;
    const SamplerPlan& plan = plans[p];
    const std::size_t budget_index = p % cfg.budgets.size();
    ResultRow& row = result.rows[task];
    row.sampler = plan.sampler;
    row.budget = plan.budget_multiplier;
    row.replicate = rep;
    row.seed = row_seed(cfg.seed, plan.sampler, budget_index, rep);
    RngStream rng(row.seed, 0);
    const auto start = std::chrono::steady_clock::now();
    const RunOutcome out = execute(plan, inst, rng);
    const auto stop = std::chrono::steady_clock::now();
    row.terminal_reward = terminal_reward(inst.reward, out.sample, inst.data->vocab());
    row.nfe_denoiser = out.ledger.denoiser_evals();
    row.nfe_reward = out.ledger.reward_evals();
    if (cfg.wall_time) row.wall_time_ms = std::chrono::duration<double, std::milli>(stop - start).count();
    // Allowed overshoot: one refinement iteration for IterRef, one step otherwise.
    const std::uint64_t slack =
        plan.sampler == "iterref" ? plan.iterref.N * (1 + inst.reward.mode.cost()) + 1
                                  : static_cast<std::uint64_t>(plan.n) * (1 + inst.reward.mode.cost());
    if (out.ledger.total() > plan.budget_nfe + slack) {
      std::ostringstream os;
      os << plan.sampler << " at " << format_double(plan.budget_multiplier) << "x replicate " << rep
         << ": used " << out.ledger.total() << " NFE, budget " << plan.budget_nfe;
      notes[task].push_back(os.str());
    }
  });
  for (const auto& n : notes) result.log.insert(result.log.end(), n.begin(), n.end());
  result.summary = summarize(result.rows);
  return result;
}

void write_rows_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kResultHeader << '\n';
  for (const auto& r : rows) {
    out << r.sampler << ',' << format_double(r.budget) << ',' << r.replicate << ','
        << format_double(r.terminal_reward) << ',' << r.nfe_denoiser << ',' << r.nfe_reward << ','
        << format_double(r.wall_time_ms) << ',' << r.seed << '\n';
  }
}

std::vector<ResultRow> read_rows_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("results CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kResultHeader) throw InvalidArgument("results CSV header mismatch: " + line);
  std::vector<ResultRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() != 8) {
      throw InvalidArgument("results CSV line " + std::to_string(line_no) + ": expected 8 fields");
    }
    try {
      ResultRow r;
      r.sampler = f[0];
      r.budget = std::stod(f[1]);
      r.replicate = std::stoull(f[2]);
      r.terminal_reward = std::stod(f[3]);
      r.nfe_denoiser = std::stoull(f[4]);
      r.nfe_reward = std::stoull(f[5]);
      r.wall_time_ms = std::stod(f[6]);
      r.seed = std::stoull(f[7]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw InvalidArgument("results CSV line " + std::to_string(line_no) + ": bad number");
    }
  }
  return rows;
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  std::vector<SummaryRow> summary;
  std::vector<std::vector<double>> rewards;
  std::vector<double> nfe_sum;
  std::map<std::pair<std::string, double>, std::size_t> index;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.sampler, r.budget);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, summary.size()).first;
      summary.push_back({r.sampler, r.budget, 0, 0.0, 0.0, 0.0});
      rewards.emplace_back();
      nfe_sum.push_back(0.0);
    }
    rewards[it->second].push_back(r.terminal_reward);
    nfe_sum[it->second] += static_cast<double>(r.nfe_denoiser + r.nfe_reward);
  }
  for (std::size_t i = 0; i < summary.size(); ++i) {
    summary[i].count = rewards[i].size();
    summary[i].mean = mean_of(rewards[i]);
    summary[i].stderr_ = stats::standard_error(rewards[i]);
    summary[i].mean_nfe = nfe_sum[i] / static_cast<double>(rewards[i].size());
  }
  return summary;
}

void print_summary(std::ostream& out, const std::vector<SummaryRow>& summary) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-10s %8s %6s %10s %10s %10s\n", "sampler", "budget", "n",
                "mean", "stderr", "mean_nfe");
  out << buf;
  for (const auto& s : summary) {
    std::snprintf(buf, sizeof(buf), "%-10s %7gx %6zu %10.4f %10.4f %10.1f\n", s.sampler.c_str(),
                  s.budget, s.count, s.mean, s.stderr_, s.mean_nfe);
    out << buf;
  }
}

namespace {

std::vector<StudyRow> run_study_arms(const ExperimentConfig& cfg, const Instance& inst,
                                     std::vector<StudyRow> arms,
                                     const std::vector<IterRefConfig>& configs) {
  const std::size_t reps = cfg.replicates;
  std::vector<double> rewards(arms.size() * reps);
  std::vector<double> nfe(arms.size() * reps);
  parallel_for(rewards.size(), cfg.workers, [&](std::size_t task) {
    const std::size_t a = task / reps;
    const std::size_t rep = task % reps;
    RngStream rng(row_seed(cfg.seed, arms[a].arm, a, rep), 0);
    const IterRefResult r = iterref(inst.denoiser, inst.reward, configs[a], rng);
    rewards[task] = terminal_reward(inst.reward, r.sample, inst.data->vocab());
    nfe[task] = static_cast<double>(r.ledger.total());
  });
  for (std::size_t a = 0; a < arms.size(); ++a) {
    StudyRow& row = arms[a];
    row.rewards.assign(rewards.begin() + static_cast<std::ptrdiff_t>(a * reps),
                       rewards.begin() + static_cast<std::ptrdiff_t>((a + 1) * reps));
    row.count = reps;
    row.mean_reward = stats::mean(row.rewards);
    row.stderr_ = stats::standard_error(row.rewards);
    double total = 0.0;
    for (std::size_t r = 0; r < reps; ++r) total += nfe[a * reps + r];
    row.mean_nfe = total / static_cast<double>(reps);
  }
  return arms;
}

IterRefConfig study_config(const ExperimentConfig& cfg, int T, std::set<int> steps, std::size_t k,
                           std::size_t N) {
  IterRefConfig ir;
  ir.N = N;
  ir.k = k;
  ir.effective_set = std::move(steps);
  ir.jump = jump_for(cfg, T);
  ir.pool_reuse = false;
  ir.validate(T);
  return ir;
}

}  // namespace

std::vector<StudyRow> run_timestep_study(const ExperimentConfig& cfg) {
  cfg.validate();
  const Instance inst = build_instance(cfg);
  const int T = inst.schedule.T();
  if (T < 2) throw InvalidArgument("timestep study needs T >= 2");
  std::vector<StudyRow> arms;
  std::vector<IterRefConfig> configs;
  for (double f : cfg.timesteps.fractions) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw InvalidArgument("timestep fraction " + format_double(f) + " outside (0, 1]");
    }
    // floor(f T), kept inside [1, T - 1] where refinement is defined.
    const int t = std::clamp(static_cast<int>(std::floor(f * T + 1e-9)), 1, T - 1);
    StudyRow row;
    row.arm = format_double(f) + "T";
    row.steps = {t};
    row.k = cfg.timesteps.k;
    row.N = cfg.timesteps.N;
    configs.push_back(study_config(cfg, T, {t}, row.k, row.N));
    arms.push_back(std::move(row));
  }
  const std::size_t u = std::min<std::size_t>(cfg.timesteps.evenly_steps, T - 1);
  StudyRow even;
  even.arm = "evenly";
  const std::set<int> steps = evenly_spaced_steps(T, u);
  even.steps.assign(steps.rbegin(), steps.rend());
  even.k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(static_cast<double>(cfg.timesteps.k) / u)));
  even.N = cfg.timesteps.N;
  configs.push_back(study_config(cfg, T, steps, even.k, even.N));
  arms.push_back(std::move(even));
  return run_study_arms(cfg, inst, std::move(arms), configs);
}

std::vector<StudyRow> run_kn_study(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::size_t product = cfg.kn.pairs.front().first * cfg.kn.pairs.front().second;
  for (const auto& [k, n] : cfg.kn.pairs) {
    if (k == 0 || n == 0) throw InvalidArgument("kn study: k and N must be >= 1");
    if (k * n != product) {
      throw InvalidArgument("kn study: pairs must share one k*N product (" +
                            std::to_string(product) + " vs " + std::to_string(k * n) + ")");
    }
  }
  const Instance inst = build_instance(cfg);
  const int T = inst.schedule.T();
  const std::set<int> steps = every_nth_step(T, cfg.kn.stride);
  if (steps.empty()) throw InvalidArgument("kn study: stride leaves no refined step");
  std::vector<StudyRow> arms;
  std::vector<IterRefConfig> configs;
  for (const auto& [k, n] : cfg.kn.pairs) {
    StudyRow row;
    row.arm = "k=" + std::to_string(k) + ",N=" + std::to_string(n);
    row.steps.assign(steps.rbegin(), steps.rend());
    row.k = k;
    row.N = n;
    configs.push_back(study_config(cfg, T, steps, k, n));
    arms.push_back(std::move(row));
  }
  return run_study_arms(cfg, inst, std::move(arms), configs);
}

void write_study_csv(std::ostream& out, const std::vector<StudyRow>& rows) {
  out << "arm,steps,k,N,replicates,mean_reward,stderr,mean_nfe\n";
  for (const auto& r : rows) {
    std::string steps;
    for (std::size_t i = 0; i < r.steps.size(); ++i) steps += (i ? ";" : "") + std::to_string(r.steps[i]);
    out << '"' << r.arm << "\"," << steps << ',' << r.k << ',' << r.N << ',' << r.count << ','
        << format_double(r.mean_reward) << ',' << format_double(r.stderr_) << ','
        << format_double(r.mean_nfe) << '\n';
  }
}

}  // namespace maskref::cli
