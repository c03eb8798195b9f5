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

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "maskref/samplers.hpp"
#include "maskref_cli/config.hpp"

namespace maskref::cli {

// A sampler with its hyperparameters fixed for one NFE budget.
struct SamplerPlan {
  std::string sampler;
  double budget_multiplier = 1.0;
  std::uint64_t budget_nfe = 0;
  std::size_t n = 1;  // particles / samples (bon, svdd, fk, sop)
  std::size_t resample_every = 1;
  SopConfig sop;
  IterRefConfig iterref;
  NfeLedger predicted;  // analytic cost; worst case for iterref
  std::string note;     // shortfall / overshoot log
};

// U with `count` levels spread evenly over [1, T - 1]; count <= T - 1.
std::set<int> evenly_spaced_steps(int T, std::size_t count);

// Picks the largest configuration whose analytic cost fits multiplier * T.
// When even the smallest does not fit, the smallest is used and the overshoot
// is recorded in `note`.
SamplerPlan plan_for_budget(const std::string& sampler, double multiplier,
                            const ExperimentConfig& cfg, const Instance& inst);

struct RunOutcome {
  Sequence sample;
  NfeLedger ledger;
  std::vector<std::string> notes;
  std::vector<TraceRecord> trace;
};

RunOutcome execute(const SamplerPlan& plan, const Instance& inst, RngStream& rng);

struct ResultRow {
  std::string sampler;
  double budget = 1.0;
  std::size_t replicate = 0;
  double terminal_reward = 0.0;
  std::uint64_t nfe_denoiser = 0;
  std::uint64_t nfe_reward = 0;
  double wall_time_ms = 0.0;
  std::uint64_t seed = 0;  // RngStream(seed, 0) reproduces the row
};

inline constexpr const char* kResultHeader =
    "sampler,budget,replicate,terminal_reward,nfe_denoiser,nfe_reward,wall_time_ms,seed";

struct SummaryRow {
  std::string sampler;
  double budget = 1.0;
  std::size_t count = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
  double mean_nfe = 0.0;
};

struct SweepResult {
  std::vector<ResultRow> rows;
  std::vector<SummaryRow> summary;
  std::vector<std::string> log;
};

// Row seed for (sampler, budget index, replicate) under the experiment seed.
std::uint64_t row_seed(std::uint64_t seed, const std::string& sampler, std::size_t budget_index,
                       std::size_t replicate);

// Every (sampler, budget, replicate) in config order. Runs on cfg.workers
// threads; results do not depend on the worker count.
SweepResult run_sweep(const ExperimentConfig& cfg);

void write_rows_csv(std::ostream& out, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_rows_csv(std::istream& in);
std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);
void print_summary(std::ostream& out, const std::vector<SummaryRow>& summary);

struct StudyRow {
  std::string arm;  // "0.9T", "evenly", "k=4,N=8"
  std::vector<int> steps;
  std::size_t k = 0;
  std::size_t N = 0;
  std::size_t count = 0;
  double mean_reward = 0.0;
  double stderr_ = 0.0;
  double mean_nfe = 0.0;
  std::vector<double> rewards;
};

// One arm per fraction f refining only at floor(f T) (clamped to T - 1) with
// k iterations, plus an "evenly" arm over `evenly_steps` levels with
// round(k / evenly_steps) iterations each. Pools are redrawn every iteration
// so each arm's cost is fixed by construction.
std::vector<StudyRow> run_timestep_study(const ExperimentConfig& cfg);

// IterRef rows for each (k, N) pair, all with the same k * N. Pools are
// redrawn every iteration so every row charges the same number of calls.
std::vector<StudyRow> run_kn_study(const ExperimentConfig& cfg);

void write_study_csv(std::ostream& out, const std::vector<StudyRow>& rows);

}  // namespace maskref::cli
