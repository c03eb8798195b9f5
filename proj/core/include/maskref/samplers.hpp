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
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "maskref/core.hpp"
#include "maskref/model.hpp"
#include "maskref/reward.hpp"
#include "maskref/rng.hpp"

namespace maskref {

// Function-evaluation counter. Denoiser and reward calls count equally;
// forward noising is free.
class NfeLedger {
 public:
  void charge_denoiser(std::uint64_t n = 1) { denoiser_evals_ += n; }
  void charge_reward(std::uint64_t n = 1) { reward_evals_ += n; }

  std::uint64_t denoiser_evals() const { return denoiser_evals_; }
  std::uint64_t reward_evals() const { return reward_evals_; }
  std::uint64_t total() const { return denoiser_evals_ + reward_evals_; }

  NfeLedger& operator+=(const NfeLedger& other) {
    denoiser_evals_ += other.denoiser_evals_;
    reward_evals_ += other.reward_evals_;
    return *this;
  }
  friend bool operator==(const NfeLedger&, const NfeLedger&) = default;

 private:
  std::uint64_t denoiser_evals_ = 0;
  std::uint64_t reward_evals_ = 0;
};

struct SampleResult {
  Sequence sample;
  NfeLedger ledger;
  std::vector<std::string> notes;  // run-log flags (degenerate weights, clamps...)
};

// Unguided reverse chain from the all-mask state: T denoiser calls.
SampleResult ancestral(const Denoiser& d, const RewardSpec& spec, RngStream& rng);

// With n = 1 the best-of-n, SVDD and FK samplers run ancestral sampling and
// charge no reward calls, since there is nothing to select.

// n independent ancestral runs, highest terminal reward wins (earliest on ties).
SampleResult best_of_n(const Denoiser& d, const RewardSpec& spec, std::size_t n, RngStream& rng);

// Per step: n one-step candidates, resample one by exp(r/alpha).
SampleResult svdd(const Denoiser& d, const RewardSpec& spec, std::size_t n, RngStream& rng);

// n particles, multinomial resampling by the difference potential
// exp((r_now - r_prev)/alpha) every `resample_every` steps; returns the
// highest-reward terminal particle.
SampleResult fk_steering(const Denoiser& d, const RewardSpec& spec, std::size_t n,
                         std::size_t resample_every, RngStream& rng);

struct SopConfig {
  std::size_t n = 2;             // kept states
  std::size_t m = 2;             // noisy variants per kept state
  double remask_fraction = 0.78;  // f
  // Levels denoised per round; 0 derives it from the forward jump.
  int denoise_levels = 0;
  // Level where the search begins; negative derives round(0.11 * T).
  int start_level = -1;
};

// Start level, forward lift and backward levels actually used for a given T.
struct SopPlan {
  int start_level;
  std::vector<std::pair<int, int>> rounds;  // (lifted level, landing level)
};
SopPlan sop_plan(const SopConfig& cfg, const Schedule& schedule);

// Search over paths ported to masking: denoise n chains to the start level,
// then repeatedly remask each kept state with probability f, denoise it back
// down level by level, score all n*m variants and keep the top n.
SampleResult sop_discrete(const Denoiser& d, const RewardSpec& spec, const SopConfig& cfg,
                          RngStream& rng);

struct IterRefConfig {
  std::size_t N = 4;              // candidates per pool
  std::size_t k = 4;              // refinement iterations per refined step
  std::set<int> effective_set;    // U, timesteps in [1, T]
  int jump = 1;                   // kernel noises t -> min(t + jump, T)
  bool pool_reuse = true;
  // Optional hard NFE cap for the whole run; refinement iterations that would
  // need a fresh pool are skipped once it would be exceeded.
  std::optional<std::uint64_t> nfe_cap;

  void validate(int T) const;
};

// U = {T - stride, T - 2*stride, ...} down to 1.
std::set<int> every_nth_step(int T, int stride);
// Default noising jump: ceil(T / 10).
int default_jump(int T);

struct KernelDraw {
  Sequence proposal;
  Sequence noised_waypoint;
  RewardValue reward;
};

// One sample of K(x_t, .): noise t -> min(t + jump, T), then denoise back to t.
// Charges one denoiser call plus the reward evaluation. Requires 1 <= t < T.
KernelDraw kernel_propose(const Denoiser& d, const RewardSpec& spec, const Sequence& x_t, int t,
                          int jump, RngStream& rng, NfeLedger& ledger);

// Chain position for MTM refinement at a fixed level, with its cached reward
// and the reusable candidate pool.
struct MtmChain {
  Sequence state;
  std::optional<RewardValue> reward;
  std::vector<KernelDraw> pool;
};

struct RefineOutcome {
  bool accepted = false;
  std::size_t candidate_index = 0;  // index within the pool at selection time
  bool pool_refilled = false;
  double reward_before = 0.0;
  double reward_after = 0.0;
  double acceptance_probability = 0.0;
};

// Closed-form MTM acceptance min(1, exp((r_new - r_old)/alpha)).
double closed_form_acceptance(double reward_old, double reward_new, double alpha);

// One MTM refinement iteration: refill the pool if needed, pick a candidate
// uniformly, accept with the closed-form probability. On rejection with pool
// reuse the candidate leaves the pool and the rest persist.
RefineOutcome mtm_refine_step(const Denoiser& d, const RewardSpec& spec, MtmChain& chain, int t,
                              const IterRefConfig& cfg, RngStream& rng, NfeLedger& ledger);

struct TraceRecord {
  int t = 0;
  std::size_t iter = 0;
  std::size_t candidate_idx = 0;
  bool accepted = false;
  bool pool_refilled = false;
  double reward_before = 0.0;
  double reward_after = 0.0;
  std::uint64_t denoiser_evals = 0;  // cumulative, after this iteration
  std::uint64_t reward_evals = 0;
};

struct IterRefResult {
  Sequence sample;
  NfeLedger ledger;
  std::vector<TraceRecord> trace;
  std::vector<std::string> notes;
};

IterRefResult iterref(const Denoiser& d, const RewardSpec& spec, const IterRefConfig& cfg,
                      RngStream& rng);

// CSV with header t,iter,candidate_idx,accepted,reward_before,reward_after,
// denoiser_evals,reward_evals.
void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& trace);

// Exact quantities over all (V+1)^L states at one level, needed by the
// unsimplified MTM step. Built by the oracle.
struct MtmTables {
  int t = 0;
  int jump = 1;
  std::vector<double> marginal;  // p(x_t)
  std::vector<double> target;    // p*(x_t)
  std::vector<double> reward;    // exact soft value r(x_t)
  Matrix kernel;                 // K(x, y)
};

struct GenericMtmResult {
  Sequence next;
  bool accepted = false;
  std::vector<double> forward_weights;    // p*(y_j) K(y_j, x) lambda(y_j, x)
  std::vector<double> selection_probs;
  double acceptance_ratio = 0.0;          // min(1, sum fwd / sum bwd)
  double closed_form_beta = 0.0;
  double forward_weight_spread = 0.0;     // (max - min) / mean
};

// lambda(x, y) = 1 / (p(x) K(x, y) exp((r(x) + r(y)) / alpha)).
double balancing_function(const MtmTables& tables, StateIndex x, StateIndex y, double alpha);

// Algorithm-1 MTM with weighted selection and N - 1 backward auxiliaries,
// proposals drawn from the real kernel. Throws CapExceeded via the tables'
// construction; assumes spec.mode is exact.
GenericMtmResult generic_mtm_step(const Denoiser& d, const RewardSpec& spec,
                                  const MtmTables& tables, const Sequence& x_t, std::size_t N,
                                  RngStream& rng);

// Analytic cost models. These are the budget-allocation formulas and the
// reference the ledger replay check compares against.
namespace cost {

NfeLedger ancestral(int T);
NfeLedger best_of_n(int T, std::size_t n);
NfeLedger svdd(int T, std::size_t n, const RewardMode& mode);
NfeLedger fk_steering(int T, std::size_t n, std::size_t resample_every, const RewardMode& mode);
NfeLedger sop_discrete(const SopConfig& cfg, const Schedule& schedule, const RewardMode& mode);
// Replays an IterRef trace: pool refills are inferred from the accept flags.
NfeLedger iterref_replay(int T, const IterRefConfig& cfg, const RewardMode& mode,
                         const std::vector<TraceRecord>& trace);
// Worst case (fresh pool on every iteration).
NfeLedger iterref_worst_case(int T, const IterRefConfig& cfg, const RewardMode& mode);

}  // namespace cost

}  // namespace maskref
