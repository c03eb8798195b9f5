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
#include <vector>

#include "maskref/core.hpp"
#include "maskref/model.hpp"
#include "maskref/reward.hpp"
#include "maskref/rng.hpp"
#include "maskref/samplers.hpp"

namespace maskref::oracle {

// Dense law over all (V+1)^L states at level t, indexed canonically.
struct StateTable {
  int t = 0;
  std::size_t length = 0;
  int vocab_size = 0;
  std::vector<double> probs;

  double total() const;
};

struct BalanceReport {
  double max_lambda_asymmetry = 0.0;
  double max_kernel_reversibility_residual = 0.0;
  double max_detailed_balance_residual = 0.0;
  double weight_spread = 0.0;
  double stationarity_residual = 0.0;  // max |p* A - p*| for the N = 1 chain
};

// p(x_t) = sum over compatible x_0 of p_data(x_0) (1 - a_t)^masked a_t^unmasked.
StateTable exact_marginal(const DataDistribution& data, const Schedule& schedule, int t,
                          StateIndex cap = kDefaultStateCap);

// Exact soft value of every state under d's posterior (Exact mode).
std::vector<double> exact_soft_values(const Denoiser& d, const RewardSpec& spec,
                                      StateIndex cap = kDefaultStateCap);

// p*(x_t) proportional to p(x_t) exp(r(x_t)/alpha), with r the exact soft value
// under the exact posterior of `data`.
StateTable exact_target(const DataDistribution& data, const Schedule& schedule,
                        const RewardSpec& spec, int t, StateIndex cap = kDefaultStateCap);

// Row-normalized tilt p(y | x) exp(r(y)/alpha) of the exact reverse kernel t -> t-1.
Matrix exact_optimal_kernel(const Denoiser& d, const RewardSpec& spec, int t,
                            StateIndex matrix_cap = kDefaultMatrixStateCap);

// K = Q(t -> t+jump) * R(t+jump -> t) with d's reverse kernel.
Matrix exact_refine_kernel(const Denoiser& d, int t, int jump,
                           StateIndex matrix_cap = kDefaultMatrixStateCap);

// Exact transition matrix of the N = 1 refinement chain: A(x, y) = K(x, y) beta(x, y)
// off the diagonal, rejected mass on the diagonal.
Matrix exact_chain_kernel(const Matrix& kernel, const std::vector<double>& soft_values,
                          double alpha);

// Oracle tables for the generic (unsimplified) MTM step at level t.
MtmTables mtm_tables(const Denoiser& d, const RewardSpec& spec, int t, int jump,
                     StateIndex matrix_cap = kDefaultMatrixStateCap);

BalanceReport balance_audit(const Denoiser& d, const RewardSpec& spec, int t, int jump,
                            StateIndex matrix_cap = kDefaultMatrixStateCap);

// max over states of |(table_t Q) - table_s|, for push-through checks.
double push_through_residual(const StateTable& from, const Matrix& kernel, const StateTable& to);

double tv_distance(const StateTable& a, const StateTable& b);
double tv_distance(const std::vector<double>& a, const std::vector<double>& b);

struct ConvergencePoint {
  std::size_t iteration = 0;
  double tv = 0.0;
};

// Starts `chains` independent states from the unguided marginal at level t,
// runs mtm_refine_step on each, and reports TV(empirical, exact target) at
// iteration 0 and at each checkpoint. Chain c uses rng.split(c), so the result
// does not depend on `workers`.
std::vector<ConvergencePoint> chain_convergence(const Denoiser& d, const RewardSpec& spec, int t,
                                                const IterRefConfig& cfg, std::size_t chains,
                                                std::size_t iters,
                                                const std::vector<std::size_t>& checkpoints,
                                                const RngStream& rng, unsigned workers = 1);

// CSV dumps: `state_index,probability` and `row,col,value` (non-zero entries).
void write_table_csv(std::ostream& out, const StateTable& table);
void write_matrix_csv(std::ostream& out, const Matrix& m);
// Fixed-key text block.
void write_report(std::ostream& out, const BalanceReport& report);

}  // namespace maskref::oracle
