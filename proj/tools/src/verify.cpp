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

#include "maskref_cli/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "maskref/error.hpp"

namespace maskref::cli {

bool VerifyReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const VerifyCheck& c) { return c.passed || c.informational; });
}

VerifyReport verify_instance(const ExperimentConfig& cfg, const VerifyOptions& opts) {
  const Instance inst = build_instance(cfg);
  const int T = inst.schedule.T();
  if (T < 2) throw InvalidArgument("verify: the instance needs T >= 2");
  const int jump = opts.jump > 0 ? opts.jump : default_jump(T);
  const bool approx = inst.denoiser.kind() == DenoiserKind::kMeanField;
  const Denoiser exact(DenoiserKind::kExactPosterior, inst.data, inst.schedule);
  const RewardSpec spec(inst.reward.terminal, inst.reward.alpha, RewardMode::exact());
  // Dense matrices are needed below; refuse early with the cap message.
  state_space_size(inst.data->length(), inst.data->vocab().size(), kDefaultMatrixStateCap);

  VerifyReport report;
  auto add = [&](std::string name, double value, double threshold, bool informational) {
    report.checks.push_back({std::move(name), value, threshold, value <= threshold, informational});
  };

  oracle::BalanceReport& worst = report.balance;
  for (int t = 1; t < T; ++t) {
    const oracle::BalanceReport b = oracle::balance_audit(inst.denoiser, spec, t, jump);
    worst.max_lambda_asymmetry = std::max(worst.max_lambda_asymmetry, b.max_lambda_asymmetry);
    worst.max_kernel_reversibility_residual =
        std::max(worst.max_kernel_reversibility_residual, b.max_kernel_reversibility_residual);
    worst.max_detailed_balance_residual =
        std::max(worst.max_detailed_balance_residual, b.max_detailed_balance_residual);
    worst.weight_spread = std::max(worst.weight_spread, b.weight_spread);
    worst.stationarity_residual = std::max(worst.stationarity_residual, b.stationarity_residual);
  }
  add("lambda_symmetry", worst.max_lambda_asymmetry, 1e-10, approx);
  add("kernel_reversibility", worst.max_kernel_reversibility_residual, 1e-10, approx);
  add("detailed_balance", worst.max_detailed_balance_residual, 1e-10, approx);
  add("forward_weight_spread", worst.weight_spread, 1e-10, approx);
  add("stationarity", worst.stationarity_residual, 1e-10, approx);

  double marginal_residual = 0.0;
  double induction_residual = 0.0;
  for (int t = 1; t <= T; ++t) {
    marginal_residual = std::max(
        marginal_residual,
        oracle::push_through_residual(oracle::exact_marginal(*inst.data, inst.schedule, t),
                                      reverse_kernel_exact(exact, t, t - 1),
                                      oracle::exact_marginal(*inst.data, inst.schedule, t - 1)));
    induction_residual = std::max(
        induction_residual,
        oracle::push_through_residual(oracle::exact_target(*inst.data, inst.schedule, spec, t),
                                      oracle::exact_optimal_kernel(exact, spec, t),
                                      oracle::exact_target(*inst.data, inst.schedule, spec, t - 1)));
  }
  add("marginal_consistency", marginal_residual, 1e-10, false);
  add("optimal_kernel_induction", induction_residual, 1e-10, false);

  RngStream rng(cfg.seed, 0x7665726966ULL);
  std::map<int, MtmTables> tables;
  double acceptance_gap = 0.0;
  for (std::size_t c = 0; c < opts.acceptance_cases; ++c) {
    const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T - 1)));
    auto it = tables.find(t);
    if (it == tables.end()) it = tables.emplace(t, oracle::mtm_tables(inst.denoiser, spec, t, jump)).first;
    const std::size_t s = rng.categorical(it->second.marginal);
    const Sequence x = decode(s, inst.data->length(), inst.data->vocab());
    const std::size_t N = 1 + static_cast<std::size_t>(rng.below(4));
    const GenericMtmResult g = generic_mtm_step(inst.denoiser, spec, it->second, x, N, rng);
    acceptance_gap = std::max(acceptance_gap, std::abs(g.acceptance_ratio - g.closed_form_beta));
  }
  add("generic_vs_closed_form_acceptance", acceptance_gap, 1e-10, approx);

  IterRefConfig chain_cfg;
  chain_cfg.N = 4;
  chain_cfg.k = 1;
  chain_cfg.jump = jump;
  const int mid = std::max(1, T / 2);
  const auto series =
      oracle::chain_convergence(inst.denoiser, spec, mid, chain_cfg, opts.chains, opts.chain_iters,
                                {opts.chain_iters}, RngStream(cfg.seed, 0x636861696eULL),
                                cfg.workers);
  report.checks.push_back({"chain_initial_tv", series.front().tv, 0.0, true, true});
  add("chain_convergence_tv", series.back().tv, opts.tv_threshold, approx);
  return report;
}

void print_verify(std::ostream& out, const VerifyReport& report) {
  oracle::write_report(out, report.balance);
  char buf[200];
  for (const auto& c : report.checks) {
    const char* status = c.informational ? "INFO" : (c.passed ? "PASS" : "FAIL");
    std::snprintf(buf, sizeof(buf), "%-4s %-34s %.3e (threshold %.1e)\n", status, c.name.c_str(),
                  c.value, c.threshold);
    out << buf;
  }
  out << (report.all_passed() ? "verify: all checks passed\n" : "verify: FAILED\n");
}

}  // namespace maskref::cli
