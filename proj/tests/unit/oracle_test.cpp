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

#include <cmath>
#include <memory>
#include <sstream>
#include <vector>

#include "maskref/error.hpp"
#include "maskref/oracle.hpp"
#include "maskref/samplers.hpp"

namespace maskref {
namespace {

std::shared_ptr<const DataDistribution> share(DataDistribution d) {
  return std::make_shared<const DataDistribution>(std::move(d));
}

double prob_of(const oracle::StateTable& table, const std::string& letters, const Vocab& v) {
  return table.probs[encode(parse_sequence(letters, v), v)];
}

// L=2, V=2, T=8 oracle instance.
struct Small {
  std::shared_ptr<const DataDistribution> data = share(DataDistribution::random(2, 2, 7));
  Schedule schedule = Schedule::linear(8);
  Denoiser exact{DenoiserKind::kExactPosterior, data, schedule};
  Denoiser mean_field{DenoiserKind::kMeanField, data, schedule};
  RewardSpec pattern{TerminalReward::parse("pattern:ab", data->vocab()), 0.1, RewardMode::exact()};
  RewardSpec zero{TerminalReward::constant(0.0), 0.1, RewardMode::exact()};
};

TEST(ExactMarginal, SingleToken) {
  const Vocab v(2);
  const DataDistribution data(1, v, {0.75, 0.25});
  const Schedule s({1.0, 0.5, 0.0});
  const auto m = oracle::exact_marginal(data, s, 1);
  EXPECT_NEAR(prob_of(m, "a", v), 0.375, 1e-15);
  EXPECT_NEAR(prob_of(m, "b", v), 0.125, 1e-15);
  EXPECT_NEAR(prob_of(m, "_", v), 0.5, 1e-15);
}

TEST(ExactMarginal, Endpoints) {
  const Small s;
  const Vocab& v = s.data->vocab();
  const auto m0 = oracle::exact_marginal(*s.data, s.schedule, 0);
  for (StateIndex i = 0; i < m0.probs.size(); ++i) {
    const Sequence x = decode(i, 2, v);
    EXPECT_NEAR(m0.probs[i], is_terminal(x, v) ? s.data->prob(x) : 0.0, 1e-15);
  }
  const auto mT = oracle::exact_marginal(*s.data, s.schedule, 8);
  EXPECT_NEAR(prob_of(mT, "__", v), 1.0, 1e-15);
  for (int t = 0; t <= 8; ++t) EXPECT_NEAR(oracle::exact_marginal(*s.data, s.schedule, t).total(), 1.0, 1e-12);
}

TEST(ExactMarginal, ConsistentWithReverseKernel) {
  const Small s;
  for (int t = 1; t <= 8; ++t) {
    EXPECT_LE(oracle::push_through_residual(oracle::exact_marginal(*s.data, s.schedule, t),
                                            reverse_kernel_exact(s.exact, t, t - 1),
                                            oracle::exact_marginal(*s.data, s.schedule, t - 1)),
              1e-10);
  }
  // Telescoping all the way down in one jump.
  EXPECT_LE(oracle::push_through_residual(oracle::exact_marginal(*s.data, s.schedule, 8),
                                          reverse_kernel_exact(s.exact, 8, 0),
                                          oracle::exact_marginal(*s.data, s.schedule, 0)),
            1e-10);
}

TEST(ExactTarget, ZeroRewardIsMarginal) {
  const Small s;
  for (int t = 0; t <= 8; ++t) {
    EXPECT_LE(oracle::tv_distance(oracle::exact_target(*s.data, s.schedule, s.zero, t),
                                  oracle::exact_marginal(*s.data, s.schedule, t)),
              1e-15);
  }
}

TEST(ExactTarget, TwoPoint) {
  const auto data = share(DataDistribution::uniform(1, 2));
  const Vocab& v = data->vocab();
  const RewardSpec spec(TerminalReward::token_count(0), 1.0, RewardMode::exact());
  const auto target = oracle::exact_target(*data, Schedule::linear(4), spec, 0);
  EXPECT_NEAR(prob_of(target, "a", v), std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
  EXPECT_NEAR(prob_of(target, "a", v), 0.731059, 1e-6);
}

TEST(ExactTarget, LargeAlphaIsMarginal) {
  const Small s;
  const RewardSpec flat(s.pattern.terminal, 1e6, RewardMode::exact());
  for (int t : {0, 3, 6}) {
    EXPECT_LE(oracle::tv_distance(oracle::exact_target(*s.data, s.schedule, flat, t),
                                  oracle::exact_marginal(*s.data, s.schedule, t)),
              1e-6);
  }
}

TEST(ExactSoftValues, MatchIntermediateReward) {
  const Small s;
  const auto values = oracle::exact_soft_values(s.exact, s.pattern);
  RngStream rng(1, 0);
  for (StateIndex i = 0; i < values.size(); ++i) {
    const Sequence x = decode(i, 2, s.data->vocab());
    try {
      EXPECT_NEAR(values[i], intermediate_reward(s.pattern, s.exact, x, 4, rng).value, 1e-12);
    } catch (const ZeroSupport&) {
      EXPECT_EQ(values[i], -std::numeric_limits<double>::infinity());
    }
  }
}

TEST(OptimalKernel, ZeroRewardIsReverseKernel) {
  const Small s;
  for (int t = 1; t <= 8; ++t) {
    const Matrix k = oracle::exact_optimal_kernel(s.exact, s.zero, t);
    EXPECT_LE((k - reverse_kernel_exact(s.exact, t, t - 1)).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(OptimalKernel, InductionAndRows) {
  const Small s;
  for (int t = 1; t <= 8; ++t) {
    const Matrix k = oracle::exact_optimal_kernel(s.exact, s.pattern, t);
    for (Eigen::Index r = 0; r < k.rows(); ++r) EXPECT_NEAR(k.row(r).sum(), 1.0, 1e-12);
    EXPECT_LE(oracle::push_through_residual(oracle::exact_target(*s.data, s.schedule, s.pattern, t), k,
                                            oracle::exact_target(*s.data, s.schedule, s.pattern, t - 1)),
              1e-10);
  }
}

TEST(RefineKernel, RowsAndAbsorbingEndpoint) {
  const Small s;
  const Matrix k = oracle::exact_refine_kernel(s.exact, 5, 3);
  for (Eigen::Index r = 0; r < k.rows(); ++r) EXPECT_NEAR(k.row(r).sum(), 1.0, 1e-12);
  // t + jump = T: every row is the level-5 law of a fresh denoise from all-mask.
  const auto all = static_cast<Eigen::Index>(encode(Sequence::all_mask(2, s.data->vocab()), s.data->vocab()));
  const Matrix fresh = reverse_kernel_exact(s.exact, 8, 5);
  for (Eigen::Index r = 0; r < k.rows(); ++r) {
    EXPECT_LE((k.row(r) - fresh.row(all)).cwiseAbs().maxCoeff(), 1e-15);
  }
  EXPECT_THROW(oracle::exact_refine_kernel(s.exact, 8, 1), InvalidArgument);
}

TEST(RefineKernel, MatchesKernelPropose) {
  const Small s;
  const Vocab& v = s.data->vocab();
  const int t = 3, jump = 2;
  const Matrix k = oracle::exact_refine_kernel(s.exact, t, jump);
  RngStream rng(2, 0);
  NfeLedger ledger;
  constexpr int n = 100000;
  for (const char* from : {"a_", "__", "ba"}) {
    const Sequence x = parse_sequence(from, v);
    std::vector<int> counts(9, 0);
    for (int i = 0; i < n; ++i) ++counts[encode(kernel_propose(s.exact, s.zero, x, t, jump, rng, ledger).proposal, v)];
    const auto row = static_cast<Eigen::Index>(encode(x, v));
    for (Eigen::Index c = 0; c < 9; ++c) {
      const double p = k(row, c);
      EXPECT_NEAR(counts[c] / static_cast<double>(n), p, 3 * std::sqrt(p * (1 - p) / n) + 1e-12)
          << from << " -> " << c;
    }
  }
}

TEST(BalanceAudit, ZeroRewardIsTight) {
  const Small s;
  for (int t = 1; t < 8; ++t) {
    const auto b = oracle::balance_audit(s.exact, s.zero, t, 2);
    EXPECT_LE(b.max_lambda_asymmetry, 1e-12);
    EXPECT_LE(b.max_kernel_reversibility_residual, 1e-12);
    EXPECT_LE(b.max_detailed_balance_residual, 1e-12);
    EXPECT_LE(b.weight_spread, 1e-12);
    EXPECT_LE(b.stationarity_residual, 1e-12);
  }
}

TEST(BalanceAudit, PatternTask) {
  const Small s;
  for (int t = 1; t < 8; ++t) {
    for (int jump : {1, 2, 3}) {
      const auto b = oracle::balance_audit(s.exact, s.pattern, t, jump);
      EXPECT_LE(b.max_lambda_asymmetry, 1e-10);
      EXPECT_LE(b.max_kernel_reversibility_residual, 1e-10);
      EXPECT_LE(b.max_detailed_balance_residual, 1e-10);
      EXPECT_LE(b.weight_spread, 1e-10);
      EXPECT_LE(b.stationarity_residual, 1e-10);
    }
  }
}

TEST(BalanceAudit, MeanFieldBreaksReversibility) {
  // Correlated data so that the mean-field posterior differs from the truth.
  const Vocab v(2);
  const auto data = share(DataDistribution(2, v, {0.45, 0.05, 0.05, 0.45}));
  const Denoiser mf(DenoiserKind::kMeanField, data, Schedule::linear(8));
  const RewardSpec spec(TerminalReward::parse("pattern:ab", v), 0.1, RewardMode::exact());
  EXPECT_GT(oracle::balance_audit(mf, spec, 4, 2).max_kernel_reversibility_residual, 1e-6);
}

TEST(ChainKernel, TargetIsFixedPoint) {
  const Small s;
  const auto values = oracle::exact_soft_values(s.exact, s.pattern);
  for (int t = 1; t < 8; ++t) {
    const Matrix a = oracle::exact_chain_kernel(oracle::exact_refine_kernel(s.exact, t, 2), values, 0.1);
    for (Eigen::Index r = 0; r < a.rows(); ++r) EXPECT_NEAR(a.row(r).sum(), 1.0, 1e-12);
    const auto target = oracle::exact_target(*s.data, s.schedule, s.pattern, t);
    EXPECT_LE(oracle::push_through_residual(target, a, target), 1e-10);
  }
}

TEST(MtmTables, NormalizedAndGenericStepAgrees) {
  const Small s;
  const MtmTables tables = oracle::mtm_tables(s.exact, s.pattern, 4, 2);
  double m = 0.0, p = 0.0;
  for (double x : tables.marginal) m += x;
  for (double x : tables.target) p += x;
  EXPECT_NEAR(m, 1.0, 1e-12);
  EXPECT_NEAR(p, 1.0, 1e-12);
  RngStream rng(3, 0);
  for (int i = 0; i < 200; ++i) {
    const Sequence x = decode(rng.categorical(tables.marginal), 2, s.data->vocab());
    const auto g = generic_mtm_step(s.exact, s.pattern, tables, x, 1 + rng.below(4), rng);
    EXPECT_NEAR(g.acceptance_ratio, g.closed_form_beta, 1e-10);
    for (double q : g.selection_probs) EXPECT_NEAR(q, 1.0 / g.selection_probs.size(), 1e-12);
  }
}

TEST(TvDistance, Examples) {
  const std::vector<double> a{0.5, 0.5}, b{1.0, 0.0}, c{0.0, 1.0};
  EXPECT_DOUBLE_EQ(oracle::tv_distance(a, a), 0.0);
  EXPECT_DOUBLE_EQ(oracle::tv_distance(b, c), 1.0);
  EXPECT_DOUBLE_EQ(oracle::tv_distance(a, b), 0.5);
}

TEST(ChainConvergence, ZeroRewardStaysAtNoiseFloor) {
  const Small s;
  IterRefConfig cfg;
  cfg.N = 2;
  cfg.jump = 2;
  const auto series = oracle::chain_convergence(s.exact, s.zero, 4, cfg, 20000, 20, {5, 10, 20},
                                                RngStream(4, 0));
  // 9 states, 2e4 chains: TV sampling noise is well under 0.02.
  for (const auto& pt : series) EXPECT_LE(pt.tv, 0.02) << "iteration " << pt.iteration;
}

TEST(ChainConvergence, TvSeriesDecreasesToTheTarget) {
  const Small s;
  IterRefConfig cfg;
  cfg.N = 4;
  cfg.jump = 2;
  const std::vector<std::size_t> marks{10, 50, 100, 200};
  const auto series = oracle::chain_convergence(s.exact, s.pattern, 4, cfg, 20000, 200, marks,
                                                RngStream(5, 0));
  ASSERT_EQ(series.size(), marks.size() + 1);
  EXPECT_GE(series.front().tv, 0.2);
  // Noise envelope for 2e4 chains on 9 states, doubled.
  const double noise = 2 * 0.5 * 9 * std::sqrt(1.0 / 9 / 20000);
  for (std::size_t i = 1; i < series.size(); ++i) EXPECT_LE(series[i].tv, series[i - 1].tv + noise);
  EXPECT_LE(series.back().tv, 0.05);
}

TEST(ChainConvergence, WorkerCountDoesNotMatter) {
  const Small s;
  IterRefConfig cfg;
  cfg.N = 3;
  cfg.jump = 2;
  const auto one = oracle::chain_convergence(s.exact, s.pattern, 4, cfg, 3000, 30, {10, 30}, RngStream(6, 0), 1);
  const auto four = oracle::chain_convergence(s.exact, s.pattern, 4, cfg, 3000, 30, {10, 30}, RngStream(6, 0), 4);
  ASSERT_EQ(one.size(), four.size());
  for (std::size_t i = 0; i < one.size(); ++i) EXPECT_EQ(one[i].tv, four[i].tv);
}

TEST(Caps, EnumerationRefusesLargeInstances) {
  const auto data = share(DataDistribution::uniform(6, 4));
  const Denoiser d(DenoiserKind::kMeanField, data, Schedule::linear(4));
  const RewardSpec spec(TerminalReward::constant(0.0), 0.1, RewardMode::exact());
  EXPECT_THROW(oracle::exact_refine_kernel(d, 1, 1), CapExceeded);
  EXPECT_THROW(oracle::exact_marginal(*data, Schedule::linear(4), 1, 1000), CapExceeded);
}

TEST(Dumps, CsvAndReport) {
  const Vocab v(2);
  const DataDistribution data(1, v, {0.75, 0.25});
  std::ostringstream t;
  oracle::write_table_csv(t, oracle::exact_marginal(data, Schedule({1.0, 0.5, 0.0}), 1));
  EXPECT_EQ(t.str(), "state_index,probability\n0,0.375\n1,0.125\n2,0.5\n");
  Matrix m = Matrix::Zero(2, 2);
  m(0, 1) = 0.5;
  std::ostringstream mm;
  oracle::write_matrix_csv(mm, m);
  EXPECT_EQ(mm.str(), "row,col,value\n0,1,0.5\n");
  std::ostringstream r;
  oracle::write_report(r, oracle::BalanceReport{});
  EXPECT_NE(r.str().find("stationarity"), std::string::npos);
}

}  // namespace
}  // namespace maskref
