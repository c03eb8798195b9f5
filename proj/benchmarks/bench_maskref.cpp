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

#include <benchmark/benchmark.h>

#include <memory>

#include "maskref/model.hpp"
#include "maskref/oracle.hpp"
#include "maskref/reward.hpp"
#include "maskref/samplers.hpp"

namespace maskref {
namespace {

// Arg(0) selects the denoiser: 0 exact posterior, 1 mean field.
struct Fixture {
  explicit Fixture(std::size_t L, int V, int T, DenoiserKind kind, RewardMode mode)
      : data(std::make_shared<const DataDistribution>(DataDistribution::markov(L, V, 2, 0.5))),
        denoiser(kind, data, Schedule::linear(T)),
        spec(TerminalReward::token_count(0), 0.1, mode) {}
  std::shared_ptr<const DataDistribution> data;
  Denoiser denoiser;
  RewardSpec spec;
};

DenoiserKind kind_of(const benchmark::State& state) {
  return state.range(0) == 0 ? DenoiserKind::kExactPosterior : DenoiserKind::kMeanField;
}

void BM_ReverseStep(benchmark::State& state) {
  const Fixture f(6, 4, 24, kind_of(state), RewardMode::x0_prediction());
  RngStream rng(1, 0);
  const Sequence x = Sequence::all_mask(6, f.data->vocab());
  for (auto _ : state) benchmark::DoNotOptimize(reverse_step(f.denoiser, x, 12, 11, rng));
}
BENCHMARK(BM_ReverseStep)->Arg(0)->Arg(1);

void BM_IntermediateReward(benchmark::State& state) {
  const RewardMode modes[] = {RewardMode::exact(), RewardMode::monte_carlo(16),
                              RewardMode::x0_prediction()};
  const Fixture f(6, 4, 24, DenoiserKind::kMeanField, modes[state.range(0)]);
  RngStream rng(2, 0);
  const Sequence x = parse_sequence("a__b_c", f.data->vocab());
  for (auto _ : state) benchmark::DoNotOptimize(intermediate_reward(f.spec, f.denoiser, x, 12, rng));
}
BENCHMARK(BM_IntermediateReward)->DenseRange(0, 2);

void BM_KernelPropose(benchmark::State& state) {
  const Fixture f(6, 4, 24, kind_of(state), RewardMode::x0_prediction());
  RngStream rng(3, 0);
  NfeLedger ledger;
  const Sequence x = parse_sequence("a__b_c", f.data->vocab());
  for (auto _ : state) benchmark::DoNotOptimize(kernel_propose(f.denoiser, f.spec, x, 12, 3, rng, ledger));
}
BENCHMARK(BM_KernelPropose)->Arg(0)->Arg(1);

void BM_MtmRefineStep(benchmark::State& state) {
  const Fixture f(6, 4, 24, DenoiserKind::kMeanField, RewardMode::x0_prediction());
  IterRefConfig cfg;
  cfg.N = static_cast<std::size_t>(state.range(0));
  cfg.jump = 3;
  cfg.pool_reuse = false;
  RngStream rng(4, 0);
  NfeLedger ledger;
  MtmChain chain{parse_sequence("a__b_c", f.data->vocab()), std::nullopt, {}};
  for (auto _ : state) benchmark::DoNotOptimize(mtm_refine_step(f.denoiser, f.spec, chain, 12, cfg, rng, ledger));
}
BENCHMARK(BM_MtmRefineStep)->RangeMultiplier(4)->Range(1, 16);

void BM_IterRef(benchmark::State& state) {
  const Fixture f(6, 4, 24, DenoiserKind::kMeanField, RewardMode::x0_prediction());
  IterRefConfig cfg;
  cfg.N = 4;
  cfg.k = static_cast<std::size_t>(state.range(0));
  cfg.effective_set = every_nth_step(24, 4);
  cfg.jump = default_jump(24);
  RngStream rng(5, 0);
  for (auto _ : state) benchmark::DoNotOptimize(iterref(f.denoiser, f.spec, cfg, rng));
}
BENCHMARK(BM_IterRef)->Arg(1)->Arg(4)->Arg(16);

void BM_ExactRefineKernel(benchmark::State& state) {
  const auto L = static_cast<std::size_t>(state.range(0));
  const Fixture f(L, 2, 8, DenoiserKind::kExactPosterior, RewardMode::exact());
  for (auto _ : state) benchmark::DoNotOptimize(oracle::exact_refine_kernel(f.denoiser, 4, 2));
}
BENCHMARK(BM_ExactRefineKernel)->DenseRange(2, 4)->Unit(benchmark::kMillisecond);

void BM_BalanceAudit(benchmark::State& state) {
  const auto L = static_cast<std::size_t>(state.range(0));
  const Fixture f(L, 2, 8, DenoiserKind::kExactPosterior, RewardMode::exact());
  for (auto _ : state) benchmark::DoNotOptimize(oracle::balance_audit(f.denoiser, f.spec, 4, 2));
}
BENCHMARK(BM_BalanceAudit)->DenseRange(2, 4)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace maskref

BENCHMARK_MAIN();
