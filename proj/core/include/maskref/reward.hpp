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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "maskref/core.hpp"
#include "maskref/model.hpp"
#include "maskref/rng.hpp"

namespace maskref {

// log p_data is floored here so LogLikelihood stays a finite real.
inline constexpr double kLogLikelihoodFloor = -690.0;

// Named terminal reward. Config names:
//   token_count:a  neg_token_count:a  pattern:abba  hamming:abba  loglik  const:0.5
class TerminalReward {
 public:
  enum class Kind { kTokenCount, kNegTokenCount, kPatternMatch, kHammingProximity,
                    kLogLikelihood, kConstant };

  static TerminalReward token_count(Token v);
  static TerminalReward neg_token_count(Token v);
  static TerminalReward pattern_match(Sequence pattern);
  static TerminalReward hamming_proximity(Sequence pattern);
  static TerminalReward log_likelihood(std::shared_ptr<const DataDistribution> data);
  static TerminalReward constant(double value);

  // `data` is required only for loglik.
  static TerminalReward parse(const std::string& name, const Vocab& vocab,
                              std::shared_ptr<const DataDistribution> data = nullptr);

  Kind kind() const { return kind_; }
  std::string name(const Vocab& vocab) const;

  // Throws InvalidArgument for non-terminal input.
  double operator()(const Sequence& x0, const Vocab& vocab) const;

 private:
  TerminalReward() = default;

  Kind kind_ = Kind::kConstant;
  Token token_ = 0;
  std::vector<Token> pattern_;
  double constant_ = 0.0;
  std::shared_ptr<const DataDistribution> data_;
};

struct RewardMode {
  enum class Kind { kExact, kMonteCarlo, kX0Prediction };
  Kind kind = Kind::kX0Prediction;
  std::uint32_t samples = 1;  // Monte-Carlo sample count

  static RewardMode exact() { return {Kind::kExact, 1}; }
  static RewardMode monte_carlo(std::uint32_t m);
  static RewardMode x0_prediction() { return {Kind::kX0Prediction, 1}; }

  // "exact", "mc:<m>", "x0pred"
  static RewardMode parse(const std::string& text);
  std::string name() const;

  // Reward-model calls charged for one intermediate evaluation at t > 0.
  // Evaluations at t = 0 are direct terminal scores and cost one call.
  std::uint64_t cost() const { return kind == Kind::kMonteCarlo ? samples : 1; }
  std::uint64_t cost_at(int t) const { return t == 0 ? 1 : cost(); }

  friend bool operator==(const RewardMode&, const RewardMode&) = default;
};

struct RewardSpec {
  TerminalReward terminal;
  double alpha = 0.1;
  RewardMode mode;

  RewardSpec(TerminalReward terminal, double alpha, RewardMode mode);
};

struct RewardValue {
  double value = 0.0;
  std::uint64_t evals_used = 0;
};

// Throws InvalidArgument when x0 still has masks.
double terminal_reward(const RewardSpec& spec, const Sequence& x0, const Vocab& vocab);

// Soft value alpha * log E_{x0 ~ p(.|x_t)} exp(r(x0)/alpha) under spec.mode.
// The absorbing posterior depends on x_t only; t sets the charge
// (mode.cost_at(t)) so that ledgers follow the level, not the random state.
RewardValue intermediate_reward(const RewardSpec& spec, const Denoiser& d, const Sequence& x_t,
                                int t, RngStream& rng);

// log(mean(exp(values))) with max shift; -inf entries are allowed.
double log_mean_exp(std::span<const double> values);
double log_sum_exp(std::span<const double> values);

}  // namespace maskref
