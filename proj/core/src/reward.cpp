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

#include "maskref/reward.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "maskref/error.hpp"

namespace maskref {

TerminalReward TerminalReward::token_count(Token v) {
  TerminalReward r;
  r.kind_ = Kind::kTokenCount;
  r.token_ = v;
  return r;
}

TerminalReward TerminalReward::neg_token_count(Token v) {
  TerminalReward r = token_count(v);
  r.kind_ = Kind::kNegTokenCount;
  return r;
}

TerminalReward TerminalReward::pattern_match(Sequence pattern) {
  TerminalReward r;
  r.kind_ = Kind::kPatternMatch;
  r.pattern_.assign(pattern.tokens().begin(), pattern.tokens().end());
  return r;
}

TerminalReward TerminalReward::hamming_proximity(Sequence pattern) {
  TerminalReward r = pattern_match(std::move(pattern));
  r.kind_ = Kind::kHammingProximity;
  return r;
}

TerminalReward TerminalReward::log_likelihood(std::shared_ptr<const DataDistribution> data) {
  if (!data) throw InvalidArgument("loglik reward needs a data distribution");
  TerminalReward r;
  r.kind_ = Kind::kLogLikelihood;
  r.data_ = std::move(data);
  return r;
}

TerminalReward TerminalReward::constant(double value) {
  TerminalReward r;
  r.kind_ = Kind::kConstant;
  r.constant_ = value;
  return r;
}

TerminalReward TerminalReward::parse(const std::string& name, const Vocab& vocab,
                                     std::shared_ptr<const DataDistribution> data) {
  const auto colon = name.find(':');
  const std::string head = name.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : name.substr(colon + 1);
  auto one_token = [&]() {
    if (arg.size() != 1) throw InvalidArgument("reward " + head + " needs one token letter");
    const Token tok = parse_token(arg[0], vocab);
    if (tok == vocab.mask_id()) throw InvalidArgument("reward token cannot be the mask");
    return tok;
  };
  auto pattern = [&]() {
    if (arg.empty()) throw InvalidArgument("reward " + head + " needs a pattern");
    Sequence p = parse_sequence(arg, vocab);
    if (!is_terminal(p, vocab)) throw InvalidArgument("reward pattern cannot contain masks");
    return p;
  };
  if (head == "token_count") return token_count(one_token());
  if (head == "neg_token_count") return neg_token_count(one_token());
  if (head == "pattern") return pattern_match(pattern());
  if (head == "hamming") return hamming_proximity(pattern());
  if (head == "loglik") {
    if (!arg.empty()) throw InvalidArgument("loglik takes no parameter");
    return log_likelihood(std::move(data));
  }
  if (head == "const") {
    double value = 0.0;
    const auto res = std::from_chars(arg.data(), arg.data() + arg.size(), value);
    if (arg.empty() || res.ec != std::errc() || res.ptr != arg.data() + arg.size()) {
      throw InvalidArgument("const reward needs a number: " + name);
    }
    return constant(value);
  }
  throw InvalidArgument("unknown reward: " + name);
}

std::string TerminalReward::name(const Vocab& vocab) const {
  switch (kind_) {
    case Kind::kTokenCount:
      return std::string("token_count:") + token_letter(token_, vocab);
    case Kind::kNegTokenCount:
      return std::string("neg_token_count:") + token_letter(token_, vocab);
    case Kind::kPatternMatch:
      return "pattern:" + to_string(Sequence(pattern_), vocab);
    case Kind::kHammingProximity:
      return "hamming:" + to_string(Sequence(pattern_), vocab);
    case Kind::kLogLikelihood:
      return "loglik";
    case Kind::kConstant: {
      std::ostringstream os;
      os.precision(17);
      os << "const:" << constant_;
      return os.str();
    }
  }
  return "unknown";
}

double TerminalReward::operator()(const Sequence& x0, const Vocab& vocab) const {
  if (!is_terminal(x0, vocab)) throw InvalidArgument("terminal reward of a masked sequence");
  const auto L = static_cast<double>(x0.length());
  switch (kind_) {
    case Kind::kTokenCount:
    case Kind::kNegTokenCount: {
      const auto hits = std::count(x0.tokens().begin(), x0.tokens().end(), token_);
      const double frac = static_cast<double>(hits) / L;
      return kind_ == Kind::kTokenCount ? frac : 1.0 - frac;
    }
    case Kind::kPatternMatch:
    case Kind::kHammingProximity: {
      if (pattern_.size() != x0.length()) throw InvalidArgument("reward pattern length mismatch");
      std::size_t mismatches = 0;
      for (std::size_t i = 0; i < pattern_.size(); ++i) mismatches += x0[i] != pattern_[i];
      if (kind_ == Kind::kPatternMatch) return mismatches == 0 ? 1.0 : 0.0;
      return 1.0 - static_cast<double>(mismatches) / L;
    }
    case Kind::kLogLikelihood: {
      const double p = data_->prob(x0);
      return p > 0.0 ? std::max(std::log(p), kLogLikelihoodFloor) : kLogLikelihoodFloor;
    }
    case Kind::kConstant:
      return constant_;
  }
  return 0.0;
}

RewardMode RewardMode::monte_carlo(std::uint32_t m) {
  if (m == 0) throw InvalidArgument("Monte-Carlo reward needs m >= 1");
  return {Kind::kMonteCarlo, m};
}

RewardMode RewardMode::parse(const std::string& text) {
  if (text == "exact") return exact();
  if (text == "x0pred") return x0_prediction();
  if (text.rfind("mc:", 0) == 0) {
    std::uint32_t m = 0;
    const char* first = text.data() + 3;
    const char* last = text.data() + text.size();
    const auto res = std::from_chars(first, last, m);
    if (first == last || res.ec != std::errc() || res.ptr != last) {
      throw InvalidArgument("bad Monte-Carlo mode: " + text);
    }
    return monte_carlo(m);
  }
  throw InvalidArgument("unknown reward mode: " + text);
}

std::string RewardMode::name() const {
  switch (kind) {
    case Kind::kExact:
      return "exact";
    case Kind::kMonteCarlo:
      return "mc:" + std::to_string(samples);
    case Kind::kX0Prediction:
      return "x0pred";
  }
  return "unknown";
}

RewardSpec::RewardSpec(TerminalReward terminal_, double alpha_, RewardMode mode_)
    : terminal(std::move(terminal_)), alpha(alpha_), mode(mode_) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw InvalidArgument("reward temperature alpha must be positive");
  }
}

double terminal_reward(const RewardSpec& spec, const Sequence& x0, const Vocab& vocab) {
  return spec.terminal(x0, vocab);
}

double log_sum_exp(std::span<const double> values) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

double log_mean_exp(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("log_mean_exp of an empty set");
  return log_sum_exp(values) - std::log(static_cast<double>(values.size()));
}

RewardValue intermediate_reward(const RewardSpec& spec, const Denoiser& d, const Sequence& x_t,
                                int t, RngStream& rng) {
  const Vocab& vocab = d.vocab();
  const std::uint64_t charge = spec.mode.cost_at(t);
  if (is_terminal(x_t, vocab)) return {spec.terminal(x_t, vocab), charge};
  const double a = spec.alpha;
  switch (spec.mode.kind) {
    case RewardMode::Kind::kExact: {
      const X0Posterior post = d.x0_posterior(x_t);
      std::vector<double> terms;
      terms.reserve(post.support.size());
      for (const auto& [idx, p] : post.support) {
        const Sequence x0 = decode_terminal(idx, d.length(), vocab);
        terms.push_back(std::log(p) + spec.terminal(x0, vocab) / a);
      }
      return {a * log_sum_exp(terms), charge};
    }
    case RewardMode::Kind::kMonteCarlo: {
      std::vector<double> terms(spec.mode.samples);
      for (auto& term : terms) term = spec.terminal(d.sample_x0(x_t, rng), vocab) / a;
      return {a * log_mean_exp(terms), charge};
    }
    case RewardMode::Kind::kX0Prediction:
      return {spec.terminal(d.argmax_x0(x_t), vocab), charge};
  }
  return {};
}

}  // namespace maskref
