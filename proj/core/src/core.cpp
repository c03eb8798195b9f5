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

#include "maskref/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "maskref/error.hpp"

namespace maskref {

Vocab::Vocab(int size) : size_(size) {
  if (size < 2) throw InvalidArgument("Vocab: size must be >= 2");
}

Sequence::Sequence(std::size_t length, Token fill) : tokens_(length, fill) {}

Sequence::Sequence(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

std::size_t mask_count(const Sequence& x, const Vocab& vocab) {
  return static_cast<std::size_t>(
      std::count(x.tokens().begin(), x.tokens().end(), vocab.mask_id()));
}

bool is_terminal(const Sequence& x, const Vocab& vocab) {
  return mask_count(x, vocab) == 0;
}

char token_letter(Token tok, const Vocab& vocab) {
  if (tok == vocab.mask_id()) return '_';
  if (!vocab.is_token(tok) || tok >= 26) {
    throw InvalidArgument("token has no letter form: " + std::to_string(tok));
  }
  return static_cast<char>('a' + tok);
}

Token parse_token(char letter, const Vocab& vocab) {
  if (letter == '_') return vocab.mask_id();
  const Token tok = letter - 'a';
  if (letter < 'a' || letter > 'z' || !vocab.is_token(tok)) {
    throw InvalidArgument(std::string("token letter out of vocabulary: ") + letter);
  }
  return tok;
}

std::string to_string(const Sequence& x, const Vocab& vocab) {
  std::string out;
  out.reserve(x.length());
  for (Token tok : x.tokens()) out.push_back(token_letter(tok, vocab));
  return out;
}

Sequence parse_sequence(const std::string& letters, const Vocab& vocab) {
  std::vector<Token> tokens;
  tokens.reserve(letters.size());
  for (char c : letters) tokens.push_back(parse_token(c, vocab));
  return Sequence(std::move(tokens));
}

namespace {

StateIndex checked_power(std::uint64_t base, std::size_t exponent, StateIndex cap,
                         const char* what) {
  StateIndex result = 1;
  for (std::size_t i = 0; i < exponent; ++i) {
    if (result > std::numeric_limits<StateIndex>::max() / base) {
      throw CapExceeded(std::string(what) + ": count overflows 64-bit integers");
    }
    result *= base;
  }
  if (result > cap) {
    throw CapExceeded(std::string(what) + ": " + std::to_string(result) +
                      " exceeds enumeration cap " + std::to_string(cap));
  }
  return result;
}

}  // namespace

StateIndex state_space_size(std::size_t length, int vocab_size, StateIndex cap) {
  return checked_power(static_cast<std::uint64_t>(vocab_size) + 1, length, cap,
                       "state_space_size");
}

StateIndex terminal_space_size(std::size_t length, int vocab_size, StateIndex cap) {
  return checked_power(static_cast<std::uint64_t>(vocab_size), length, cap,
                       "terminal_space_size");
}

StateIndex encode(const Sequence& x, const Vocab& vocab) {
  const auto base = static_cast<StateIndex>(vocab.size()) + 1;
  StateIndex index = 0;
  for (std::size_t i = x.length(); i-- > 0;) {
    index = index * base + static_cast<StateIndex>(x[i]);
  }
  return index;
}

Sequence decode(StateIndex index, std::size_t length, const Vocab& vocab) {
  const auto base = static_cast<StateIndex>(vocab.size()) + 1;
  Sequence x(length, 0);
  for (std::size_t i = 0; i < length; ++i) {
    x[i] = static_cast<Token>(index % base);
    index /= base;
  }
  return x;
}

StateIndex encode_terminal(const Sequence& x, const Vocab& vocab) {
  const auto base = static_cast<StateIndex>(vocab.size());
  StateIndex index = 0;
  for (std::size_t i = x.length(); i-- > 0;) {
    if (!vocab.is_token(x[i])) throw InvalidArgument("encode_terminal: masked sequence");
    index = index * base + static_cast<StateIndex>(x[i]);
  }
  return index;
}

Sequence decode_terminal(StateIndex index, std::size_t length, const Vocab& vocab) {
  const auto base = static_cast<StateIndex>(vocab.size());
  Sequence x(length, 0);
  for (std::size_t i = 0; i < length; ++i) {
    x[i] = static_cast<Token>(index % base);
    index /= base;
  }
  return x;
}

Schedule::Schedule(std::vector<double> alpha) : alpha_(std::move(alpha)) {
  if (alpha_.size() < 2) throw InvalidArgument("Schedule: need T >= 1");
  if (alpha_.front() != 1.0) throw InvalidArgument("Schedule: alpha[0] must be exactly 1");
  if (alpha_.back() != 0.0) throw InvalidArgument("Schedule: alpha[T] must be exactly 0");
  for (std::size_t t = 0; t + 1 < alpha_.size(); ++t) {
    if (!(alpha_[t + 1] < alpha_[t])) {
      throw InvalidArgument("Schedule: alpha must be strictly decreasing (violated at t=" +
                            std::to_string(t + 1) + ")");
    }
  }
}

Schedule Schedule::linear(int T) {
  if (T < 1) throw InvalidArgument("linear_schedule: T must be >= 1");
  std::vector<double> alpha(static_cast<std::size_t>(T) + 1);
  for (int t = 0; t <= T; ++t) alpha[t] = 1.0 - static_cast<double>(t) / T;
  alpha[T] = 0.0;
  return Schedule(std::move(alpha));
}

Schedule Schedule::cosine(int T) {
  if (T < 1) throw InvalidArgument("cosine_schedule: T must be >= 1");
  std::vector<double> alpha(static_cast<std::size_t>(T) + 1);
  for (int t = 0; t <= T; ++t) {
    alpha[t] = std::cos(0.5 * std::numbers::pi * static_cast<double>(t) / T);
  }
  alpha[0] = 1.0;
  alpha[T] = 0.0;
  return Schedule(std::move(alpha));
}

double Schedule::alpha(int t) const {
  if (t < 0 || t > T()) throw InvalidArgument("Schedule: time out of range");
  return alpha_[static_cast<std::size_t>(t)];
}

double Schedule::mask_probability(int t_from, int t_to) const {
  if (t_to <= t_from) throw InvalidArgument("mask_probability: need t_to > t_from");
  return 1.0 - alpha(t_to) / alpha(t_from);
}

double Schedule::unmask_probability(int t, int s) const {
  if (s >= t) throw InvalidArgument("unmask_probability: need s < t");
  return (alpha(s) - alpha(t)) / (1.0 - alpha(t));
}

}  // namespace maskref
