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

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace maskref {

using Token = std::int32_t;
using StateIndex = std::uint64_t;

// Default enumeration guard: (V+1)^L states.
inline constexpr StateIndex kDefaultStateCap = 2'000'000;

// Finite vocabulary of V tokens 0..V-1 plus the absorbing mask sentinel V.
class Vocab {
 public:
  explicit Vocab(int size);

  int size() const { return size_; }
  Token mask_id() const { return size_; }
  bool is_token(Token tok) const { return tok >= 0 && tok < size_; }

  friend bool operator==(const Vocab&, const Vocab&) = default;

 private:
  int size_;
};

// Fixed-length token array. Entries are in [0, V) or the mask sentinel.
class Sequence {
 public:
  Sequence(std::size_t length, Token fill);
  explicit Sequence(std::vector<Token> tokens);

  static Sequence all_mask(std::size_t length, const Vocab& vocab) {
    return Sequence(length, vocab.mask_id());
  }

  std::size_t length() const { return tokens_.size(); }
  Token operator[](std::size_t i) const { return tokens_[i]; }
  Token& operator[](std::size_t i) { return tokens_[i]; }
  std::span<const Token> tokens() const { return tokens_; }

  friend bool operator==(const Sequence&, const Sequence&) = default;
  friend auto operator<=>(const Sequence&, const Sequence&) = default;

 private:
  std::vector<Token> tokens_;
};

std::size_t mask_count(const Sequence& x, const Vocab& vocab);
bool is_terminal(const Sequence& x, const Vocab& vocab);

// Letters a, b, c, ... for tokens and '_' for the mask. Requires V <= 26.
std::string to_string(const Sequence& x, const Vocab& vocab);
Sequence parse_sequence(const std::string& letters, const Vocab& vocab);
char token_letter(Token tok, const Vocab& vocab);
Token parse_token(char letter, const Vocab& vocab);

// (V+1)^L. Throws CapExceeded when the count overflows 64 bits or exceeds cap.
StateIndex state_space_size(std::size_t length, int vocab_size,
                            StateIndex cap = kDefaultStateCap);

// V^L, the number of terminal sequences, with the same guard.
StateIndex terminal_space_size(std::size_t length, int vocab_size,
                               StateIndex cap = kDefaultStateCap);

// Canonical base-(V+1) index, position 0 is the least significant digit.
StateIndex encode(const Sequence& x, const Vocab& vocab);
Sequence decode(StateIndex index, std::size_t length, const Vocab& vocab);

// Base-V index of a terminal sequence (mask-free).
StateIndex encode_terminal(const Sequence& x, const Vocab& vocab);
Sequence decode_terminal(StateIndex index, std::size_t length, const Vocab& vocab);

// Monotone survival probabilities alpha[0] = 1 > alpha[1] > ... > alpha[T] = 0.
class Schedule {
 public:
  explicit Schedule(std::vector<double> alpha);

  static Schedule linear(int T);
  static Schedule cosine(int T);

  int T() const { return static_cast<int>(alpha_.size()) - 1; }
  double alpha(int t) const;
  std::span<const double> alphas() const { return alpha_; }

  // Probability that a token unmasked at t_from is masked by t_to > t_from.
  double mask_probability(int t_from, int t_to) const;
  // Probability that a position masked at t is revealed by s < t.
  double unmask_probability(int t, int s) const;

 private:
  std::vector<double> alpha_;
};

}  // namespace maskref
