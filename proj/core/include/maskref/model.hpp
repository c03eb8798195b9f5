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
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "maskref/core.hpp"
#include "maskref/rng.hpp"

namespace maskref {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense matrices over all (V+1)^L states are refused beyond this many states.
inline constexpr StateIndex kDefaultMatrixStateCap = 4096;

// Law of x_0 as a dense table indexed by encode_terminal.
class DataDistribution {
 public:
  DataDistribution(std::size_t length, Vocab vocab, std::vector<double> probs);

  static DataDistribution uniform(std::size_t length, int vocab_size);
  // Each entry ~ Gamma(concentration) then normalized (a Dirichlet draw).
  static DataDistribution random(std::size_t length, int vocab_size, std::uint64_t seed,
                                 double concentration = 1.0);
  // First-order Markov chain with a seeded random initial law and a transition
  // matrix whose rows favour a "next" token with probability `stickiness`.
  static DataDistribution markov(std::size_t length, int vocab_size, std::uint64_t seed,
                                 double stickiness = 0.7);
  // Mass `1 - epsilon` spread over the listed patterns (by weight), the rest uniform.
  static DataDistribution pattern(std::size_t length, int vocab_size,
                                  const std::vector<Sequence>& patterns,
                                  const std::vector<double>& weights, double epsilon);

  std::size_t length() const { return length_; }
  const Vocab& vocab() const { return vocab_; }
  StateIndex terminal_count() const { return static_cast<StateIndex>(probs_.size()); }
  const std::vector<double>& probs() const { return probs_; }
  double prob(const Sequence& x0) const;

  // Header `L V`, then `state_index probability` per terminal state, with the
  // canonical base-(V+1) state index.
  void save(std::ostream& out) const;
  static DataDistribution load(std::istream& in);

 private:
  std::size_t length_;
  Vocab vocab_;
  std::vector<double> probs_;
};

enum class DenoiserKind { kExactPosterior, kMeanField };

std::string to_string(DenoiserKind kind);
DenoiserKind parse_denoiser_kind(const std::string& name);

// p(x_0 | x_t). For the exact posterior `support` holds every completion with
// positive mass; for the mean-field posterior it holds the product-law
// completions. `marginals(i, v)` is identical for both kinds.
struct X0Posterior {
  DenoiserKind kind;
  std::vector<std::pair<StateIndex, double>> support;  // (terminal index, prob)
  Matrix marginals;                                   // L x V
  std::vector<std::size_t> masked_positions;
};

// Reverse model over an absorbing forward process. Immutable; safe to share.
class Denoiser {
 public:
  Denoiser(DenoiserKind kind, std::shared_ptr<const DataDistribution> data, Schedule schedule);

  DenoiserKind kind() const { return kind_; }
  const DataDistribution& data() const { return *data_; }
  std::shared_ptr<const DataDistribution> data_ptr() const { return data_; }
  const Schedule& schedule() const { return schedule_; }
  const Vocab& vocab() const { return data_->vocab(); }
  std::size_t length() const { return data_->length(); }
  int T() const { return schedule_.T(); }

  // Throws ZeroSupport when x_t has no completion with positive mass.
  X0Posterior x0_posterior(const Sequence& x_t) const;

  // Per-position marginals of the exact posterior (L x V).
  Matrix marginals(const Sequence& x_t) const;

  // Draws a full x_0 from the posterior of this kind.
  Sequence sample_x0(const Sequence& x_t, RngStream& rng) const;

  // Greedy per-position argmax completion, ties toward the smaller token id.
  Sequence argmax_x0(const Sequence& x_t) const;

 private:
  struct Entry {
    bool has_support = false;
    std::vector<StateIndex> completions;  // terminal indices
    std::vector<double> cumulative;       // normalized cumulative mass
    std::vector<double> probs;            // normalized mass
    Matrix marginals;
  };

  Entry build_entry(const Sequence& x_t) const;
  // Cached entry when available, otherwise builds into `scratch`.
  const Entry& entry(const Sequence& x_t, Entry& scratch) const;

  DenoiserKind kind_;
  std::shared_ptr<const DataDistribution> data_;
  Schedule schedule_;
  // Per-state posterior cache, filled at construction for small instances.
  std::vector<Entry> cache_;
};

// Masks each unmasked token independently with probability
// 1 - alpha(t_to)/alpha(t_from). Never charged as a function evaluation.
Sequence forward_noise(const Sequence& x, const Vocab& vocab, const Schedule& schedule,
                       int t_from, int t_to, RngStream& rng);
Sequence forward_noise(const Denoiser& d, const Sequence& x, int t_from, int t_to,
                       RngStream& rng);

// One reverse move from level t to level s < t: draw x_0 from the posterior,
// then reveal each masked position with probability (a_s - a_t)/(1 - a_t).
Sequence reverse_step(const Denoiser& d, const Sequence& x_t, int t, int s, RngStream& rng);

// Exact law of reverse_step(d, ., t, s) as a row-stochastic matrix over the
// canonical state indices. Rows of zero-support (unreachable) states are
// identity rows.
Matrix reverse_kernel_exact(const Denoiser& d, int t, int s,
                            StateIndex matrix_cap = kDefaultMatrixStateCap);

// Exact law of forward_noise(., t_from, t_to) as a row-stochastic matrix.
Matrix forward_noise_matrix(std::size_t length, const Vocab& vocab, const Schedule& schedule,
                            int t_from, int t_to,
                            StateIndex matrix_cap = kDefaultMatrixStateCap);

}  // namespace maskref
