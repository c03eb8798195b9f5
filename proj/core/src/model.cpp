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

#include "maskref/model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "maskref/error.hpp"

namespace maskref {

namespace {

// Posteriors are cached per state when (2V)^L stays below this; that bounds
// the total number of stored completions.
constexpr StateIndex kPosteriorCacheCap = 4'000'000;

double standard_normal(RngStream& rng) {
  // Box-Muller on two stream draws; the first uniform is kept away from 0.
  const double u1 = 1.0 - rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Marsaglia-Tsang; shape < 1 uses the u^(1/a) boost.
double gamma_draw(double shape, RngStream& rng) {
  if (shape < 1.0) {
    const double u = 1.0 - rng.uniform();
    return gamma_draw(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double z = 0.0;
    double v = 0.0;
    do {
      z = standard_normal(rng);
      v = 1.0 + c * z;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - rng.uniform();
    if (std::log(u) < 0.5 * z * z + d - d * v + d * std::log(v)) return d * v;
  }
}

std::vector<double> dirichlet(std::size_t n, double concentration, RngStream& rng) {
  std::vector<double> w(n);
  for (auto& x : w) x = gamma_draw(concentration, rng);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& x : w) x /= total;
  return w;
}

std::vector<std::size_t> masked_positions_of(const Sequence& x, const Vocab& vocab) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < x.length(); ++i) {
    if (x[i] == vocab.mask_id()) out.push_back(i);
  }
  return out;
}

StateIndex ipow(StateIndex base, std::size_t e) {
  StateIndex r = 1;
  for (std::size_t i = 0; i < e; ++i) r *= base;
  return r;
}

}  // namespace

DataDistribution::DataDistribution(std::size_t length, Vocab vocab, std::vector<double> probs)
    : length_(length), vocab_(vocab), probs_(std::move(probs)) {
  if (length_ == 0) throw InvalidArgument("DataDistribution: length must be positive");
  const StateIndex expected = terminal_space_size(length_, vocab_.size());
  if (probs_.size() != expected) {
    throw InvalidArgument("DataDistribution: table size must be V^L");
  }
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw InvalidArgument("DataDistribution: probabilities must be finite and >= 0");
    }
    total += p;
  }
  if (!(total > 0.0) || std::abs(total - 1.0) > 1e-6) {
    throw InvalidArgument("DataDistribution: probabilities must sum to 1");
  }
  for (auto& p : probs_) p /= total;
}

DataDistribution DataDistribution::uniform(std::size_t length, int vocab_size) {
  const StateIndex n = terminal_space_size(length, vocab_size);
  return DataDistribution(length, Vocab(vocab_size),
                          std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

DataDistribution DataDistribution::random(std::size_t length, int vocab_size,
                                          std::uint64_t seed, double concentration) {
  if (!(concentration > 0.0)) throw InvalidArgument("random data: concentration must be > 0");
  const StateIndex n = terminal_space_size(length, vocab_size);
  RngStream rng(seed, 0x64617461ULL);
  return DataDistribution(length, Vocab(vocab_size), dirichlet(n, concentration, rng));
}

DataDistribution DataDistribution::markov(std::size_t length, int vocab_size,
                                          std::uint64_t seed, double stickiness) {
  if (!(stickiness >= 0.0 && stickiness <= 1.0)) {
    throw InvalidArgument("markov data: stickiness must be in [0, 1]");
  }
  const Vocab vocab(vocab_size);
  const auto V = static_cast<std::size_t>(vocab_size);
  RngStream rng(seed, 0x6d61726bULL);
  const std::vector<double> initial = dirichlet(V, 1.0, rng);
  std::vector<std::vector<double>> transition(V);
  for (std::size_t a = 0; a < V; ++a) {
    transition[a] = dirichlet(V, 1.0, rng);
    for (auto& p : transition[a]) p *= 1.0 - stickiness;
    transition[a][(a + 1) % V] += stickiness;
  }
  const StateIndex n = terminal_space_size(length, vocab_size);
  std::vector<double> probs(n);
  for (StateIndex idx = 0; idx < n; ++idx) {
    const Sequence x = decode_terminal(idx, length, vocab);
    double p = initial[static_cast<std::size_t>(x[0])];
    for (std::size_t i = 1; i < length; ++i) {
      p *= transition[static_cast<std::size_t>(x[i - 1])][static_cast<std::size_t>(x[i])];
    }
    probs[idx] = p;
  }
  return DataDistribution(length, vocab, std::move(probs));
}

DataDistribution DataDistribution::pattern(std::size_t length, int vocab_size,
                                           const std::vector<Sequence>& patterns,
                                           const std::vector<double>& weights,
                                           double epsilon) {
  if (patterns.empty() || patterns.size() != weights.size()) {
    throw InvalidArgument("pattern data: need one weight per pattern");
  }
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw InvalidArgument("pattern data: epsilon must be in [0, 1]");
  }
  const Vocab vocab(vocab_size);
  const StateIndex n = terminal_space_size(length, vocab_size);
  std::vector<double> probs(n, epsilon / static_cast<double>(n));
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(wsum > 0.0)) throw InvalidArgument("pattern data: weights must have positive sum");
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    if (patterns[i].length() != length) throw InvalidArgument("pattern data: length mismatch");
    probs[encode_terminal(patterns[i], vocab)] += (1.0 - epsilon) * weights[i] / wsum;
  }
  return DataDistribution(length, vocab, std::move(probs));
}

double DataDistribution::prob(const Sequence& x0) const {
  if (x0.length() != length_) throw InvalidArgument("DataDistribution::prob: length mismatch");
  return probs_[encode_terminal(x0, vocab_)];
}

void DataDistribution::save(std::ostream& out) const {
  out << length_ << ' ' << vocab_.size() << '\n';
  std::ostringstream line;
  line.precision(17);
  for (StateIndex idx = 0; idx < terminal_count(); ++idx) {
    const StateIndex canonical = encode(decode_terminal(idx, length_, vocab_), vocab_);
    line.str("");
    line << canonical << ' ' << probs_[idx] << '\n';
    out << line.str();
  }
}

DataDistribution DataDistribution::load(std::istream& in) {
  std::size_t length = 0;
  int vocab_size = 0;
  if (!(in >> length >> vocab_size)) throw InvalidArgument("data table: bad header");
  const Vocab vocab(vocab_size);
  std::vector<double> probs(terminal_space_size(length, vocab_size), 0.0);
  StateIndex canonical = 0;
  double p = 0.0;
  while (in >> canonical >> p) {
    const Sequence x = decode(canonical, length, vocab);
    if (!is_terminal(x, vocab) || canonical >= state_space_size(length, vocab_size)) {
      throw InvalidArgument("data table: state index is not a terminal state");
    }
    probs[encode_terminal(x, vocab)] = p;
  }
  if (!in.eof()) throw InvalidArgument("data table: malformed line");
  return DataDistribution(length, vocab, std::move(probs));
}

std::string to_string(DenoiserKind kind) {
  return kind == DenoiserKind::kExactPosterior ? "exact" : "meanfield";
}

DenoiserKind parse_denoiser_kind(const std::string& name) {
  if (name == "exact") return DenoiserKind::kExactPosterior;
  if (name == "meanfield") return DenoiserKind::kMeanField;
  throw InvalidArgument("unknown denoiser kind: " + name);
}

Denoiser::Denoiser(DenoiserKind kind, std::shared_ptr<const DataDistribution> data,
                   Schedule schedule)
    : kind_(kind), data_(std::move(data)), schedule_(std::move(schedule)) {
  if (!data_) throw InvalidArgument("Denoiser: data distribution required");
  // (2V)^L bounds the summed completion count over all (V+1)^L states.
  StateIndex bound = 1;
  bool small = true;
  for (std::size_t i = 0; i < length() && small; ++i) {
    bound *= 2 * static_cast<StateIndex>(vocab().size());
    small = bound <= kPosteriorCacheCap;
  }
  if (small) {
    const StateIndex n = state_space_size(length(), vocab().size());
    cache_.reserve(n);
    for (StateIndex idx = 0; idx < n; ++idx) {
      cache_.push_back(build_entry(decode(idx, length(), vocab())));
    }
  }
}

Denoiser::Entry Denoiser::build_entry(const Sequence& x_t) const {
  const Vocab& voc = vocab();
  const auto V = static_cast<StateIndex>(voc.size());
  const auto masked = masked_positions_of(x_t, voc);
  StateIndex fixed = 0;
  for (std::size_t i = x_t.length(); i-- > 0;) {
    const StateIndex digit = x_t[i] == voc.mask_id() ? 0 : static_cast<StateIndex>(x_t[i]);
    fixed = fixed * V + digit;
  }
  std::vector<StateIndex> place(masked.size());
  for (std::size_t j = 0; j < masked.size(); ++j) place[j] = ipow(V, masked[j]);

  Entry e;
  e.marginals = Matrix::Zero(static_cast<Eigen::Index>(length()), voc.size());
  const StateIndex combos = ipow(V, masked.size());
  double total = 0.0;
  for (StateIndex c = 0; c < combos; ++c) {
    StateIndex idx = fixed;
    StateIndex rest = c;
    for (std::size_t j = 0; j < masked.size(); ++j) {
      idx += (rest % V) * place[j];
      rest /= V;
    }
    const double p = data_->probs()[idx];
    if (p > 0.0) {
      e.completions.push_back(idx);
      e.probs.push_back(p);
      total += p;
    }
  }
  if (!(total > 0.0)) return e;
  e.has_support = true;
  double acc = 0.0;
  e.cumulative.reserve(e.probs.size());
  for (std::size_t k = 0; k < e.probs.size(); ++k) {
    e.probs[k] /= total;
    acc += e.probs[k];
    e.cumulative.push_back(acc);
    StateIndex rest = e.completions[k];
    for (std::size_t i = 0; i < length(); ++i) {
      e.marginals(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(rest % V)) += e.probs[k];
      rest /= V;
    }
  }
  e.cumulative.back() = 1.0;
  return e;
}

const Denoiser::Entry& Denoiser::entry(const Sequence& x_t, Entry& scratch) const {
  if (x_t.length() != length()) throw InvalidArgument("Denoiser: sequence length mismatch");
  const Entry* e = nullptr;
  if (!cache_.empty()) {
    e = &cache_[encode(x_t, vocab())];
  } else {
    scratch = build_entry(x_t);
    e = &scratch;
  }
  if (!e->has_support) {
    throw ZeroSupport("x0 posterior has zero support for state " + to_string(x_t, vocab()));
  }
  return *e;
}

X0Posterior Denoiser::x0_posterior(const Sequence& x_t) const {
  Entry scratch;
  const Entry& e = entry(x_t, scratch);
  X0Posterior post{kind_, {}, e.marginals, masked_positions_of(x_t, vocab())};
  if (kind_ == DenoiserKind::kExactPosterior) {
    post.support.reserve(e.completions.size());
    for (std::size_t k = 0; k < e.completions.size(); ++k) {
      post.support.emplace_back(e.completions[k], e.probs[k]);
    }
    return post;
  }
  // Product law over the masked positions.
  const auto V = static_cast<StateIndex>(vocab().size());
  const Sequence base = argmax_x0(x_t);  // any completion; masked digits overwritten
  StateIndex fixed = 0;
  for (std::size_t i = length(); i-- > 0;) {
    const bool is_masked = x_t[i] == vocab().mask_id();
    fixed = fixed * V + (is_masked ? 0 : static_cast<StateIndex>(base[i]));
  }
  const auto& masked = post.masked_positions;
  const StateIndex combos = ipow(V, masked.size());
  for (StateIndex c = 0; c < combos; ++c) {
    StateIndex idx = fixed;
    StateIndex rest = c;
    double p = 1.0;
    for (std::size_t pos : masked) {
      const StateIndex v = rest % V;
      rest /= V;
      p *= e.marginals(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(v));
      idx += v * ipow(V, pos);
    }
    if (p > 0.0) post.support.emplace_back(idx, p);
  }
  return post;
}

Matrix Denoiser::marginals(const Sequence& x_t) const {
  Entry scratch;
  return entry(x_t, scratch).marginals;
}

Sequence Denoiser::sample_x0(const Sequence& x_t, RngStream& rng) const {
  Entry scratch;
  const Entry& e = entry(x_t, scratch);
  if (kind_ == DenoiserKind::kExactPosterior) {
    const double u = rng.uniform();
    auto it = std::upper_bound(e.cumulative.begin(), e.cumulative.end(), u);
    if (it == e.cumulative.end()) --it;
    const auto k = static_cast<std::size_t>(it - e.cumulative.begin());
    return decode_terminal(e.completions[k], length(), vocab());
  }
  Sequence x0 = x_t;
  std::vector<double> row(static_cast<std::size_t>(vocab().size()));
  for (std::size_t i = 0; i < length(); ++i) {
    if (x_t[i] != vocab().mask_id()) continue;
    for (std::size_t v = 0; v < row.size(); ++v) {
      row[v] = e.marginals(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v));
    }
    x0[i] = static_cast<Token>(rng.categorical(row));
  }
  return x0;
}

Sequence Denoiser::argmax_x0(const Sequence& x_t) const {
  Entry scratch;
  const Entry& e = entry(x_t, scratch);
  Sequence x0 = x_t;
  for (std::size_t i = 0; i < length(); ++i) {
    if (x_t[i] != vocab().mask_id()) continue;
    Eigen::Index best = 0;
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index v = 1; v < e.marginals.cols(); ++v) {
      if (e.marginals(r, v) > e.marginals(r, best)) best = v;
    }
    x0[i] = static_cast<Token>(best);
  }
  return x0;
}

Sequence forward_noise(const Sequence& x, const Vocab& vocab, const Schedule& schedule,
                       int t_from, int t_to, RngStream& rng) {
  if (t_to <= t_from) throw InvalidArgument("forward_noise: need t_to > t_from");
  const double p = schedule.mask_probability(t_from, t_to);
  Sequence out = x;
  for (std::size_t i = 0; i < out.length(); ++i) {
    if (out[i] == vocab.mask_id()) continue;
    if (rng.bernoulli(p)) out[i] = vocab.mask_id();
  }
  return out;
}

Sequence forward_noise(const Denoiser& d, const Sequence& x, int t_from, int t_to,
                       RngStream& rng) {
  return forward_noise(x, d.vocab(), d.schedule(), t_from, t_to, rng);
}

Sequence reverse_step(const Denoiser& d, const Sequence& x_t, int t, int s, RngStream& rng) {
  if (s >= t) throw InvalidArgument("reverse_step: need s < t");
  if (s < 0 || t > d.T()) throw InvalidArgument("reverse_step: time out of range");
  if (is_terminal(x_t, d.vocab())) return x_t;
  const double u = d.schedule().unmask_probability(t, s);
  const Sequence x0 = d.sample_x0(x_t, rng);
  Sequence out = x_t;
  for (std::size_t i = 0; i < out.length(); ++i) {
    if (out[i] != d.vocab().mask_id()) continue;
    if (rng.bernoulli(u)) out[i] = x0[i];
  }
  return out;
}

Matrix reverse_kernel_exact(const Denoiser& d, int t, int s, StateIndex matrix_cap) {
  if (s >= t) throw InvalidArgument("reverse_kernel_exact: need s < t");
  const Vocab& voc = d.vocab();
  const std::size_t L = d.length();
  const StateIndex n = state_space_size(L, voc.size(), matrix_cap);
  const double u = d.schedule().unmask_probability(t, s);
  const auto V = static_cast<StateIndex>(voc.size());
  Matrix K = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (StateIndex row = 0; row < n; ++row) {
    const auto r = static_cast<Eigen::Index>(row);
    const Sequence x = decode(row, L, voc);
    if (is_terminal(x, voc)) {
      K(r, r) = 1.0;
      continue;
    }
    X0Posterior post;
    try {
      post = d.x0_posterior(x);
    } catch (const ZeroSupport&) {
      K(r, r) = 1.0;
      continue;
    }
    const auto& masked = post.masked_positions;
    const std::size_t m = masked.size();
    for (const auto& [x0_index, p0] : post.support) {
      std::vector<Token> digits(L);
      StateIndex rest = x0_index;
      for (std::size_t i = 0; i < L; ++i) {
        digits[i] = static_cast<Token>(rest % V);
        rest /= V;
      }
      for (std::uint64_t subset = 0; subset < (std::uint64_t{1} << m); ++subset) {
        Sequence y = x;
        int revealed = 0;
        for (std::size_t j = 0; j < m; ++j) {
          if ((subset >> j) & 1U) {
            y[masked[j]] = digits[masked[j]];
            ++revealed;
          }
        }
        const double w = p0 * std::pow(u, revealed) *
                         std::pow(1.0 - u, static_cast<int>(m) - revealed);
        K(r, static_cast<Eigen::Index>(encode(y, voc))) += w;
      }
    }
  }
  return K;
}

Matrix forward_noise_matrix(std::size_t length, const Vocab& vocab, const Schedule& schedule,
                            int t_from, int t_to, StateIndex matrix_cap) {
  const StateIndex n = state_space_size(length, vocab.size(), matrix_cap);
  const double p = schedule.mask_probability(t_from, t_to);
  Matrix Q = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (StateIndex row = 0; row < n; ++row) {
    const Sequence x = decode(row, length, vocab);
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < length; ++i) {
      if (x[i] != vocab.mask_id()) open.push_back(i);
    }
    const std::size_t k = open.size();
    for (std::uint64_t subset = 0; subset < (std::uint64_t{1} << k); ++subset) {
      Sequence y = x;
      int hidden = 0;
      for (std::size_t j = 0; j < k; ++j) {
        if ((subset >> j) & 1U) {
          y[open[j]] = vocab.mask_id();
          ++hidden;
        }
      }
      Q(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(encode(y, vocab))) +=
          std::pow(p, hidden) * std::pow(1.0 - p, static_cast<int>(k) - hidden);
    }
  }
  return Q;
}

}  // namespace maskref
