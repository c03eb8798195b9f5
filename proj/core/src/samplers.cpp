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

#include "maskref/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "maskref/error.hpp"

namespace maskref {

namespace {

// Multinomial weights exp(log_w - max); falls back to uniform (and flags it)
// when no weight is positive.
std::size_t draw_by_log_weight(std::span<const double> log_weights, RngStream& rng,
                               std::vector<std::string>& notes, const char* who) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double lw : log_weights) {
    if (!std::isnan(lw)) hi = std::max(hi, lw);
  }
  std::vector<double> w(log_weights.size(), 0.0);
  if (std::isfinite(hi)) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = std::isnan(log_weights[i]) ? 0.0 : std::exp(log_weights[i] - hi);
    }
  }
  const std::size_t pick = rng.categorical(w);
  if (pick < w.size()) return pick;
  notes.push_back(std::string(who) + ": all weights zero, uniform resample");
  return static_cast<std::size_t>(rng.below(w.size()));
}

std::size_t argmax_first(const std::vector<double>& values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

void require_positive(std::size_t n, const char* who) {
  if (n == 0) throw InvalidArgument(std::string(who) + ": n must be >= 1");
}

}  // namespace

SampleResult ancestral(const Denoiser& d, const RewardSpec& /*spec*/, RngStream& rng) {
  SampleResult out{Sequence::all_mask(d.length(), d.vocab()), {}, {}};
  for (int t = d.T(); t >= 1; --t) {
    out.sample = reverse_step(d, out.sample, t, t - 1, rng);
    out.ledger.charge_denoiser();
  }
  return out;
}

SampleResult best_of_n(const Denoiser& d, const RewardSpec& spec, std::size_t n,
                       RngStream& rng) {
  require_positive(n, "best_of_n");
  SampleResult out{Sequence::all_mask(d.length(), d.vocab()), {}, {}};
  std::vector<Sequence> samples;
  std::vector<double> rewards;
  for (std::size_t i = 0; i < n; ++i) {
    SampleResult run = ancestral(d, spec, rng);
    out.ledger += run.ledger;
    if (n == 1) return run;  // nothing to select, so no reward call
    rewards.push_back(terminal_reward(spec, run.sample, d.vocab()));
    out.ledger.charge_reward();
    samples.push_back(std::move(run.sample));
  }
  out.sample = samples[argmax_first(rewards)];
  return out;
}

SampleResult svdd(const Denoiser& d, const RewardSpec& spec, std::size_t n, RngStream& rng) {
  require_positive(n, "svdd");
  if (n == 1) return ancestral(d, spec, rng);
  SampleResult out{Sequence::all_mask(d.length(), d.vocab()), {}, {}};
  std::vector<Sequence> candidates;
  std::vector<double> log_w(n);
  for (int t = d.T(); t >= 1; --t) {
    candidates.clear();
    for (std::size_t i = 0; i < n; ++i) {
      candidates.push_back(reverse_step(d, out.sample, t, t - 1, rng));
      out.ledger.charge_denoiser();
      const RewardValue r = intermediate_reward(spec, d, candidates.back(), t - 1, rng);
      out.ledger.charge_reward(r.evals_used);
      log_w[i] = r.value / spec.alpha;
    }
    out.sample = candidates[draw_by_log_weight(log_w, rng, out.notes, "svdd")];
  }
  return out;
}

SampleResult fk_steering(const Denoiser& d, const RewardSpec& spec, std::size_t n,
                         std::size_t resample_every, RngStream& rng) {
  require_positive(n, "fk_steering");
  if (resample_every == 0) throw InvalidArgument("fk_steering: resample_every must be >= 1");
  if (n == 1) return ancestral(d, spec, rng);
  const int T = d.T();
  std::vector<Sequence> particles(n, Sequence::all_mask(d.length(), d.vocab()));
  // Reward at the previous potential evaluation; the all-mask start shares one
  // value, which cancels in the normalized weights, so it is left at zero.
  std::vector<double> previous(n, 0.0);
  SampleResult out{particles.front(), {}, {}};
  std::vector<double> current(n);
  std::vector<double> log_w(n);
  for (int t = T; t >= 1; --t) {
    const int level = t - 1;
    for (auto& p : particles) {
      p = reverse_step(d, p, t, level, rng);
      out.ledger.charge_denoiser();
    }
    if (level == 0 || (T - level) % static_cast<int>(resample_every) != 0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const RewardValue r = intermediate_reward(spec, d, particles[i], level, rng);
      out.ledger.charge_reward(r.evals_used);
      current[i] = r.value;
      log_w[i] = (current[i] - previous[i]) / spec.alpha;
    }
    std::vector<Sequence> next;
    next.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t parent = draw_by_log_weight(log_w, rng, out.notes, "fk_steering");
      next.push_back(particles[parent]);
      previous[i] = current[parent];
    }
    particles = std::move(next);
  }
  std::vector<double> final_rewards(n);
  for (std::size_t i = 0; i < n; ++i) {
    final_rewards[i] = terminal_reward(spec, particles[i], d.vocab());
    out.ledger.charge_reward();
  }
  out.sample = particles[argmax_first(final_rewards)];
  return out;
}

SopPlan sop_plan(const SopConfig& cfg, const Schedule& schedule) {
  if (!(cfg.remask_fraction > 0.0 && cfg.remask_fraction <= 1.0)) {
    throw InvalidArgument("sop: remask fraction f must be in (0, 1]");
  }
  if (cfg.denoise_levels < 0) throw InvalidArgument("sop: denoise levels must be >= 1");
  const int T = schedule.T();
  int start = cfg.start_level;
  if (start < 0) start = std::max(1, static_cast<int>(std::lround(0.11 * T)));
  start = std::min(start, T);
  SopPlan plan{start, {}};
  int level = start;
  while (level > 0) {
    // Lift to the level whose survival probability is nearest to a_s (1 - f).
    const double goal = schedule.alpha(level) * (1.0 - cfg.remask_fraction);
    int lifted = level + 1;
    for (int u = level + 1; u <= T; ++u) {
      if (std::abs(schedule.alpha(u) - goal) < std::abs(schedule.alpha(lifted) - goal)) lifted = u;
    }
    lifted = std::min(lifted, T);
    if (lifted <= level) lifted = level;  // only when level == T
    int down = cfg.denoise_levels;
    if (down == 0) {
      down = static_cast<int>(std::lround(0.81 / 0.78 * static_cast<double>(lifted - level)));
    }
    const int landing = std::clamp(lifted - down, 0, level - 1);
    plan.rounds.emplace_back(lifted, landing);
    level = landing;
  }
  return plan;
}

SampleResult sop_discrete(const Denoiser& d, const RewardSpec& spec, const SopConfig& cfg,
                          RngStream& rng) {
  require_positive(cfg.n, "sop_discrete");
  require_positive(cfg.m, "sop_discrete");
  const SopPlan plan = sop_plan(cfg, d.schedule());
  const Vocab& vocab = d.vocab();
  SampleResult out{Sequence::all_mask(d.length(), vocab), {}, {}};
  std::vector<Sequence> kept(cfg.n, out.sample);
  for (auto& x : kept) {
    for (int t = d.T(); t > plan.start_level; --t) {
      x = reverse_step(d, x, t, t - 1, rng);
      out.ledger.charge_denoiser();
    }
  }
  std::vector<double> kept_rewards;
  if (plan.rounds.empty()) {
    // The search starts at level 0: plain n-way selection on terminal states.
    for (const auto& x : kept) {
      kept_rewards.push_back(terminal_reward(spec, x, vocab));
      out.ledger.charge_reward();
    }
  }
  for (const auto& [lifted, landing] : plan.rounds) {
    std::vector<Sequence> variants;
    std::vector<double> scores;
    for (const auto& x : kept) {
      for (std::size_t j = 0; j < cfg.m; ++j) {
        Sequence y = x;
        for (std::size_t i = 0; i < y.length(); ++i) {
          if (y[i] != vocab.mask_id() && rng.bernoulli(cfg.remask_fraction)) y[i] = vocab.mask_id();
        }
        for (int t = lifted; t > landing; --t) {
          y = reverse_step(d, y, t, t - 1, rng);
          out.ledger.charge_denoiser();
        }
        const RewardValue r = intermediate_reward(spec, d, y, landing, rng);
        out.ledger.charge_reward(r.evals_used);
        scores.push_back(r.value);
        variants.push_back(std::move(y));
      }
    }
    // Top n by score, earliest variant first on ties.
    std::vector<std::size_t> order(variants.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    kept.clear();
    kept_rewards.clear();
    for (std::size_t i = 0; i < cfg.n; ++i) {
      kept.push_back(variants[order[i]]);
      kept_rewards.push_back(scores[order[i]]);
    }
  }
  out.sample = kept[argmax_first(kept_rewards)];
  return out;
}

void IterRefConfig::validate(int T) const {
  if (N == 0) throw InvalidArgument("iterref: N must be >= 1");
  if (k == 0) throw InvalidArgument("iterref: k must be >= 1");
  if (effective_set.empty()) throw InvalidArgument("iterref: effective set U must be non-empty");
  if (*effective_set.begin() < 1 || *effective_set.rbegin() > T) {
    throw InvalidArgument("iterref: effective set must lie in [1, T]");
  }
  if (jump < 1) throw InvalidArgument("iterref: jump must be >= 1");
}

std::set<int> every_nth_step(int T, int stride) {
  if (stride < 1) throw InvalidArgument("every_nth_step: stride must be >= 1");
  std::set<int> steps;
  for (int t = T - stride; t >= 1; t -= stride) steps.insert(t);
  if (steps.empty()) steps.insert(std::max(1, T - 1));
  return steps;
}

int default_jump(int T) { return std::max(1, (T + 9) / 10); }

KernelDraw kernel_propose(const Denoiser& d, const RewardSpec& spec, const Sequence& x_t, int t,
                          int jump, RngStream& rng, NfeLedger& ledger) {
  const int T = d.T();
  if (t < 1 || t >= T) throw InvalidArgument("kernel_propose: need 1 <= t < T");
  if (jump < 1) throw InvalidArgument("kernel_propose: jump must be >= 1");
  const int waypoint_level = std::min(t + jump, T);
  KernelDraw draw{x_t, forward_noise(d, x_t, t, waypoint_level, rng), {}};
  draw.proposal = reverse_step(d, draw.noised_waypoint, waypoint_level, t, rng);
  ledger.charge_denoiser();
  draw.reward = intermediate_reward(spec, d, draw.proposal, t, rng);
  ledger.charge_reward(draw.reward.evals_used);
  return draw;
}

double closed_form_acceptance(double reward_old, double reward_new, double alpha) {
  if (reward_new >= reward_old) return 1.0;
  return std::exp((reward_new - reward_old) / alpha);
}

RefineOutcome mtm_refine_step(const Denoiser& d, const RewardSpec& spec, MtmChain& chain, int t,
                              const IterRefConfig& cfg, RngStream& rng, NfeLedger& ledger) {
  if (cfg.N == 0) throw InvalidArgument("mtm_refine_step: N must be >= 1");
  if (!chain.reward) {
    chain.reward = intermediate_reward(spec, d, chain.state, t, rng);
    ledger.charge_reward(chain.reward->evals_used);
  }
  RefineOutcome outcome;
  outcome.reward_before = chain.reward->value;
  if (chain.pool.empty() || !cfg.pool_reuse) {
    chain.pool.clear();
    for (std::size_t i = 0; i < cfg.N; ++i) {
      chain.pool.push_back(kernel_propose(d, spec, chain.state, t, cfg.jump, rng, ledger));
    }
    outcome.pool_refilled = true;
  }
  // Forward weights are all equal, so selection is uniform over the pool.
  outcome.candidate_index = static_cast<std::size_t>(rng.below(chain.pool.size()));
  const KernelDraw& candidate = chain.pool[outcome.candidate_index];
  outcome.acceptance_probability =
      closed_form_acceptance(chain.reward->value, candidate.reward.value, spec.alpha);
  outcome.accepted = rng.bernoulli(outcome.acceptance_probability);
  if (outcome.accepted) {
    chain.state = candidate.proposal;
    chain.reward = candidate.reward;
    chain.pool.clear();
  } else if (cfg.pool_reuse) {
    chain.pool.erase(chain.pool.begin() + static_cast<std::ptrdiff_t>(outcome.candidate_index));
  } else {
    chain.pool.clear();
  }
  outcome.reward_after = chain.reward->value;
  return outcome;
}

IterRefResult iterref(const Denoiser& d, const RewardSpec& spec, const IterRefConfig& cfg,
                      RngStream& rng) {
  const int T = d.T();
  cfg.validate(T);
  IterRefResult out{Sequence::all_mask(d.length(), d.vocab()), {}, {}, {}};
  const std::uint64_t refill_cost = cfg.N * (1 + spec.mode.cost());
  bool capped = false;
  for (int t = T; t >= 1; --t) {
    if (cfg.effective_set.contains(t)) {
      if (t == T) {
        out.notes.push_back("iterref: refinement at t=T skipped (the all-mask state is fixed)");
      } else {
        MtmChain chain{out.sample, std::nullopt, {}};
        // Under a cap, this level may spend an even share of what is left
        // after the remaining reverse steps, split over the refined levels
        // still ahead (this one included).
        std::uint64_t allowance = 0;
        const std::uint64_t level_start = out.ledger.total();
        if (cfg.nfe_cap) {
          const std::uint64_t reserved = out.ledger.total() + static_cast<std::uint64_t>(t);
          const auto levels_left = static_cast<std::uint64_t>(
              std::distance(cfg.effective_set.begin(), cfg.effective_set.upper_bound(t)));
          allowance = reserved < *cfg.nfe_cap ? (*cfg.nfe_cap - reserved) / levels_left : 0;
        }
        for (std::size_t i = 0; i < cfg.k; ++i) {
          if (cfg.nfe_cap) {
            std::uint64_t need = 0;
            if (!chain.reward) need += spec.mode.cost();
            if (chain.pool.empty() || !cfg.pool_reuse) need += refill_cost;
            if (out.ledger.total() - level_start + need > allowance) {
              capped = true;
              break;
            }
          }
          const RefineOutcome o = mtm_refine_step(d, spec, chain, t, cfg, rng, out.ledger);
          out.trace.push_back({t, i, o.candidate_index, o.accepted, o.pool_refilled,
                               o.reward_before, o.reward_after, out.ledger.denoiser_evals(),
                               out.ledger.reward_evals()});
        }
        out.sample = chain.state;
      }
    }
    out.sample = reverse_step(d, out.sample, t, t - 1, rng);
    out.ledger.charge_denoiser();
  }
  if (capped) out.notes.push_back("iterref: refinement truncated by the NFE cap");
  return out;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& trace) {
  out << "t,iter,candidate_idx,accepted,reward_before,reward_after,denoiser_evals,reward_evals\n";
  const auto old_precision = out.precision(17);
  for (const auto& r : trace) {
    out << r.t << ',' << r.iter << ',' << r.candidate_idx << ',' << (r.accepted ? 1 : 0) << ','
        << r.reward_before << ',' << r.reward_after << ',' << r.denoiser_evals << ','
        << r.reward_evals << '\n';
  }
  out.precision(old_precision);
}

double balancing_function(const MtmTables& tables, StateIndex x, StateIndex y, double alpha) {
  const auto xi = static_cast<Eigen::Index>(x);
  const auto yi = static_cast<Eigen::Index>(y);
  return 1.0 / (tables.marginal[x] * tables.kernel(xi, yi) *
                std::exp((tables.reward[x] + tables.reward[y]) / alpha));
}

GenericMtmResult generic_mtm_step(const Denoiser& d, const RewardSpec& spec,
                                  const MtmTables& tables, const Sequence& x_t, std::size_t N,
                                  RngStream& rng) {
  if (N == 0) throw InvalidArgument("generic_mtm_step: N must be >= 1");
  const Vocab& vocab = d.vocab();
  const int t = tables.t;
  NfeLedger scratch;
  const StateIndex x = encode(x_t, vocab);
  // w(a -> b) = p*(a) K(a, b) lambda(a, b)
  auto weight = [&](StateIndex a, StateIndex b) {
    const double k_ab = tables.kernel(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    if (k_ab == 0.0) return 0.0;
    return tables.target[a] * k_ab * balancing_function(tables, a, b, spec.alpha);
  };

  GenericMtmResult res{x_t, false, {}, {}, 0.0, 0.0, 0.0};
  std::vector<Sequence> trials;
  for (std::size_t j = 0; j < N; ++j) {
    trials.push_back(kernel_propose(d, spec, x_t, t, tables.jump, rng, scratch).proposal);
    res.forward_weights.push_back(weight(encode(trials.back(), vocab), x));
  }
  const double forward_sum =
      std::accumulate(res.forward_weights.begin(), res.forward_weights.end(), 0.0);
  for (double w : res.forward_weights) res.selection_probs.push_back(w / forward_sum);
  const auto [lo, hi] = std::minmax_element(res.forward_weights.begin(), res.forward_weights.end());
  res.forward_weight_spread = (*hi - *lo) / (forward_sum / static_cast<double>(N));

  std::size_t pick = rng.categorical(res.forward_weights);
  if (pick >= N) pick = static_cast<std::size_t>(rng.below(N));
  const Sequence& y_t = trials[pick];
  const StateIndex y = encode(y_t, vocab);

  double backward_sum = weight(x, y);  // x''_N := x
  for (std::size_t j = 0; j + 1 < N; ++j) {
    const Sequence aux = kernel_propose(d, spec, y_t, t, tables.jump, rng, scratch).proposal;
    backward_sum += weight(encode(aux, vocab), y);
  }
  res.acceptance_ratio = std::min(1.0, forward_sum / backward_sum);
  res.closed_form_beta = closed_form_acceptance(tables.reward[x], tables.reward[y], spec.alpha);
  res.accepted = rng.bernoulli(res.acceptance_ratio);
  if (res.accepted) res.next = y_t;
  return res;
}

namespace cost {

namespace {
NfeLedger make(std::uint64_t den, std::uint64_t rew) {
  NfeLedger l;
  l.charge_denoiser(den);
  l.charge_reward(rew);
  return l;
}
}  // namespace

NfeLedger ancestral(int T) { return make(static_cast<std::uint64_t>(T), 0); }

NfeLedger best_of_n(int T, std::size_t n) {
  if (n == 1) return ancestral(T);
  return make(static_cast<std::uint64_t>(T) * n, n);
}

NfeLedger svdd(int T, std::size_t n, const RewardMode& mode) {
  if (n == 1) return ancestral(T);
  const auto steps = static_cast<std::uint64_t>(T);
  return make(steps * n, n * ((steps - 1) * mode.cost() + 1));
}

NfeLedger fk_steering(int T, std::size_t n, std::size_t resample_every, const RewardMode& mode) {
  if (n == 1) return ancestral(T);
  const auto events = static_cast<std::uint64_t>(T - 1) / resample_every;
  return make(static_cast<std::uint64_t>(T) * n, n * events * mode.cost() + n);
}

NfeLedger sop_discrete(const SopConfig& cfg, const Schedule& schedule, const RewardMode& mode) {
  const SopPlan plan = sop_plan(cfg, schedule);
  std::uint64_t den = cfg.n * static_cast<std::uint64_t>(schedule.T() - plan.start_level);
  std::uint64_t rew = plan.rounds.empty() ? cfg.n : 0;
  for (const auto& [lifted, landing] : plan.rounds) {
    den += cfg.n * cfg.m * static_cast<std::uint64_t>(lifted - landing);
    rew += cfg.n * cfg.m * mode.cost_at(landing);
  }
  return make(den, rew);
}

NfeLedger iterref_replay(int T, const IterRefConfig& cfg, const RewardMode& mode,
                         const std::vector<TraceRecord>& trace) {
  std::uint64_t refills = 0;
  std::uint64_t entries = 0;
  std::size_t pool = 0;
  int current_t = -1;
  for (const auto& r : trace) {
    if (r.t != current_t || r.iter == 0) {
      current_t = r.t;
      ++entries;
      pool = 0;
    }
    if (pool == 0 || !cfg.pool_reuse) {
      ++refills;
      pool = cfg.N;
    }
    if (r.accepted || !cfg.pool_reuse) {
      pool = 0;
    } else {
      --pool;
    }
  }
  return make(static_cast<std::uint64_t>(T) + refills * cfg.N,
              mode.cost() * (entries + refills * cfg.N));
}

NfeLedger iterref_worst_case(int T, const IterRefConfig& cfg, const RewardMode& mode) {
  std::uint64_t refined = 0;
  for (int t : cfg.effective_set) refined += (t >= 1 && t < T) ? 1 : 0;
  return make(static_cast<std::uint64_t>(T) + refined * cfg.k * cfg.N,
              mode.cost() * refined * (1 + cfg.k * cfg.N));
}

}  // namespace cost

}  // namespace maskref
