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

#include "maskref/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>

#include "maskref/error.hpp"

namespace maskref::oracle {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

StateTable normalized_from_log(int t, std::size_t length, int vocab_size,
                               const std::vector<double>& log_w) {
  double hi = kNegInf;
  for (double v : log_w) hi = std::max(hi, v);
  if (!std::isfinite(hi)) throw ZeroSupport("target table has no positive mass");
  StateTable table{t, length, vocab_size, std::vector<double>(log_w.size(), 0.0)};
  double total = 0.0;
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    table.probs[i] = std::isfinite(log_w[i]) ? std::exp(log_w[i] - hi) : 0.0;
    total += table.probs[i];
  }
  for (auto& p : table.probs) p /= total;
  return table;
}

}  // namespace

double StateTable::total() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }

StateTable exact_marginal(const DataDistribution& data, const Schedule& schedule, int t,
                          StateIndex cap) {
  const std::size_t L = data.length();
  const Vocab& vocab = data.vocab();
  const StateIndex n = state_space_size(L, vocab.size(), cap);
  const double a = schedule.alpha(t);
  StateTable table{t, L, vocab.size(), std::vector<double>(n, 0.0)};
  std::vector<double> weight_by_masks(L + 1);
  for (std::size_t m = 0; m <= L; ++m) {
    weight_by_masks[m] = std::pow(1.0 - a, static_cast<int>(m)) *
                         std::pow(a, static_cast<int>(L - m));
  }
  for (StateIndex idx = 0; idx < data.terminal_count(); ++idx) {
    const double p0 = data.probs()[idx];
    if (p0 == 0.0) continue;
    const Sequence x0 = decode_terminal(idx, L, vocab);
    for (std::uint64_t subset = 0; subset < (std::uint64_t{1} << L); ++subset) {
      Sequence x = x0;
      std::size_t masked = 0;
      for (std::size_t i = 0; i < L; ++i) {
        if ((subset >> i) & 1U) {
          x[i] = vocab.mask_id();
          ++masked;
        }
      }
      table.probs[encode(x, vocab)] += p0 * weight_by_masks[masked];
    }
  }
  const double total = table.total();
  for (auto& p : table.probs) p /= total;
  return table;
}

std::vector<double> exact_soft_values(const Denoiser& d, const RewardSpec& spec,
                                      StateIndex cap) {
  const Vocab& vocab = d.vocab();
  const StateIndex n = state_space_size(d.length(), vocab.size(), cap);
  std::vector<double> values(n, kNegInf);
  std::vector<double> terms;
  for (StateIndex idx = 0; idx < n; ++idx) {
    const Sequence x = decode(idx, d.length(), vocab);
    if (is_terminal(x, vocab)) {
      values[idx] = spec.terminal(x, vocab);
      continue;
    }
    X0Posterior post;
    try {
      post = d.x0_posterior(x);
    } catch (const ZeroSupport&) {
      continue;
    }
    terms.clear();
    for (const auto& [x0_index, p] : post.support) {
      terms.push_back(std::log(p) +
                      spec.terminal(decode_terminal(x0_index, d.length(), vocab), vocab) /
                          spec.alpha);
    }
    values[idx] = spec.alpha * log_sum_exp(terms);
  }
  return values;
}

namespace {

StateTable tilt(const StateTable& marginal, const std::vector<double>& soft_values, double alpha) {
  std::vector<double> log_w(marginal.probs.size(), kNegInf);
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    if (marginal.probs[i] > 0.0 && std::isfinite(soft_values[i])) {
      log_w[i] = std::log(marginal.probs[i]) + soft_values[i] / alpha;
    }
  }
  return normalized_from_log(marginal.t, marginal.length, marginal.vocab_size, log_w);
}

}  // namespace

StateTable exact_target(const DataDistribution& data, const Schedule& schedule,
                        const RewardSpec& spec, int t, StateIndex cap) {
  const StateTable marginal = exact_marginal(data, schedule, t, cap);
  const Denoiser exact(DenoiserKind::kExactPosterior,
                       std::make_shared<const DataDistribution>(data), schedule);
  return tilt(marginal, exact_soft_values(exact, spec, cap), spec.alpha);
}

Matrix exact_optimal_kernel(const Denoiser& d, const RewardSpec& spec, int t,
                            StateIndex matrix_cap) {
  Matrix K = reverse_kernel_exact(d, t, t - 1, matrix_cap);
  const std::vector<double> r = exact_soft_values(d, spec, matrix_cap);
  for (Eigen::Index row = 0; row < K.rows(); ++row) {
    double hi = kNegInf;
    for (Eigen::Index col = 0; col < K.cols(); ++col) {
      if (K(row, col) > 0.0) hi = std::max(hi, r[static_cast<std::size_t>(col)]);
    }
    double total = 0.0;
    for (Eigen::Index col = 0; col < K.cols(); ++col) {
      if (K(row, col) > 0.0) {
        K(row, col) *= std::exp((r[static_cast<std::size_t>(col)] - hi) / spec.alpha);
        total += K(row, col);
      }
    }
    K.row(row) /= total;
  }
  return K;
}

Matrix exact_refine_kernel(const Denoiser& d, int t, int jump, StateIndex matrix_cap) {
  const int T = d.T();
  if (t < 1 || t >= T) throw InvalidArgument("exact_refine_kernel: need 1 <= t < T");
  if (jump < 1) throw InvalidArgument("exact_refine_kernel: jump must be >= 1");
  const int waypoint = std::min(t + jump, T);
  const Matrix Q = forward_noise_matrix(d.length(), d.vocab(), d.schedule(), t, waypoint,
                                        matrix_cap);
  const Matrix R = reverse_kernel_exact(d, waypoint, t, matrix_cap);
  return Q * R;
}

Matrix exact_chain_kernel(const Matrix& kernel, const std::vector<double>& soft_values,
                          double alpha) {
  Matrix A = Matrix::Zero(kernel.rows(), kernel.cols());
  for (Eigen::Index x = 0; x < kernel.rows(); ++x) {
    double moved = 0.0;
    for (Eigen::Index y = 0; y < kernel.cols(); ++y) {
      if (y == x || kernel(x, y) == 0.0) continue;
      const double beta = closed_form_acceptance(soft_values[static_cast<std::size_t>(x)],
                                                 soft_values[static_cast<std::size_t>(y)], alpha);
      A(x, y) = kernel(x, y) * beta;
      moved += A(x, y);
    }
    A(x, x) = 1.0 - moved;
  }
  return A;
}

MtmTables mtm_tables(const Denoiser& d, const RewardSpec& spec, int t, int jump,
                     StateIndex matrix_cap) {
  MtmTables tables;
  tables.t = t;
  tables.jump = jump;
  tables.kernel = exact_refine_kernel(d, t, jump, matrix_cap);
  const StateTable marginal = exact_marginal(d.data(), d.schedule(), t, matrix_cap);
  tables.marginal = marginal.probs;
  tables.reward = exact_soft_values(d, spec, matrix_cap);
  tables.target = tilt(marginal, tables.reward, spec.alpha).probs;
  return tables;
}

BalanceReport balance_audit(const Denoiser& d, const RewardSpec& spec, int t, int jump,
                            StateIndex matrix_cap) {
  const MtmTables tables = mtm_tables(d, spec, t, jump, matrix_cap);
  const Matrix& K = tables.kernel;
  const auto& p = tables.marginal;
  const auto& target = tables.target;
  const auto n = static_cast<std::size_t>(K.rows());
  const Matrix A = exact_chain_kernel(K, tables.reward, spec.alpha);
  BalanceReport report;
  for (std::size_t x = 0; x < n; ++x) {
    const auto xi = static_cast<Eigen::Index>(x);
    double w_lo = std::numeric_limits<double>::infinity();
    double w_hi = 0.0;
    double w_sum = 0.0;
    std::size_t w_count = 0;
    for (std::size_t y = 0; y < n; ++y) {
      const auto yi = static_cast<Eigen::Index>(y);
      report.max_kernel_reversibility_residual =
          std::max(report.max_kernel_reversibility_residual,
                   std::abs(p[x] * K(xi, yi) - p[y] * K(yi, xi)));
      report.max_detailed_balance_residual =
          std::max(report.max_detailed_balance_residual,
                   std::abs(target[x] * A(xi, yi) - target[y] * A(yi, xi)));
      if (p[x] == 0.0 || p[y] == 0.0 || K(xi, yi) == 0.0) continue;
      const double lxy = balancing_function(tables, x, y, spec.alpha);
      const double lyx = K(yi, xi) > 0.0 ? balancing_function(tables, y, x, spec.alpha)
                                         : std::numeric_limits<double>::infinity();
      report.max_lambda_asymmetry =
          std::max(report.max_lambda_asymmetry, std::abs(lxy - lyx) / lxy);
      // Forward weight of candidate y proposed from x: p*(y) K(y, x) lambda(y, x).
      const double w = K(yi, xi) > 0.0 ? target[y] * K(yi, xi) * lyx : 0.0;
      w_lo = std::min(w_lo, w);
      w_hi = std::max(w_hi, w);
      w_sum += w;
      ++w_count;
    }
    if (w_count > 0 && w_sum > 0.0) {
      report.weight_spread =
          std::max(report.weight_spread, (w_hi - w_lo) / (w_sum / static_cast<double>(w_count)));
    } else if (w_count > 0) {
      report.weight_spread = std::numeric_limits<double>::infinity();
    }
  }
  Eigen::RowVectorXd pi(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) pi(static_cast<Eigen::Index>(i)) = target[i];
  report.stationarity_residual = (pi * A - pi).cwiseAbs().maxCoeff();
  return report;
}

double push_through_residual(const StateTable& from, const Matrix& kernel, const StateTable& to) {
  const auto n = static_cast<Eigen::Index>(from.probs.size());
  if (kernel.rows() != n || kernel.cols() != n || static_cast<Eigen::Index>(to.probs.size()) != n) {
    throw InvalidArgument("push_through_residual: dimension mismatch");
  }
  Eigen::RowVectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = from.probs[static_cast<std::size_t>(i)];
  const Eigen::RowVectorXd pushed = v * kernel;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    worst = std::max(worst, std::abs(pushed(i) - to.probs[static_cast<std::size_t>(i)]));
  }
  return worst;
}

double tv_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InvalidArgument("tv_distance: size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return 0.5 * sum;
}

double tv_distance(const StateTable& a, const StateTable& b) {
  if (a.t != b.t || a.length != b.length || a.vocab_size != b.vocab_size) {
    throw InvalidArgument("tv_distance: tables belong to different instances or levels");
  }
  return tv_distance(a.probs, b.probs);
}

std::vector<ConvergencePoint> chain_convergence(const Denoiser& d, const RewardSpec& spec, int t,
                                                const IterRefConfig& cfg, std::size_t chains,
                                                std::size_t iters,
                                                const std::vector<std::size_t>& checkpoints,
                                                const RngStream& rng, unsigned workers) {
  if (chains == 0) throw InvalidArgument("chain_convergence: need at least one chain");
  const Vocab& vocab = d.vocab();
  const StateTable start = exact_marginal(d.data(), d.schedule(), t);
  const StateTable target = exact_target(d.data(), d.schedule(), spec, t);
  std::vector<std::size_t> marks{0};
  for (std::size_t c : checkpoints) {
    if (c > iters) throw InvalidArgument("chain_convergence: checkpoint beyond iteration count");
    if (c > marks.back()) marks.push_back(c);
  }
  // states[c * marks.size() + j] = state index of chain c at marks[j]
  std::vector<StateIndex> states(chains * marks.size());
  auto run_block = [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      RngStream chain_rng = rng.split(c);
      const std::size_t s0 = chain_rng.categorical(start.probs);
      MtmChain chain{decode(s0, d.length(), vocab), std::nullopt, {}};
      NfeLedger ledger;
      std::size_t j = 0;
      for (std::size_t it = 0; it <= iters; ++it) {
        while (j < marks.size() && marks[j] == it) {
          states[c * marks.size() + j] = encode(chain.state, vocab);
          ++j;
        }
        if (it == iters || j == marks.size()) break;
        mtm_refine_step(d, spec, chain, t, cfg, chain_rng, ledger);
      }
    }
  };
  workers = std::max(1U, std::min<unsigned>(workers, static_cast<unsigned>(chains)));
  if (workers == 1) {
    run_block(0, chains);
  } else {
    std::vector<std::thread> pool;
    const std::size_t per = (chains + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t begin = w * per;
      const std::size_t end = std::min(chains, begin + per);
      if (begin < end) pool.emplace_back(run_block, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  std::vector<ConvergencePoint> series;
  for (std::size_t j = 0; j < marks.size(); ++j) {
    std::vector<double> hist(target.probs.size(), 0.0);
    for (std::size_t c = 0; c < chains; ++c) hist[states[c * marks.size() + j]] += 1.0;
    for (auto& h : hist) h /= static_cast<double>(chains);
    series.push_back({marks[j], tv_distance(hist, target.probs)});
  }
  return series;
}

void write_table_csv(std::ostream& out, const StateTable& table) {
  out << "state_index,probability\n";
  const auto old_precision = out.precision(17);
  for (std::size_t i = 0; i < table.probs.size(); ++i) out << i << ',' << table.probs[i] << '\n';
  out.precision(old_precision);
}

void write_matrix_csv(std::ostream& out, const Matrix& m) {
  out << "row,col,value\n";
  const auto old_precision = out.precision(17);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (m(r, c) != 0.0) out << r << ',' << c << ',' << m(r, c) << '\n';
    }
  }
  out.precision(old_precision);
}

void write_report(std::ostream& out, const BalanceReport& report) {
  const auto old_precision = out.precision(6);
  const auto old_flags = out.flags();
  out << std::scientific;
  out << "max_lambda_asymmetry: " << report.max_lambda_asymmetry << '\n'
      << "max_kernel_reversibility_residual: " << report.max_kernel_reversibility_residual << '\n'
      << "max_detailed_balance_residual: " << report.max_detailed_balance_residual << '\n'
      << "weight_spread: " << report.weight_spread << '\n'
      << "stationarity_residual: " << report.stationarity_residual << '\n';
  out.flags(old_flags);
  out.precision(old_precision);
}

}  // namespace maskref::oracle
