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

#include "maskref/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "maskref/error.hpp"

namespace maskref::stats {

double mean(std::span<const double> xs) {
  if (xs.empty()) throw InvalidArgument("mean of an empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double standard_error(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  const auto n = static_cast<double>(xs.size());
  return std::sqrt(ss / (n - 1.0) / n);
}

TestResult chi_squared_two_sample(std::span<const std::uint64_t> a,
                                  std::span<const std::uint64_t> b) {
  if (a.size() != b.size()) throw InvalidArgument("chi-squared: bin count mismatch");
  const double na = static_cast<double>(std::accumulate(a.begin(), a.end(), std::uint64_t{0}));
  const double nb = static_cast<double>(std::accumulate(b.begin(), b.end(), std::uint64_t{0}));
  if (na == 0.0 || nb == 0.0) throw InvalidArgument("chi-squared: empty sample");
  const double ka = std::sqrt(nb / na);
  const double kb = std::sqrt(na / nb);
  TestResult res;
  std::size_t bins = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ai = static_cast<double>(a[i]);
    const double bi = static_cast<double>(b[i]);
    if (ai + bi == 0.0) continue;
    ++bins;
    const double diff = ka * ai - kb * bi;
    res.statistic += diff * diff / (ai + bi);
  }
  if (bins < 2) return res;
  res.dof = static_cast<double>(bins - 1);
  res.p_value = boost::math::cdf(
      boost::math::complement(boost::math::chi_squared(res.dof), res.statistic));
  return res;
}

TestResult mann_whitney_greater(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("Mann-Whitney: empty sample");
  struct Item {
    double value;
    bool from_a;
  };
  std::vector<Item> items;
  items.reserve(a.size() + b.size());
  for (double x : a) items.push_back({x, true});
  for (double x : b) items.push_back({x, false});
  std::sort(items.begin(), items.end(),
            [](const Item& l, const Item& r) { return l.value < r.value; });
  const auto n = static_cast<double>(items.size());
  double rank_sum_a = 0.0;
  double tie_term = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].value == items[i].value) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    const auto run = static_cast<double>(j - i);
    tie_term += run * run * run - run;
    for (std::size_t q = i; q < j; ++q) rank_sum_a += items[q].from_a ? avg_rank : 0.0;
    i = j;
  }
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  const double u = rank_sum_a - na * (na + 1.0) / 2.0;
  const double mu = na * nb / 2.0;
  const double var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  TestResult res;
  if (var <= 0.0) return res;  // every value tied
  res.statistic = (u - mu - 0.5) / std::sqrt(var);
  res.p_value = boost::math::cdf(boost::math::complement(boost::math::normal(), res.statistic));
  return res;
}

}  // namespace maskref::stats
