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
#include <span>
#include <vector>

namespace maskref::stats {

double mean(std::span<const double> xs);
// Standard error of the mean with the n - 1 variance; 0 for fewer than two samples.
double standard_error(std::span<const double> xs);

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double dof = 0.0;
};

// Two-sample chi-squared homogeneity test on binned counts of possibly
// different totals. Bins empty in both samples are dropped.
TestResult chi_squared_two_sample(std::span<const std::uint64_t> a,
                                  std::span<const std::uint64_t> b);

// One-sided Mann-Whitney U test of H1: `a` tends to exceed `b`. Normal
// approximation with tie and continuity corrections; statistic is z.
TestResult mann_whitney_greater(std::span<const double> a, std::span<const double> b);

}  // namespace maskref::stats
