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

#include <iosfwd>
#include <string>
#include <vector>

#include "maskref/oracle.hpp"
#include "maskref_cli/config.hpp"

namespace maskref::cli {

struct VerifyCheck {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool passed = false;
  bool informational = false;  // reported, never fails the run
};

struct VerifyOptions {
  int jump = 0;  // 0 = ceil(T / 10)
  std::size_t acceptance_cases = 1000;
  std::size_t chains = 20000;
  std::size_t chain_iters = 200;
  double tv_threshold = 0.05;
};

struct VerifyReport {
  oracle::BalanceReport balance;  // worst case over all audited levels
  std::vector<VerifyCheck> checks;
  bool all_passed() const;
};

// Full oracle suite on the configured instance. Balance, acceptance and
// convergence checks are informational under the mean-field denoiser; the
// marginal and induction checks always use the exact posterior.
VerifyReport verify_instance(const ExperimentConfig& cfg, const VerifyOptions& opts);

void print_verify(std::ostream& out, const VerifyReport& report);

}  // namespace maskref::cli
