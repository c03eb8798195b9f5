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

#include "maskref/model.hpp"
#include "maskref/reward.hpp"

namespace maskref::cli {

struct InstanceConfig {
  std::size_t length = 6;
  int vocab = 4;
  int T = 24;
  std::string schedule = "linear";  // linear | cosine | custom (uses alphas)
  std::vector<double> alphas;       // only for schedule = custom
  std::string data = "markov";      // uniform | random | markov | pattern | file
  std::uint64_t data_seed = 1;
  double concentration = 1.0;
  double stickiness = 0.7;
  std::vector<std::string> patterns;
  std::vector<double> pattern_weights;
  double epsilon = 0.05;
  std::string data_file;
  std::string denoiser = "meanfield";
};

struct RewardConfig {
  std::string name = "pattern:abcdab";
  double alpha = 0.1;
  std::string mode = "x0pred";
};

struct SamplerSettings {
  std::size_t fk_resample_every = 4;
  std::size_t sop_m = 2;
  double sop_remask_fraction = 0.78;
  int sop_denoise_levels = 0;
  int sop_start_level = -1;
  std::size_t iterref_N = 4;
  std::size_t iterref_k = 4;
  int iterref_jump = 0;  // 0 = ceil(T / 10)
  bool iterref_pool_reuse = true;
  // How many levels U gets under a budget: "worst" assumes a fresh pool on
  // every iteration; "reuse" assumes every pool is consumed before a refill,
  // with the NFE cap enforcing the budget.
  std::string iterref_sizing = "reuse";
};

struct TimestepStudyConfig {
  std::vector<double> fractions{0.9, 0.7, 0.5, 0.3, 0.1};
  std::size_t k = 40;
  std::size_t N = 4;
  std::size_t evenly_steps = 8;
};

struct KnStudyConfig {
  std::vector<std::pair<std::size_t, std::size_t>> pairs{{1, 32}, {2, 16}, {4, 8},
                                                         {8, 4},  {16, 2}, {32, 1}};
  int stride = 4;  // refine every stride-th step
};

struct ExperimentConfig {
  InstanceConfig instance;
  RewardConfig reward;
  SamplerSettings settings;
  TimestepStudyConfig timesteps;
  KnStudyConfig kn;
  std::vector<std::string> samplers{"bon", "svdd", "fk", "sop", "iterref"};
  std::vector<double> budgets{1, 2, 4, 8, 16, 32};
  std::size_t replicates = 20;
  std::uint64_t seed = 0;
  std::string output = "out";
  unsigned workers = 1;
  bool wall_time = false;  // off keeps CSVs byte-identical across reruns

  void validate() const;
};

// Flat sectioned key-value text (INI). Unknown sections or keys are errors.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);
// Every key, fixed order, shortest round-trip numbers.
void write_config(std::ostream& out, const ExperimentConfig& cfg);

// The built instance: data, schedule, denoiser and reward.
struct Instance {
  std::shared_ptr<const DataDistribution> data;
  Schedule schedule;
  Denoiser denoiser;
  RewardSpec reward;
};

Instance build_instance(const ExperimentConfig& cfg);

const std::vector<std::string>& known_samplers();

// Shortest decimal that parses back to the same double.
std::string format_double(double v);

}  // namespace maskref::cli
