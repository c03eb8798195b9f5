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

#include <string>
#include <vector>

#include "maskref_cli/experiment.hpp"

namespace maskref::cli {

// Reward-vs-budget SVG: one polyline per sampler, x = log2(budget), y = mean
// terminal reward with stderr whiskers. Output bytes depend only on the input.
std::string render_svg(const std::vector<SummaryRow>& summary);

// Reads a results CSV and writes the SVG. Throws InvalidArgument on a schema
// mismatch or an empty CSV, in which case no file is written.
void plot_csv(const std::string& csv_path, const std::string& svg_path);

}  // namespace maskref::cli
