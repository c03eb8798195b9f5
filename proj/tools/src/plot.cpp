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

#include "maskref_cli/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include "maskref/error.hpp"

namespace maskref::cli {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 150.0;
constexpr double kTop = 30.0;
constexpr double kBottom = 50.0;

const char* const kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                               "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string render_svg(const std::vector<SummaryRow>& summary) {
  if (summary.empty()) throw InvalidArgument("plot: nothing to draw");
  double x_lo = std::numeric_limits<double>::infinity();
  double x_hi = -x_lo;
  double y_lo = x_lo;
  double y_hi = -x_lo;
  std::vector<std::string> order;
  std::map<std::string, std::vector<const SummaryRow*>> lines;
  for (const auto& s : summary) {
    if (!(s.budget > 0.0)) throw InvalidArgument("plot: budgets must be positive");
    const double x = std::log2(s.budget);
    x_lo = std::min(x_lo, x);
    x_hi = std::max(x_hi, x);
    y_lo = std::min(y_lo, s.mean - s.stderr_);
    y_hi = std::max(y_hi, s.mean + s.stderr_);
    if (!lines.contains(s.sampler)) order.push_back(s.sampler);
    lines[s.sampler].push_back(&s);
  }
  if (x_hi - x_lo < 1e-12) {
    x_lo -= 0.5;
    x_hi += 0.5;
  }
  if (y_hi - y_lo < 1e-12) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  const double pad = 0.05 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double y) { return kTop + (y_hi - y) / (y_hi - y_lo) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
         num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(kLeft + pw) +
         "\" y2=\"" + num(kTop + ph) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) +
         "\" y2=\"" + num(kTop + ph) + "\" stroke=\"black\"/>\n";
  for (int i = static_cast<int>(std::ceil(x_lo - 1e-9)); i <= static_cast<int>(std::floor(x_hi + 1e-9)); ++i) {
    const double x = px(i);
    svg += "<line x1=\"" + num(x) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(x) + "\" y2=\"" +
           num(kTop + ph + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(x) + "\" y=\"" + num(kTop + ph + 18) +
           "\" text-anchor=\"middle\">" + format_double(std::exp2(i)) + "x</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double y = y_lo + (y_hi - y_lo) * i / 4.0;
    svg += "<line x1=\"" + num(kLeft - 5) + "\" y1=\"" + num(py(y)) + "\" x2=\"" + num(kLeft) +
           "\" y2=\"" + num(py(y)) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(py(y) + 4) + "\" text-anchor=\"end\">" +
           num(y) + "</text>\n";
  }
  svg += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 10) +
         "\" text-anchor=\"middle\">NFE budget (multiples of one ancestral pass, log2 scale)</text>\n";
  svg += "<text x=\"15\" y=\"" + num(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 15 " +
         num(kTop + ph / 2) + ")\">mean terminal reward</text>\n";
  for (std::size_t li = 0; li < order.size(); ++li) {
    const char* color = kColors[li % (sizeof(kColors) / sizeof(kColors[0]))];
    auto pts = lines[order[li]];
    std::stable_sort(pts.begin(), pts.end(),
                     [](const SummaryRow* a, const SummaryRow* b) { return a->budget < b->budget; });
    std::string poly;
    for (const SummaryRow* p : pts) {
      const double x = px(std::log2(p->budget));
      poly += (poly.empty() ? "" : " ") + num(x) + "," + num(py(p->mean));
      svg += "<line x1=\"" + num(x) + "\" y1=\"" + num(py(p->mean - p->stderr_)) + "\" x2=\"" +
             num(x) + "\" y2=\"" + num(py(p->mean + p->stderr_)) + "\" stroke=\"" + color + "\"/>\n";
      svg += "<circle cx=\"" + num(x) + "\" cy=\"" + num(py(p->mean)) + "\" r=\"3\" fill=\"" +
             color + "\"/>\n";
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" +
           poly + "\"/>\n";
    const double ly = kTop + 14.0 * static_cast<double>(li + 1);
    svg += "<line x1=\"" + num(kLeft + pw + 15) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" +
           num(kLeft + pw + 35) + "\" y2=\"" + num(ly - 4) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + num(kLeft + pw + 40) + "\" y=\"" + num(ly) + "\">" + order[li] + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void plot_csv(const std::string& csv_path, const std::string& svg_path) {
  std::ifstream in(csv_path);
  if (!in) throw InvalidArgument("plot: cannot open " + csv_path);
  const std::vector<ResultRow> rows = read_rows_csv(in);
  if (rows.empty()) throw InvalidArgument("plot: " + csv_path + " has no rows");
  const std::string svg = render_svg(summarize(rows));
  std::ofstream out(svg_path, std::ios::binary);
  if (!out) throw InvalidArgument("plot: cannot write " + svg_path);
  out << svg;
}

}  // namespace maskref::cli
