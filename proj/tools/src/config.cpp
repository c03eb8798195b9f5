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

#include "maskref_cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "maskref/error.hpp"

namespace maskref::cli {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\"");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\"");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  T value{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw InvalidArgument("config: bad number for " + key + ": '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw InvalidArgument("config: bad boolean for " + key + ": '" + text + "'");
}

std::vector<double> parse_doubles(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) out.push_back(parse_number<double>(key, item));
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::string join(const std::vector<double>& items) {
  std::vector<std::string> s;
  for (double v : items) s.push_back(format_double(v));
  return join(s);
}

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"experiment", {"seed", "replicates", "budgets", "samplers", "output", "workers", "wall_time"}},
      {"instance",
       {"length", "vocab", "T", "schedule", "alphas", "data", "data_seed", "concentration",
        "stickiness", "patterns", "pattern_weights", "epsilon", "data_file", "denoiser"}},
      {"reward", {"name", "alpha", "mode"}},
      {"fk", {"resample_every"}},
      {"sop", {"m", "remask_fraction", "denoise_levels", "start_level"}},
      {"iterref", {"N", "k", "jump", "pool_reuse", "sizing"}},
      {"timesteps", {"fractions", "k", "N", "evenly_steps"}},
      {"kn", {"pairs", "stride"}},
  };
  return keys;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

const std::vector<std::string>& known_samplers() {
  static const std::vector<std::string> names{"ancestral", "bon", "svdd", "fk", "sop", "iterref"};
  return names;
}

void ExperimentConfig::validate() const {
  if (replicates == 0) throw InvalidArgument("config: replicates must be >= 1");
  if (budgets.empty()) throw InvalidArgument("config: at least one budget is required");
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (!(budgets[i] >= 1.0)) {
      throw InvalidArgument("config: budget " + format_double(budgets[i]) +
                            "x is below one ancestral pass");
    }
    if (i > 0 && !(budgets[i] > budgets[i - 1])) {
      throw InvalidArgument("config: budgets must be strictly increasing");
    }
  }
  if (samplers.empty()) throw InvalidArgument("config: at least one sampler is required");
  for (const auto& s : samplers) {
    if (std::find(known_samplers().begin(), known_samplers().end(), s) == known_samplers().end()) {
      throw InvalidArgument("config: unknown sampler '" + s + "'");
    }
  }
  if (workers == 0) throw InvalidArgument("config: workers must be >= 1");
  if (!(reward.alpha > 0.0)) throw InvalidArgument("config: reward.alpha must be > 0");
  if (settings.fk_resample_every == 0) throw InvalidArgument("config: fk.resample_every >= 1");
  if (settings.sop_m == 0) throw InvalidArgument("config: sop.m >= 1");
  if (settings.iterref_N == 0 || settings.iterref_k == 0) {
    throw InvalidArgument("config: iterref.N and iterref.k must be >= 1");
  }
  if (settings.iterref_jump < 0) throw InvalidArgument("config: iterref.jump must be >= 0");
  if (settings.iterref_sizing != "worst" && settings.iterref_sizing != "reuse") {
    throw InvalidArgument("config: iterref.sizing must be worst or reuse");
  }
  for (double f : timesteps.fractions) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw InvalidArgument("config: timestep fraction " + format_double(f) + " outside (0, 1]");
    }
  }
  if (timesteps.k == 0 || timesteps.N == 0 || timesteps.evenly_steps == 0) {
    throw InvalidArgument("config: timesteps.k, N and evenly_steps must be >= 1");
  }
  if (kn.pairs.empty()) throw InvalidArgument("config: kn.pairs must be non-empty");
  if (kn.stride < 1) throw InvalidArgument("config: kn.stride must be >= 1");
}

ExperimentConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    const auto it = schema().find(section);
    if (it == schema().end()) throw InvalidArgument("config: unknown section [" + section + "]");
    if (!body.data().empty()) throw InvalidArgument("config: key outside a section: " + section);
    for (const auto& [key, value] : body) {
      if (!it->second.contains(key)) {
        throw InvalidArgument("config: unknown key " + section + "." + key);
      }
    }
  }
  ExperimentConfig cfg;
  auto get = [&](const std::string& path) -> std::optional<std::string> {
    if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(path, '.'))) return trim(*v);
    return std::nullopt;
  };
  if (auto v = get("experiment.seed")) cfg.seed = parse_number<std::uint64_t>("seed", *v);
  if (auto v = get("experiment.replicates")) {
    cfg.replicates = parse_number<std::size_t>("replicates", *v);
  }
  if (auto v = get("experiment.budgets")) cfg.budgets = parse_doubles("budgets", *v);
  if (auto v = get("experiment.samplers")) cfg.samplers = split_list(*v);
  if (auto v = get("experiment.output")) cfg.output = *v;
  if (auto v = get("experiment.workers")) cfg.workers = parse_number<unsigned>("workers", *v);
  if (auto v = get("experiment.wall_time")) cfg.wall_time = parse_bool("wall_time", *v);

  InstanceConfig& ic = cfg.instance;
  if (auto v = get("instance.length")) ic.length = parse_number<std::size_t>("length", *v);
  if (auto v = get("instance.vocab")) ic.vocab = parse_number<int>("vocab", *v);
  if (auto v = get("instance.T")) ic.T = parse_number<int>("T", *v);
  if (auto v = get("instance.schedule")) ic.schedule = *v;
  if (auto v = get("instance.alphas")) ic.alphas = parse_doubles("alphas", *v);
  if (auto v = get("instance.data")) ic.data = *v;
  if (auto v = get("instance.data_seed")) ic.data_seed = parse_number<std::uint64_t>("data_seed", *v);
  if (auto v = get("instance.concentration")) {
    ic.concentration = parse_number<double>("concentration", *v);
  }
  if (auto v = get("instance.stickiness")) ic.stickiness = parse_number<double>("stickiness", *v);
  if (auto v = get("instance.patterns")) ic.patterns = split_list(*v);
  if (auto v = get("instance.pattern_weights")) {
    ic.pattern_weights = parse_doubles("pattern_weights", *v);
  }
  if (auto v = get("instance.epsilon")) ic.epsilon = parse_number<double>("epsilon", *v);
  if (auto v = get("instance.data_file")) ic.data_file = *v;
  if (auto v = get("instance.denoiser")) ic.denoiser = *v;

  if (auto v = get("reward.name")) cfg.reward.name = *v;
  if (auto v = get("reward.alpha")) cfg.reward.alpha = parse_number<double>("alpha", *v);
  if (auto v = get("reward.mode")) cfg.reward.mode = *v;

  SamplerSettings& s = cfg.settings;
  if (auto v = get("fk.resample_every")) {
    s.fk_resample_every = parse_number<std::size_t>("resample_every", *v);
  }
  if (auto v = get("sop.m")) s.sop_m = parse_number<std::size_t>("sop.m", *v);
  if (auto v = get("sop.remask_fraction")) {
    s.sop_remask_fraction = parse_number<double>("remask_fraction", *v);
  }
  if (auto v = get("sop.denoise_levels")) {
    s.sop_denoise_levels = parse_number<int>("denoise_levels", *v);
  }
  if (auto v = get("sop.start_level")) s.sop_start_level = parse_number<int>("start_level", *v);
  if (auto v = get("iterref.N")) s.iterref_N = parse_number<std::size_t>("iterref.N", *v);
  if (auto v = get("iterref.k")) s.iterref_k = parse_number<std::size_t>("iterref.k", *v);
  if (auto v = get("iterref.jump")) s.iterref_jump = parse_number<int>("iterref.jump", *v);
  if (auto v = get("iterref.pool_reuse")) s.iterref_pool_reuse = parse_bool("pool_reuse", *v);
  if (auto v = get("iterref.sizing")) s.iterref_sizing = *v;

  if (auto v = get("timesteps.fractions")) cfg.timesteps.fractions = parse_doubles("fractions", *v);
  if (auto v = get("timesteps.k")) cfg.timesteps.k = parse_number<std::size_t>("timesteps.k", *v);
  if (auto v = get("timesteps.N")) cfg.timesteps.N = parse_number<std::size_t>("timesteps.N", *v);
  if (auto v = get("timesteps.evenly_steps")) {
    cfg.timesteps.evenly_steps = parse_number<std::size_t>("evenly_steps", *v);
  }
  if (auto v = get("kn.pairs")) {
    cfg.kn.pairs.clear();
    for (const auto& item : split_list(*v)) {
      const auto x = item.find('x');
      if (x == std::string::npos) throw InvalidArgument("config: kn pair must look like 4x8");
      cfg.kn.pairs.emplace_back(parse_number<std::size_t>("kn.k", item.substr(0, x)),
                                parse_number<std::size_t>("kn.N", item.substr(x + 1)));
    }
  }
  if (auto v = get("kn.stride")) cfg.kn.stride = parse_number<int>("kn.stride", *v);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("config: cannot open " + path);
  return parse_config(in);
}

void write_config(std::ostream& out, const ExperimentConfig& cfg) {
  const InstanceConfig& ic = cfg.instance;
  const SamplerSettings& s = cfg.settings;
  std::vector<std::string> pairs;
  for (const auto& [k, n] : cfg.kn.pairs) pairs.push_back(std::to_string(k) + "x" + std::to_string(n));
  out << "[experiment]\n"
      << "seed = " << cfg.seed << '\n'
      << "replicates = " << cfg.replicates << '\n'
      << "budgets = " << join(cfg.budgets) << '\n'
      << "samplers = " << join(cfg.samplers) << '\n'
      << "output = " << cfg.output << '\n'
      << "workers = " << cfg.workers << '\n'
      << "wall_time = " << (cfg.wall_time ? "true" : "false") << "\n\n"
      << "[instance]\n"
      << "length = " << ic.length << '\n'
      << "vocab = " << ic.vocab << '\n'
      << "T = " << ic.T << '\n'
      << "schedule = " << ic.schedule << '\n'
      << "alphas = " << join(ic.alphas) << '\n'
      << "data = " << ic.data << '\n'
      << "data_seed = " << ic.data_seed << '\n'
      << "concentration = " << format_double(ic.concentration) << '\n'
      << "stickiness = " << format_double(ic.stickiness) << '\n'
      << "patterns = " << join(ic.patterns) << '\n'
      << "pattern_weights = " << join(ic.pattern_weights) << '\n'
      << "epsilon = " << format_double(ic.epsilon) << '\n'
      << "data_file = " << ic.data_file << '\n'
      << "denoiser = " << ic.denoiser << "\n\n"
      << "[reward]\n"
      << "name = " << cfg.reward.name << '\n'
      << "alpha = " << format_double(cfg.reward.alpha) << '\n'
      << "mode = " << cfg.reward.mode << "\n\n"
      << "[fk]\n"
      << "resample_every = " << s.fk_resample_every << "\n\n"
      << "[sop]\n"
      << "m = " << s.sop_m << '\n'
      << "remask_fraction = " << format_double(s.sop_remask_fraction) << '\n'
      << "denoise_levels = " << s.sop_denoise_levels << '\n'
      << "start_level = " << s.sop_start_level << "\n\n"
      << "[iterref]\n"
      << "N = " << s.iterref_N << '\n'
      << "k = " << s.iterref_k << '\n'
      << "jump = " << s.iterref_jump << '\n'
      << "pool_reuse = " << (s.iterref_pool_reuse ? "true" : "false") << '\n'
      << "sizing = " << s.iterref_sizing << "\n\n"
      << "[timesteps]\n"
      << "fractions = " << join(cfg.timesteps.fractions) << '\n'
      << "k = " << cfg.timesteps.k << '\n'
      << "N = " << cfg.timesteps.N << '\n'
      << "evenly_steps = " << cfg.timesteps.evenly_steps << "\n\n"
      << "[kn]\n"
      << "pairs = " << join(pairs) << '\n'
      << "stride = " << cfg.kn.stride << '\n';
}

Instance build_instance(const ExperimentConfig& cfg) {
  const InstanceConfig& ic = cfg.instance;
  Schedule schedule = [&] {
    if (ic.schedule == "linear") return Schedule::linear(ic.T);
    if (ic.schedule == "cosine") return Schedule::cosine(ic.T);
    if (ic.schedule == "custom") return Schedule(ic.alphas);
    throw InvalidArgument("config: unknown schedule '" + ic.schedule + "'");
  }();
  std::shared_ptr<const DataDistribution> data;
  if (ic.data == "uniform") {
    data = std::make_shared<const DataDistribution>(DataDistribution::uniform(ic.length, ic.vocab));
  } else if (ic.data == "random") {
    data = std::make_shared<const DataDistribution>(
        DataDistribution::random(ic.length, ic.vocab, ic.data_seed, ic.concentration));
  } else if (ic.data == "markov") {
    data = std::make_shared<const DataDistribution>(
        DataDistribution::markov(ic.length, ic.vocab, ic.data_seed, ic.stickiness));
  } else if (ic.data == "pattern") {
    const Vocab vocab(ic.vocab);
    std::vector<Sequence> patterns;
    for (const auto& p : ic.patterns) patterns.push_back(parse_sequence(p, vocab));
    std::vector<double> weights = ic.pattern_weights;
    if (weights.empty()) weights.assign(patterns.size(), 1.0);
    data = std::make_shared<const DataDistribution>(
        DataDistribution::pattern(ic.length, ic.vocab, patterns, weights, ic.epsilon));
  } else if (ic.data == "file") {
    std::ifstream in(ic.data_file);
    if (!in) throw InvalidArgument("config: cannot open data file " + ic.data_file);
    data = std::make_shared<const DataDistribution>(DataDistribution::load(in));
    if (data->length() != ic.length || data->vocab().size() != ic.vocab) {
      throw InvalidArgument("config: data file does not match instance length/vocab");
    }
  } else {
    throw InvalidArgument("config: unknown data kind '" + ic.data + "'");
  }
  if (schedule.T() != ic.T) throw InvalidArgument("config: schedule length does not match T");
  Denoiser denoiser(parse_denoiser_kind(ic.denoiser), data, schedule);
  RewardSpec reward(TerminalReward::parse(cfg.reward.name, data->vocab(), data), cfg.reward.alpha,
                    RewardMode::parse(cfg.reward.mode));
  return {data, schedule, std::move(denoiser), std::move(reward)};
}

}  // namespace maskref::cli
