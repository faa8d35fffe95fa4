// SPDX-License-Identifier: Apache-2.0

#include "rlvr/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace rlvr {

namespace pt = boost::property_tree;

namespace {

[[noreturn]] void config_error(const std::string& where, const std::string& what) {
  throw std::invalid_argument("config [" + where + "]: " + what);
}

template <typename T>
T parse_number(const std::string& where, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) config_error(where, "cannot parse '" + text + "' as a number");
  return value;
}

bool parse_bool(const std::string& where, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  config_error(where, "expected true|false, got '" + text + "'");
}

std::vector<int> parse_int_list(const std::string& where, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) config_error(where, "empty list element");
    out.push_back(parse_number<int>(where, item.substr(b, e - b + 1)));
  }
  if (out.empty()) config_error(where, "empty list");
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string join(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

class Section {
 public:
  Section(std::string name, const pt::ptree& tree) : name_(std::move(name)), tree_(tree) {}

  template <typename Fn>
  void read(const std::string& key, Fn&& assign) {
    seen_.insert(key);
    if (auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '\0'))) assign(name_ + "." + key, *v);
  }

  void reject_unknown() const {
    for (const auto& [key, child] : tree_) {
      if (!seen_.count(key)) config_error(name_, "unknown key '" + key + "'");
    }
  }

 private:
  std::string name_;
  const pt::ptree& tree_;
  std::set<std::string> seen_;
};

}  // namespace

std::uint64_t ExperimentConfig::seed() const {
  if (!schedule.seed) throw std::invalid_argument("config [schedule]: seed is required");
  return *schedule.seed;
}

void ExperimentConfig::validate() const {
  const TaskSpec task_spec = make_task(task);
  algorithm.validate(task_spec.vocab_size());
  if (algorithm.group_size < 2) config_error("algorithm", "group_size must be >= 2");
  if (schedule.total_steps < 1) config_error("schedule", "total_steps must be >= 1");
  if (schedule.prompts_per_batch < 1) config_error("schedule", "prompts_per_batch must be >= 1");
  if (schedule.eval_every < 0) config_error("schedule", "eval_every must be >= 0");
  if (schedule.eval_n_samples < 1) config_error("schedule", "eval_n_samples must be >= 1");
  for (int k : schedule.eval_k_list) {
    if (k < 1 || k > schedule.eval_n_samples) config_error("schedule", "eval_k_list values must be in [1, eval_n_samples]");
  }
  if (!schedule.seed) config_error("schedule", "seed is required");
  if (schedule.lambda_k_max < 1 || schedule.lambda_k_max > std::min(algorithm.record_depth, task_spec.vocab_size())) {
    config_error("schedule", "lambda_k_max must be in [1, min(record_depth, vocab_size)]");
  }
  if (schedule.entropy_bins < 1) config_error("schedule", "entropy_bins must be >= 1");
  if (!(schedule.init_logit_std >= 0.0) || !std::isfinite(schedule.init_logit_std)) {
    config_error("schedule", "init_logit_std must be finite and >= 0");
  }
  if (algorithm.minibatches > schedule.prompts_per_batch) {
    config_error("algorithm", "minibatches cannot exceed prompts_per_batch");
  }
  if (io.output_dir.empty()) config_error("io", "output_dir must be set");
  if (io.checkpoint_every < 0) config_error("io", "checkpoint_every must be >= 0");
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  for (const auto& [name, child] : tree) {
    if (name != "task" && name != "algorithm" && name != "schedule" && name != "io") {
      config_error(name, "unknown section");
    }
    if (child.empty() && !child.data().empty()) config_error(name, "key outside a section");
  }

  ExperimentConfig c;
  const pt::ptree empty;
  auto child = [&](const char* name) -> const pt::ptree& {
    auto it = tree.find(name);
    return it == tree.not_found() ? empty : it->second;
  };

  {
    Section s("task", child("task"));
    std::string family = "branch_chain";
    s.read("family", [&](const std::string&, const std::string& v) { family = v; });
    if (task_family_from_string(family) == TaskFamily::SumGrammar) {
      SumGrammarParams p;
      s.read("targets", [&](const std::string& w, const std::string& v) { p.targets = parse_int_list(w, v); });
      c.task = p;
    } else {
      BranchChainParams p;
      s.read("depth", [&](const std::string& w, const std::string& v) { p.depth = parse_number<int>(w, v); });
      s.read("branching", [&](const std::string& w, const std::string& v) { p.branching = parse_number<int>(w, v); });
      s.read("paths", [&](const std::string& w, const std::string& v) { p.num_paths = parse_number<int>(w, v); });
      s.read("seed", [&](const std::string& w, const std::string& v) { p.seed = parse_number<std::uint64_t>(w, v); });
      s.read("prompts", [&](const std::string& w, const std::string& v) { p.num_prompts = parse_number<int>(w, v); });
      c.task = p;
    }
    s.reject_unknown();
  }
  {
    Section s("algorithm", child("algorithm"));
    AlgorithmConfig& a = c.algorithm;
    auto dbl = [](double& field) {
      return [&field](const std::string& w, const std::string& v) { field = parse_number<double>(w, v); };
    };
    auto integer = [](int& field) {
      return [&field](const std::string& w, const std::string& v) { field = parse_number<int>(w, v); };
    };
    s.read("variant", [&](const std::string&, const std::string& v) { a.variant = variant_from_string(v); });
    s.read("alpha", dbl(a.alpha));
    s.read("smoothing_k", integer(a.smoothing_k));
    s.read("lambda_top1", dbl(a.lambda_top1));
    s.read("gate_quantile", dbl(a.gate_quantile));
    s.read("clip_eps", dbl(a.clip_eps));
    s.read("kl_beta", dbl(a.kl_beta));
    s.read("group_size", integer(a.group_size));
    s.read("temperature", dbl(a.temperature));
    s.read("lr", dbl(a.lr));
    s.read("adv_std_eps", dbl(a.adv_std_eps));
    s.read("minibatches", integer(a.minibatches));
    s.read("simko_warmup_steps", integer(a.simko_warmup_steps));
    s.read("record_depth", integer(a.record_depth));
    s.reject_unknown();
  }
  {
    Section s("schedule", child("schedule"));
    ScheduleConfig& sc = c.schedule;
    auto integer = [](int& field) {
      return [&field](const std::string& w, const std::string& v) { field = parse_number<int>(w, v); };
    };
    s.read("total_steps", integer(sc.total_steps));
    s.read("prompts_per_batch", integer(sc.prompts_per_batch));
    s.read("eval_every", integer(sc.eval_every));
    s.read("eval_n_samples", integer(sc.eval_n_samples));
    s.read("eval_k_list", [&](const std::string& w, const std::string& v) { sc.eval_k_list = parse_int_list(w, v); });
    s.read("seed", [&](const std::string& w, const std::string& v) { sc.seed = parse_number<std::uint64_t>(w, v); });
    s.read("lambda_k_max", integer(sc.lambda_k_max));
    s.read("entropy_bins", integer(sc.entropy_bins));
    s.read("init_logit_std", [&](const std::string& w, const std::string& v) { sc.init_logit_std = parse_number<double>(w, v); });
    s.reject_unknown();
  }
  {
    Section s("io", child("io"));
    s.read("output_dir", [&](const std::string&, const std::string& v) { c.io.output_dir = v; });
    s.read("checkpoint_every", [&](const std::string& w, const std::string& v) {
      c.io.checkpoint_every = parse_number<int>(w, v);
    });
    s.read("record_wall_time", [&](const std::string& w, const std::string& v) { c.io.record_wall_time = parse_bool(w, v); });
    s.reject_unknown();
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string to_ini(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "[task]\n";
  if (const auto* sg = std::get_if<SumGrammarParams>(&c.task)) {
    os << "family = sum_grammar\n" << "targets = " << join(sg->targets) << "\n";
  } else {
    const auto& bc = std::get<BranchChainParams>(c.task);
    os << "family = branch_chain\n"
       << "depth = " << bc.depth << "\n"
       << "branching = " << bc.branching << "\n"
       << "paths = " << bc.num_paths << "\n"
       << "seed = " << bc.seed << "\n"
       << "prompts = " << bc.num_prompts << "\n";
  }
  const AlgorithmConfig& a = c.algorithm;
  os << "\n[algorithm]\n"
     << "variant = " << to_string(a.variant) << "\n"
     << "alpha = " << format_double(a.alpha) << "\n"
     << "smoothing_k = " << a.smoothing_k << "\n"
     << "lambda_top1 = " << format_double(a.lambda_top1) << "\n"
     << "gate_quantile = " << format_double(a.gate_quantile) << "\n"
     << "clip_eps = " << format_double(a.clip_eps) << "\n"
     << "kl_beta = " << format_double(a.kl_beta) << "\n"
     << "group_size = " << a.group_size << "\n"
     << "temperature = " << format_double(a.temperature) << "\n"
     << "lr = " << format_double(a.lr) << "\n"
     << "adv_std_eps = " << format_double(a.adv_std_eps) << "\n"
     << "minibatches = " << a.minibatches << "\n"
     << "simko_warmup_steps = " << a.simko_warmup_steps << "\n"
     << "record_depth = " << a.record_depth << "\n";
  const ScheduleConfig& s = c.schedule;
  os << "\n[schedule]\n"
     << "total_steps = " << s.total_steps << "\n"
     << "prompts_per_batch = " << s.prompts_per_batch << "\n"
     << "eval_every = " << s.eval_every << "\n"
     << "eval_n_samples = " << s.eval_n_samples << "\n"
     << "eval_k_list = " << join(s.eval_k_list) << "\n";
  if (s.seed) os << "seed = " << *s.seed << "\n";
  os << "lambda_k_max = " << s.lambda_k_max << "\n"
     << "entropy_bins = " << s.entropy_bins << "\n"
     << "init_logit_std = " << format_double(s.init_logit_std) << "\n";
  os << "\n[io]\n"
     << "output_dir = " << c.io.output_dir << "\n"
     << "checkpoint_every = " << c.io.checkpoint_every << "\n"
     << "record_wall_time = " << (c.io.record_wall_time ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace rlvr
