// SPDX-License-Identifier: Apache-2.0

#include "rlvr/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rlvr/oracles.hpp"
#include "rlvr/rng.hpp"

namespace rlvr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kTrainStream = 0x747261696eULL;  // "train"
constexpr std::uint64_t kEvalStream = 0x6576616cULL;     // "eval"
constexpr std::uint64_t kInitStream = 0x696e6974ULL;     // "init"
constexpr std::size_t kMaxInitStates = 1u << 20;

void init_subtree(PolicyTable& table, const TaskSpec& task, DecodingState& state, double std_dev, Rng& rng) {
  Logits z;
  for (int v = 0; v < table.vocab_size(); v += 2) {
    // Box-Muller; both outputs used.
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    const double r = std_dev * std::sqrt(-2.0 * std::log(u1));
    z.values.push_back(r * std::cos(2.0 * std::numbers::pi * u2));
    if (v + 1 < table.vocab_size()) z.values.push_back(r * std::sin(2.0 * std::numbers::pi * u2));
  }
  table.set_logits(state, std::move(z));
  if (static_cast<int>(state.prefix.size()) + 1 >= task.max_response_length()) return;
  for (TokenId t = 0; t < table.vocab_size(); ++t) {
    if (task.terminal_token() && t == *task.terminal_token()) continue;
    state.prefix.push_back(t);
    init_subtree(table, task, state, std_dev, rng);
    state.prefix.pop_back();
  }
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_atomically(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

json lambda_json(const LambdaReport& report) {
  return {{"lambda_sampled", report.lambda_sampled},
          {"lambda_rank", report.lambda_rank},
          {"geo_sampled", report.geo_sampled},
          {"geo_rank", report.geo_rank}};
}

void merge_eval(json& row, const EvalResult& eval) {
  json passk = json::object();
  for (std::size_t i = 0; i < eval.k_list.size(); ++i) passk[std::to_string(eval.k_list[i])] = eval.pass_at_k[i];
  row["pass_at_k"] = passk;
  row["eval_mean_reward"] = eval.mean_reward;
  row["eval_lambda"] = lambda_json(eval.lambda);
}

// Keeps the rows whose step is below `next_step`; used when resuming.
void truncate_metrics(const fs::path& path, int next_step) {
  std::ifstream in(path);
  if (!in) return;
  std::string line, kept;
  while (std::getline(in, line)) {
    const json row = json::parse(line, nullptr, false);
    if (row.is_discarded() || !row.contains("step")) continue;
    if (row["step"].get<int>() < next_step) kept += line + "\n";
  }
  in.close();
  write_atomically(path, kept);
}

}  // namespace

TabularPolicy initial_policy(const ExperimentConfig& config, const TaskSpec& task) {
  TabularPolicy policy(task.vocab_size());
  const double std_dev = config.schedule.init_logit_std;
  if (std_dev == 0.0) return policy;
  double states = 0.0, level = 1.0;
  for (int d = 0; d < task.max_response_length(); ++d, level *= task.vocab_size()) states += level;
  if (states * static_cast<double>(task.prompts().size()) > static_cast<double>(kMaxInitStates)) {
    throw std::invalid_argument("init_logit_std: too many states to initialize for this task");
  }
  PolicyTable table(task.vocab_size());
  for (int prompt : task.prompts()) {
    Rng rng = Rng::keyed(config.seed(), {kInitStream, static_cast<std::uint64_t>(prompt)});
    DecodingState root{prompt, {}};
    init_subtree(table, task, root, std_dev, rng);
  }
  return TabularPolicy(std::move(table));
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  json j;
  j["format"] = "rlvr-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config_ini"] = to_ini(ckpt.config);
  j["next_step"] = ckpt.next_step;
  j["rng"] = {{"generator", "splitmix64-keyed"}, {"seed", ckpt.config.seed()}, {"next_step", ckpt.next_step}};
  j["policy"] = table_to_json(ckpt.policy);
  j["reference"] = ckpt.reference ? table_to_json(*ckpt.reference) : json(nullptr);
  write_atomically(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || j.value("format", "") != "rlvr-checkpoint") {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  if (j.at("version").get<int>() != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(j.at("version").get<int>()));
  }
  Checkpoint ckpt;
  ckpt.config = parse_config(j.at("config_ini").get<std::string>());
  ckpt.next_step = j.at("next_step").get<int>();
  ckpt.policy = table_from_json(j.at("policy"));
  if (!j.at("reference").is_null()) ckpt.reference = table_from_json(j.at("reference"));
  return ckpt;
}

EvalResult evaluate(const PolicyTable& policy, const TaskSpec& task, int n, std::span<const int> k_list,
                    std::uint64_t seed, double temperature, int k_max, std::uint64_t stream) {
  if (policy.vocab_size() != task.vocab_size()) {
    throw std::invalid_argument("evaluate: checkpoint vocabulary " + std::to_string(policy.vocab_size()) +
                                " does not match task vocabulary " + std::to_string(task.vocab_size()));
  }
  if (n < 1) throw std::invalid_argument("evaluate: n must be >= 1");
  EvalResult out;
  out.k_list.assign(k_list.begin(), k_list.end());
  std::vector<Rollout> samples;
  samples.reserve(static_cast<std::size_t>(n) * task.prompts().size());
  long long correct_total = 0;
  for (int prompt : task.prompts()) {
    PromptOutcome outcome{n, 0};
    for (int s = 0; s < n; ++s) {
      Rng rng = Rng::keyed(seed, {kEvalStream, stream, static_cast<std::uint64_t>(prompt), static_cast<std::uint64_t>(s)});
      Rollout r = rollout(policy, task, prompt, temperature, rng, std::max(k_max, kDefaultRecordDepth));
      outcome.c += r.reward;
      samples.push_back(std::move(r));
    }
    correct_total += outcome.c;
    out.outcomes.push_back(outcome);
  }
  out.pass_at_k = pass_at_k_curve(out.outcomes, k_list);
  out.lambda = lambda_report(samples, k_max);
  out.mean_reward = static_cast<double>(correct_total) / static_cast<double>(samples.size());
  return out;
}

json train_step(const ExperimentConfig& config, const TaskSpec& task, TabularPolicy& policy,
                const PolicySnapshot* reference, int step) {
  AlgorithmConfig alg = config.algorithm;
  if (alg.variant == Variant::SimKO && step <= alg.simko_warmup_steps) alg.variant = Variant::GRPO;

  const PolicySnapshot behavior = policy.snapshot(SnapshotRole::Behavior);
  const auto& prompts = task.prompts();
  const int per_batch = config.schedule.prompts_per_batch;
  const std::uint64_t seed = config.seed();

  std::vector<RolloutGroup> batch(static_cast<std::size_t>(per_batch));
  std::vector<double> all_advantages;
  long long correct = 0, responses = 0;
  for (int j = 0; j < per_batch; ++j) {
    RolloutGroup& group = batch[static_cast<std::size_t>(j)];
    const auto slot = (static_cast<std::size_t>(step - 1) * static_cast<std::size_t>(per_batch) + static_cast<std::size_t>(j)) % prompts.size();
    group.prompt_id = prompts[slot];
    std::vector<double> rewards;
    for (int i = 0; i < alg.group_size; ++i) {
      Rng rng = Rng::keyed(seed, {kTrainStream, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(j),
                                  static_cast<std::uint64_t>(i)});
      group.rollouts.push_back(rollout(behavior.table(), task, group.prompt_id, alg.temperature, rng, alg.record_depth));
      rewards.push_back(static_cast<double>(group.rollouts.back().reward));
      correct += group.rollouts.back().reward;
      ++responses;
    }
    group.advantages = compute_advantages(rewards, alg.adv_std_eps);
    all_advantages.insert(all_advantages.end(), group.advantages.begin(), group.advantages.end());
  }

  const std::vector<double> entropies = batch_entropies(batch);
  const GateMask gate = gate_tokens(entropies, alg.gate_quantile);

  // Contiguous, near-equal minibatches of groups; one update each against the
  // same behavior snapshot and the batch-level gate.
  UpdateCounts counts;
  double surrogate = 0.0, grad_sq = 0.0;
  const int mbs = alg.minibatches;
  std::size_t group_begin = 0, token_begin = 0;
  for (int m = 0; m < mbs; ++m) {
    const std::size_t group_end = batch.size() * static_cast<std::size_t>(m + 1) / static_cast<std::size_t>(mbs);
    std::span<const RolloutGroup> chunk(batch.data() + group_begin, group_end - group_begin);
    const std::size_t chunk_tokens = batch_token_count(chunk);
    const UpdateReport report = assemble_update(chunk, policy.table(), behavior, reference, alg,
                                                gate.slice(token_begin, chunk_tokens));
    policy.apply_gradient(report.grads, alg.lr);
    surrogate += report.surrogate_value;
    for (const auto& [state, g] : report.grads) {
      for (double v : g) grad_sq += v * v;
    }
    counts.tokens += report.counts.tokens;
    counts.gated += report.counts.gated;
    counts.clipped += report.counts.clipped;
    counts.positive += report.counts.positive;
    counts.negative += report.counts.negative;
    counts.zero_advantage += report.counts.zero_advantage;
    counts.masked += report.counts.masked;
    counts.smoothed += report.counts.smoothed;
    counts.amplified += report.counts.amplified;
    group_begin = group_end;
    token_begin += chunk_tokens;
  }

  std::vector<Rollout> flat;
  for (const auto& g : batch) flat.insert(flat.end(), g.rollouts.begin(), g.rollouts.end());
  const LambdaReport lambda = lambda_report(flat, config.schedule.lambda_k_max);
  const auto edges = default_entropy_bins(task.vocab_size(), config.schedule.entropy_bins);
  const EntropyHistogram hist = entropy_histogram(entropies, edges, alg.gate_quantile);

  const double n_adv = static_cast<double>(all_advantages.size());
  const double adv_mean = std::accumulate(all_advantages.begin(), all_advantages.end(), 0.0) / n_adv;
  double adv_var = 0.0;
  for (double a : all_advantages) adv_var += (a - adv_mean) * (a - adv_mean);

  json row;
  row["step"] = step;
  row["kind"] = "train";
  row["variant"] = to_string(alg.variant);
  row["mean_reward"] = static_cast<double>(correct) / static_cast<double>(responses);
  row["adv_mean"] = adv_mean;
  row["adv_std"] = std::sqrt(adv_var / n_adv);
  row["adv_min"] = *std::min_element(all_advantages.begin(), all_advantages.end());
  row["adv_max"] = *std::max_element(all_advantages.begin(), all_advantages.end());
  row["tokens"] = counts.tokens;
  row["positive_tokens"] = counts.positive;
  row["negative_tokens"] = counts.negative;
  row["smoothed_tokens"] = counts.smoothed;
  row["amplified_tokens"] = counts.amplified;
  row["gate_tau"] = finite_or_null(gate.threshold_tau);
  row["gated_fraction"] = gate.gated_fraction();
  row["clip_fraction"] = counts.tokens ? static_cast<double>(counts.clipped) / static_cast<double>(counts.tokens) : 0.0;
  row["surrogate"] = surrogate;
  row["grad_norm"] = std::sqrt(grad_sq);
  row.update(lambda_json(lambda));
  row["entropy_hist"] = {{"lo", edges.front()}, {"hi", edges.back()}, {"counts", hist.counts}, {"mean", hist.mean_entropy}};
  return row;
}

TrainResult train(const ExperimentConfig& config, const TrainOptions& options) {
  config.validate();
  const TaskSpec task = make_task(config.task);
  const fs::path dir(config.io.output_dir);
  fs::create_directories(dir);
  TrainResult result;
  result.metrics_path = dir / kMetricsFile;
  result.checkpoint_path = dir / kCheckpointFile;

  TabularPolicy policy = initial_policy(config, task);
  std::optional<PolicySnapshot> reference;
  int start = 1;
  if (options.resume && fs::exists(result.checkpoint_path)) {
    Checkpoint ckpt = load_checkpoint(result.checkpoint_path);
    if (to_ini(ckpt.config) != to_ini(config)) {
      throw std::runtime_error("resume: checkpoint was written by a different config");
    }
    policy = TabularPolicy(std::move(ckpt.policy));
    if (ckpt.reference) {
      reference.emplace(std::make_shared<const PolicyTable>(std::move(*ckpt.reference)), SnapshotRole::Reference);
    }
    start = ckpt.next_step;
    truncate_metrics(result.metrics_path, start);
  } else {
    write_atomically(result.metrics_path, "");
    if (config.algorithm.kl_beta > 0.0) reference = policy.snapshot(SnapshotRole::Reference);
  }

  const auto& sched = config.schedule;
  const auto& alg = config.algorithm;
  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&] {
    if (!config.io.record_wall_time) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  std::ofstream metrics(result.metrics_path, std::ios::app);
  if (!metrics) throw std::runtime_error("cannot open " + result.metrics_path.string());

  if (start == 1 && sched.eval_every > 0) {
    json row{{"step", 0}, {"kind", "eval"}, {"variant", to_string(alg.variant)}};
    merge_eval(row, evaluate(policy.table(), task, sched.eval_n_samples, sched.eval_k_list, config.seed(),
                             alg.temperature, sched.lambda_k_max, 0));
    row["wall_time"] = wall();
    metrics << row.dump() << "\n" << std::flush;
  }

  auto write_checkpoint = [&](int next_step) {
    Checkpoint ckpt{config, policy.table(), std::nullopt, next_step};
    if (reference) ckpt.reference = reference->table();
    save_checkpoint(ckpt, result.checkpoint_path);
  };

  for (int step = start; step <= sched.total_steps; ++step) {
    json row;
    try {
      row = train_step(config, task, policy, reference ? &*reference : nullptr, step);
    } catch (const std::exception& e) {
      json diag{{"step", step}, {"kind", "error"}, {"variant", to_string(alg.variant)}, {"error", e.what()}};
      metrics << diag.dump() << "\n" << std::flush;
      throw std::runtime_error(std::string("train: step ") + std::to_string(step) + " aborted: " + e.what());
    }
    const bool eval_due = sched.eval_every > 0 && (step % sched.eval_every == 0 || step == sched.total_steps);
    if (eval_due) {
      merge_eval(row, evaluate(policy.table(), task, sched.eval_n_samples, sched.eval_k_list, config.seed(),
                               alg.temperature, sched.lambda_k_max, static_cast<std::uint64_t>(step)));
    }
    row["wall_time"] = wall();
    metrics << row.dump() << "\n" << std::flush;
    result.last_step = step;

    if (options.stop_after && step >= *options.stop_after) {
      result.policy = policy.table();
      return result;
    }
    if ((config.io.checkpoint_every > 0 && step % config.io.checkpoint_every == 0) || step == sched.total_steps) {
      write_checkpoint(step + 1);
    }
  }
  result.policy = policy.table();
  return result;
}

PlotKind plot_kind_from_string(const std::string& name) {
  if (name == "lambda") return PlotKind::Lambda;
  if (name == "passk") return PlotKind::PassK;
  if (name == "entropy") return PlotKind::Entropy;
  throw std::invalid_argument("unknown export kind '" + name + "' (expected lambda|passk|entropy)");
}

ExportResult export_plot_data(const fs::path& metrics, PlotKind kind, const fs::path& out_dir) {
  std::ifstream in(metrics);
  if (!in) throw std::runtime_error("cannot open metrics file " + metrics.string());
  fs::create_directories(out_dir);
  ExportResult result;
  std::ostringstream csv;
  csv.precision(17);
  switch (kind) {
    case PlotKind::Lambda:
      result.csv_path = out_dir / "lambda.csv";
      csv << "step,series,log_value,geo_mean\n";
      break;
    case PlotKind::PassK:
      result.csv_path = out_dir / "passk.csv";
      csv << "step,series,k,value\n";
      break;
    case PlotKind::Entropy:
      result.csv_path = out_dir / "entropy.csv";
      csv << "step,series,bin_lo,bin_hi,value\n";
      break;
  }

  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json row = json::parse(line, nullptr, false);
    try {
      if (row.is_discarded()) throw std::invalid_argument("not JSON");
      const int step = row.at("step").get<int>();
      const std::string row_kind = row.value("kind", "train");
      if (kind == PlotKind::Lambda && row_kind == "train") {
        std::ostringstream rows;
        rows.precision(17);
        rows << step << ",sampled," << row.at("lambda_sampled").get<double>() << ","
             << row.at("geo_sampled").get<double>() << "\n";
        const auto ranks = row.at("lambda_rank").get<std::vector<double>>();
        const auto geo = row.at("geo_rank").get<std::vector<double>>();
        if (ranks.size() != geo.size()) throw std::invalid_argument("rank arrays differ in length");
        for (std::size_t k = 0; k < ranks.size(); ++k) {
          rows << step << ",rank" << (k + 1) << "," << ranks[k] << "," << geo[k] << "\n";
        }
        csv << rows.str();
        result.rows_written += ranks.size() + 1;
      } else if (kind == PlotKind::PassK && row.contains("pass_at_k")) {
        std::ostringstream rows;
        rows.precision(17);
        std::vector<std::pair<int, double>> points;
        for (const auto& [k, v] : row.at("pass_at_k").items()) points.emplace_back(std::stoi(k), v.get<double>());
        std::sort(points.begin(), points.end());
        for (const auto& [k, v] : points) rows << step << ",pass@" << k << "," << k << "," << v << "\n";
        csv << rows.str();
        result.rows_written += points.size();
      } else if (kind == PlotKind::Entropy && row_kind == "train") {
        std::ostringstream rows;
        rows.precision(17);
        const auto& h = row.at("entropy_hist");
        const double lo = h.at("lo").get<double>();
        const double hi = h.at("hi").get<double>();
        const auto counts = h.at("counts").get<std::vector<long long>>();
        const double width = (hi - lo) / static_cast<double>(counts.size());
        for (std::size_t b = 0; b < counts.size(); ++b) {
          rows << step << ",bin" << b << "," << lo + width * static_cast<double>(b) << ","
               << lo + width * static_cast<double>(b + 1) << "," << counts[b] << "\n";
        }
        rows << step << ",gated_fraction,,," << row.at("gated_fraction").get<double>() << "\n";
        rows << step << ",mean_entropy,,," << h.at("mean").get<double>() << "\n";
        csv << rows.str();
        result.rows_written += counts.size() + 2;
      }
    } catch (const std::exception&) {
      ++result.malformed_rows;
    }
  }
  if (result.malformed_rows > 0) {
    std::cerr << "export: skipped " << result.malformed_rows << " malformed row(s) in " << metrics.string() << "\n";
  }
  write_atomically(result.csv_path, csv.str());
  return result;
}

std::vector<GradCheckCase> default_gradcheck_cases() {
  std::vector<GradCheckCase> cases;
  for (Variant v : {Variant::GRPO, Variant::PSR, Variant::NSR}) {
    AlgorithmConfig c;
    c.variant = v;
    cases.push_back({to_string(v), c});
  }
  char label[96];
  for (double alpha : {0.0, 0.01, 0.3}) {
    for (double lambda : {1.0, 1.1, 2.0}) {
      for (int k : {1, 3, 5}) {
        AlgorithmConfig c;
        c.variant = Variant::SimKO;
        c.alpha = alpha;
        c.lambda_top1 = lambda;
        c.smoothing_k = k;
        std::snprintf(label, sizeof(label), "simko(alpha=%g,lambda=%g,K=%d)", alpha, lambda, k);
        cases.push_back({label, c});
      }
    }
  }
  return cases;
}

namespace {

struct GradCheckInstance {
  TaskSpec task;
  PolicyTable current{1};
  std::shared_ptr<const PolicyTable> behavior;
  std::shared_ptr<const PolicyTable> reference;
  std::vector<RolloutGroup> batch;
  GateMask gate;
  AlgorithmConfig config;
};

Logits random_logits(int vocab, double scale, Rng& rng) {
  Logits z;
  for (int i = 0; i < vocab; ++i) z.values.push_back(scale * (2.0 * rng.uniform() - 1.0));
  return z;
}

void fill_tree(PolicyTable& table, DecodingState& state, int depth, double scale, Rng& rng) {
  if (static_cast<int>(state.prefix.size()) >= depth) return;
  table.set_logits(state, random_logits(table.vocab_size(), scale, rng));
  for (TokenId t = 0; t < table.vocab_size(); ++t) {
    state.prefix.push_back(t);
    fill_tree(table, state, depth, scale, rng);
    state.prefix.pop_back();
  }
}

// Ratio values the surrogate will clip on, mirroring the substitution order
// (modify, then clip). Used only to keep instances away from clip kinks.
bool near_clip_boundary(const GradCheckInstance& inst) {
  const PolicySnapshot behavior(inst.behavior, SnapshotRole::Behavior);
  const double lo = 1.0 - inst.config.clip_eps, hi = 1.0 + inst.config.clip_eps;
  std::size_t flat = 0;
  for (const auto& group : inst.batch) {
    for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
      const Rollout& r = group.rollouts[i];
      for (std::size_t l = 0; l < r.tokens.size(); ++l, ++flat) {
        const DecodingState s = r.state_at(l);
        double value = gamma(inst.current, behavior, s, r.tokens[l], inst.config.temperature);
        if (inst.config.variant == Variant::SimKO && inst.gate.gated[flat] && group.advantages[i] < 0.0) {
          value = gamma_neg(value, rank_of(inst.current.distribution(s, inst.config.temperature), r.tokens[l]),
                            inst.config.lambda_top1);
        }
        if (std::abs(value - lo) < 1e-3 || std::abs(value - hi) < 1e-3) return true;
      }
    }
  }
  return false;
}

GradCheckInstance make_instance(const AlgorithmConfig& base, Rng& rng) {
  for (;;) {
    GradCheckInstance inst;
    inst.config = base;
    inst.config.group_size = 4;
    inst.config.temperature = rng.uniform() < 0.5 ? 1.0 : 0.8;
    inst.config.kl_beta = rng.uniform() < 0.5 ? 0.0 : 0.05;
    if (base.variant == Variant::SimKO) {
      const double qs[] = {0.0, 0.5, 0.8};
      inst.config.gate_quantile = qs[rng.below(3)];
    }
    inst.task = make_task(BranchChainParams{3, 6, 5, rng.next_u64(), 2});

    PolicyTable behavior(inst.task.vocab_size());
    PolicyTable reference(inst.task.vocab_size());
    for (int prompt : inst.task.prompts()) {
      DecodingState root{prompt, {}};
      fill_tree(behavior, root, inst.task.max_response_length(), 1.5, rng);
      fill_tree(reference, root, inst.task.max_response_length(), 1.0, rng);
    }
    inst.current = behavior;
    for (const auto& [state, z] : behavior.entries()) {
      Logits moved = z;
      for (double& v : moved.values) v += 0.25 * (2.0 * rng.uniform() - 1.0);
      inst.current.set_logits(state, moved);
    }
    inst.behavior = std::make_shared<const PolicyTable>(std::move(behavior));
    inst.reference = std::make_shared<const PolicyTable>(std::move(reference));

    for (int prompt : inst.task.prompts()) {
      RolloutGroup group;
      group.prompt_id = prompt;
      std::vector<double> rewards;
      for (int i = 0; i < inst.config.group_size; ++i) {
        group.rollouts.push_back(rollout(*inst.behavior, inst.task, prompt, inst.config.temperature, rng));
        rewards.push_back(rng.uniform() < 0.5 ? 1.0 : 0.0);
      }
      group.advantages = compute_advantages(rewards, inst.config.adv_std_eps);
      inst.batch.push_back(std::move(group));
    }
    inst.gate = gate_tokens(batch_entropies(inst.batch), inst.config.gate_quantile);
    if (!near_clip_boundary(inst)) return inst;
  }
}

}  // namespace

std::vector<GradCheckSummary> gradcheck(std::span<const GradCheckCase> cases, int trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("gradcheck: trials must be >= 1");
  std::vector<GradCheckSummary> out;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    GradCheckSummary summary{cases[c].label, trials, 0.0, 0.0};
    for (int t = 0; t < trials; ++t) {
      Rng rng = Rng::keyed(seed, {static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(t)});
      const GradCheckInstance inst = make_instance(cases[c].config, rng);
      const PolicySnapshot behavior(inst.behavior, SnapshotRole::Behavior);
      const PolicySnapshot reference(inst.reference, SnapshotRole::Reference);
      const auto r = oracles::check_update_gradient(inst.batch, inst.current, behavior, &reference, inst.config,
                                                    inst.gate);
      summary.max_rel_error = std::max(summary.max_rel_error, r.max_rel_error);
      summary.max_abs_error = std::max(summary.max_abs_error, r.max_abs_error);
    }
    out.push_back(summary);
  }
  return out;
}

}  // namespace rlvr
