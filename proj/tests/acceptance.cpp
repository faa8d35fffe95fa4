// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any selected criterion fails.
//
//   rlvr_acceptance            run all criteria
//   rlvr_acceptance 3 7        run only criteria 3 and 7

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rlvr/algorithms.hpp"
#include "rlvr/config.hpp"
#include "rlvr/metrics.hpp"
#include "rlvr/oracles.hpp"
#include "rlvr/rng.hpp"
#include "rlvr/runner.hpp"
#include "support.hpp"

using namespace rlvr;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ExperimentConfig base_config(const TaskParams& task, std::uint64_t seed) {
  ExperimentConfig c;
  c.task = task;
  c.schedule.seed = seed;
  return c;
}

// Random logits on every state of the task tree, plus a perturbed copy to act
// as the current policy.
std::pair<PolicyTable, PolicyTable> behavior_and_current(const TaskSpec& task, const TaskParams& params,
                                                         std::uint64_t seed, double scale, double drift) {
  ExperimentConfig c = base_config(params, seed);
  c.schedule.init_logit_std = scale;
  PolicyTable behavior = initial_policy(c, task).table();
  PolicyTable current = behavior;
  std::mt19937_64 gen(seed ^ 0x5bd1e995ULL);
  std::normal_distribution<double> n01;
  for (const auto& [state, z] : behavior.entries()) {
    Logits m = z;
    for (double& v : m.values) v += drift * n01(gen);
    current.set_logits(state, m);
  }
  return {behavior, current};
}

// Groups of G rollouts with coin-flip rewards forced to be mixed.
std::vector<RolloutGroup> sampled_batch(const PolicyTable& behavior, const TaskSpec& task, int groups, int g,
                                        std::uint64_t seed) {
  std::vector<RolloutGroup> batch;
  for (int j = 0; j < groups; ++j) {
    Rng rng = Rng::keyed(seed, {static_cast<std::uint64_t>(j)});
    RolloutGroup group;
    group.prompt_id = task.prompts()[static_cast<std::size_t>(j) % task.prompts().size()];
    std::vector<double> rewards;
    for (int i = 0; i < g; ++i) {
      group.rollouts.push_back(rollout(behavior, task, group.prompt_id, 1.0, rng));
      rewards.push_back(i < 2 ? static_cast<double>(i) : static_cast<double>(rng.below(2)));
    }
    group.advantages = compute_advantages(rewards, 1e-6);
    batch.push_back(std::move(group));
  }
  return batch;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  const auto cases = default_gradcheck_cases();
  const auto summary = gradcheck(cases, 100, 20240601);
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  std::string worst_label;
  int trials = 100;
  for (const auto& s : summary) {
    trials = std::min(trials, s.trials);
    if (s.max_rel_error >= worst) {
      worst = s.max_rel_error;
      worst_label = s.label;
    }
  }
  const bool pass = worst <= 1e-4 && trials >= 100 && elapsed < 10.0;
  return {pass, fmt("%zu variants x %d instances, max rel err %.2e (%s) <= 1e-4, %.2f s < 10 s", summary.size(),
                    trials, worst, worst_label.c_str(), elapsed)};
}

Outcome gamma_pos_identity() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(77);
  std::normal_distribution<double> n01;
  double worst = 0.0;
  const DecodingState s{0, {}};
  for (int trial = 0; trial < 10000; ++trial) {
    const int vocab = 2 + static_cast<int>(gen() % 15);
    PolicyTable beh(vocab), cur(vocab);
    const Logits z = testing::gaussian_logits(gen, vocab, 2.0);
    beh.set_logits(s, z);
    Logits m = z;
    for (double& v : m.values) v += 0.5 * n01(gen);
    cur.set_logits(s, m);
    const PolicySnapshot snap(std::make_shared<const PolicyTable>(beh), SnapshotRole::Behavior);
    const auto y = static_cast<TokenId>(gen() % static_cast<std::uint64_t>(vocab));
    const int k = 1 + static_cast<int>(gen() % static_cast<std::uint64_t>(vocab));
    const double alpha = std::uniform_real_distribution<double>(0.0, 1.0)(gen);
    const double temperature = trial % 2 ? 1.0 : 0.7;
    const double g = gamma(cur, snap, s, y, temperature);
    worst = std::max(worst, std::abs(gamma_pos(cur, snap, s, y, alpha, k, temperature).value - g));
  }

  int mismatches = 0;
  const TaskParams params = BranchChainParams{3, 6, 5, 3, 2};
  const TaskSpec task = make_task(params);
  for (int trial = 0; trial < 50; ++trial) {
    const auto [beh, cur] = behavior_and_current(task, params, 100 + static_cast<std::uint64_t>(trial), 1.5, 0.1);
    const auto batch = sampled_batch(beh, task, 4, 8, static_cast<std::uint64_t>(trial));
    const PolicySnapshot snap(std::make_shared<const PolicyTable>(beh), SnapshotRole::Behavior);
    const auto gate = gate_tokens(batch_entropies(batch), trial % 3 == 0 ? 0.0 : 0.8);
    AlgorithmConfig grpo;
    grpo.variant = Variant::GRPO;
    AlgorithmConfig neutral;
    neutral.variant = Variant::SimKO;
    neutral.alpha = 0.0;
    neutral.lambda_top1 = 1.0;
    const auto a = assemble_update(batch, cur, snap, nullptr, grpo, gate);
    const auto b = assemble_update(batch, cur, snap, nullptr, neutral, gate);
    if (!testing::bitwise_equal(a.grads, b.grads) || a.surrogate_value != b.surrogate_value) ++mismatches;
  }
  const double elapsed = seconds_since(t0);
  const bool pass = worst <= 1e-12 && mismatches == 0 && elapsed < 5.0;
  return {pass, fmt("max |value - gamma| %.2e <= 1e-12 on 1e4 states; SimKO(alpha=0,lambda=1) vs GRPO bitwise "
                    "mismatches %d/50; %.2f s < 5 s",
                    worst, mismatches, elapsed)};
}

Outcome pass_at_k_estimator() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int n = 1; n <= oracles::kSubsetOracleMaxN; ++n) {
    for (int c = 0; c <= n; ++c) {
      std::array<bool, oracles::kSubsetOracleMaxN> buf{};
      for (int i = 0; i < c; ++i) buf[static_cast<std::size_t>(i)] = true;
      const std::span<const bool> outcomes(buf.data(), static_cast<std::size_t>(n));
      for (int k = 1; k <= n; ++k) {
        worst = std::max(worst, std::abs(pass_at_k_unbiased(n, c, k) - oracles::pass_at_k_subset_oracle(outcomes, k).value()));
      }
    }
  }

  const int n = 20, reps = 10000;
  std::mt19937_64 gen(2718);
  double worst_z = 0.0;
  for (double p : {0.1, 0.25, 0.5}) {
    std::bernoulli_distribution coin(p);
    for (int k : {1, 5, 10, 20}) {
      double sum = 0.0;
      for (int r = 0; r < reps; ++r) {
        int c = 0;
        for (int i = 0; i < n; ++i) c += coin(gen);
        sum += pass_at_k_unbiased(n, c, k);
      }
      // Standard error from the estimator's exact variance over c ~ Bin(n, p);
      // the sample variance is zero when every repetition lands on 1.
      const double truth = oracles::exact_pass_at_k_sampling(p, k);
      double second_moment = 0.0;
      for (int c = 0; c <= n; ++c) {
        const double log_pc = log_binomial(n, c) + c * std::log(p) + (n - c) * std::log1p(-p);
        const double est = pass_at_k_unbiased(n, c, k);
        second_moment += std::exp(log_pc) * est * est;
      }
      const double se = std::sqrt(std::max(0.0, second_moment - truth * truth) / reps);
      worst_z = std::max(worst_z, std::abs(sum / reps - truth) / se);
    }
  }
  const double elapsed = seconds_since(t0);
  const bool pass = worst <= 1e-12 && worst_z <= 3.0 && elapsed < 30.0;
  return {pass, fmt("max |estimator - subset oracle| %.2e <= 1e-12 (n<=12); worst MC deviation %.2f SE <= 3 "
                    "(p in {0.1,0.25,0.5}, 1e4 reps); %.2f s < 30 s",
                    worst, worst_z, elapsed)};
}

Outcome squeezing() {
  std::mt19937_64 gen(4242);
  const DecodingState s{0, {}};
  int squeeze_fail = 0, lambda_fail = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int vocab = 3 + static_cast<int>(gen() % 14);
    PolicyTable t(vocab);
    t.set_logits(s, testing::gaussian_logits(gen, vocab, 2.0));
    const ProbDist pi = t.distribution(s);
    const TokenId top1 = topk(pi, 1).indices[0];
    const double lr = std::exp(std::uniform_real_distribution<double>(std::log(0.01), std::log(5.0))(gen));
    const PolicySnapshot snap(std::make_shared<const PolicyTable>(t), SnapshotRole::Behavior);
    AlgorithmConfig grpo;
    grpo.variant = Variant::GRPO;

    TokenId y = top1;
    while (y == top1) y = static_cast<TokenId>(gen() % static_cast<std::uint64_t>(vocab));
    const auto neg = testing::single_token_batch(t, 0, y, -1.0);
    TabularPolicy after(t);
    after.apply_gradient(assemble_update(neg, t, snap, nullptr, grpo, gate_tokens(batch_entropies(neg), 1.0)).grads, lr);
    const ProbDist post = after.distribution(s);
    const double gain1 = post[static_cast<std::size_t>(top1)] - pi[static_cast<std::size_t>(top1)];
    bool ok = gain1 > 0.0;
    for (int k = 0; k < vocab; ++k) {
      if (k == top1 || k == y) continue;
      ok = ok && gain1 > post[static_cast<std::size_t>(k)] - pi[static_cast<std::size_t>(k)];
    }
    if (!ok) ++squeeze_fail;

    const auto top = testing::single_token_batch(t, 0, top1, -1.0);
    double drop[2];
    for (int i = 0; i < 2; ++i) {
      AlgorithmConfig c;
      c.variant = Variant::SimKO;
      c.lambda_top1 = i == 0 ? 1.0 : 1.1;
      TabularPolicy p(t);
      p.apply_gradient(assemble_update(top, t, snap, nullptr, c, gate_tokens(batch_entropies(top), 0.0)).grads, lr);
      drop[i] = pi[static_cast<std::size_t>(top1)] - p.distribution(s)[static_cast<std::size_t>(top1)];
    }
    if (!(drop[1] > drop[0])) ++lambda_fail;
  }
  return {squeeze_fail == 0 && lambda_fail == 0,
          fmt("1e3 random states: squeezing counterexamples %d, lambda=1.1 vs 1 drop counterexamples %d (need 0)",
              squeeze_fail, lambda_fail)};
}

// --- dynamics -------------------------------------------------------------

// All algorithm settings at their defaults except the learning rate: the
// default 0.1 does not move a uniform policy on this task within 500 steps
// (initial pass@1 is about 6/4096). lr = 10 is the smallest value in
// {3, 10, 30, 100} at which GRPO alone meets the rank-2 collapse condition
// on every seed.
constexpr double kDynamicsLr = 10.0;

struct RunSummary {
  double geo1_initial = 0, geo2_initial = 0;
  double geo1 = 0, geo2 = 0;
  double pass1 = 0, pass16 = 0, pass64 = 0;
  long long smoothed = 0, amplified = 0;
};

RunSummary dynamics_run(Variant v, std::uint64_t seed) {
  ExperimentConfig c;
  c.task = BranchChainParams{4, 8, 6, seed, 1};
  c.algorithm.variant = v;
  c.algorithm.lr = kDynamicsLr;
  c.schedule.total_steps = 500;
  c.schedule.eval_every = 500;
  c.schedule.seed = seed;
  c.io.output_dir = (fs::temp_directory_path() / "rlvr_acceptance" / (to_string(v) + "_" + std::to_string(seed))).string();
  c.io.checkpoint_every = 0;
  c.validate();
  fs::remove_all(c.io.output_dir);
  const auto result = train(c);

  RunSummary s;
  std::ifstream in(result.metrics_path);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    const auto row = nlohmann::json::parse(line);
    if (row.value("kind", "") == "train") {
      s.smoothed += row.at("smoothed_tokens").get<long long>();
      s.amplified += row.at("amplified_tokens").get<long long>();
    }
    if (!row.contains("eval_lambda")) continue;
    const auto& geo = row.at("eval_lambda").at("geo_rank");
    if (first) {
      s.geo1_initial = geo.at(0).get<double>();
      s.geo2_initial = geo.at(1).get<double>();
      first = false;
    }
    s.geo1 = geo.at(0).get<double>();
    s.geo2 = geo.at(1).get<double>();
    s.pass1 = row.at("pass_at_k").at("1").get<double>();
    s.pass16 = row.at("pass_at_k").at("16").get<double>();
    s.pass64 = row.at("pass_at_k").at("64").get<double>();
  }
  return s;
}

struct DynamicsRuns {
  std::map<Variant, std::vector<RunSummary>> runs;
  double seconds = 0.0;
};

const DynamicsRuns& dynamics_runs() {
  static const DynamicsRuns cached = [] {
    DynamicsRuns d;
    const auto t0 = Clock::now();
    for (Variant v : {Variant::GRPO, Variant::SimKO, Variant::PSR, Variant::NSR}) {
      for (std::uint64_t seed = 1; seed <= 5; ++seed) d.runs[v].push_back(dynamics_run(v, seed));
    }
    d.seconds = seconds_since(t0);
    return d;
  }();
  return cached;
}

Outcome concentration_dynamics() {
  const auto& d = dynamics_runs();
  const auto& grpo = d.runs.at(Variant::GRPO);
  const auto& simko = d.runs.at(Variant::SimKO);

  int collapsed = 0, tail_wins = 0;
  std::vector<double> g2_grpo, g2_simko, p1_grpo, p1_simko;
  for (std::size_t i = 0; i < grpo.size(); ++i) {
    if (grpo[i].geo2 * 10.0 <= grpo[i].geo2_initial) ++collapsed;
    if (simko[i].pass16 >= grpo[i].pass16 && simko[i].pass64 >= grpo[i].pass64) ++tail_wins;
    g2_grpo.push_back(grpo[i].geo2);
    g2_simko.push_back(simko[i].geo2);
    p1_grpo.push_back(grpo[i].pass1);
    p1_simko.push_back(simko[i].pass1);
  }
  long long smoothed = 0;
  for (const auto& r : simko) smoothed += r.smoothed;
  const bool a = collapsed == 5;
  const bool b = median(g2_simko) >= 10.0 * median(g2_grpo);
  const bool c = tail_wins >= 4;
  const bool dd = median(p1_simko) >= median(p1_grpo) - 0.02;
  const bool fast = d.seconds < 600.0;
  return {a && b && c && dd && fast,
          fmt("lr=%g: (a) GRPO rank-2 collapse >=10x on %d/5 seeds [%s]; (b) median final rank-2 SimKO %.3e vs GRPO "
              "%.3e, ratio %.2f >= 10 [%s]; (c) SimKO pass@16,64 >= GRPO on %d/5 seeds [%s]; (d) median pass@1 "
              "SimKO %.4f vs GRPO %.4f - 0.02 [%s]; SimKO smoothed tokens %lld; %.0f s < 600 s",
              kDynamicsLr, collapsed, a ? "ok" : "fail", median(g2_simko), median(g2_grpo),
              median(g2_simko) / median(g2_grpo), b ? "ok" : "fail", tail_wins, c ? "ok" : "fail", median(p1_simko),
              median(p1_grpo), dd ? "ok" : "fail", smoothed, d.seconds)};
}

Outcome psr_nsr_ordering() {
  const auto& d = dynamics_runs();
  auto med1 = [&](Variant v) {
    std::vector<double> g;
    for (const auto& r : d.runs.at(v)) g.push_back(r.geo1);
    return median(g);
  };
  const double psr = med1(Variant::PSR), grpo = med1(Variant::GRPO), nsr = med1(Variant::NSR);
  const bool upper = psr >= grpo, lower = grpo >= nsr;
  return {upper && lower, fmt("median final rank-1 geo-mean: PSR %.6f >= GRPO %.6f [%s] >= NSR %.6f [%s]", psr, grpo,
                              upper ? "ok" : "fail", nsr, lower ? "ok" : "fail")};
}

Outcome gating_calibration() {
  const TaskParams params = BranchChainParams{4, 8, 6, 11, 4};
  const TaskSpec task = make_task(params);
  const auto [beh, cur] = behavior_and_current(task, params, 31, 1.0, 0.05);
  const auto batch = sampled_batch(beh, task, 400, 8, 9);
  const auto entropies = batch_entropies(batch);
  std::set<double> distinct(entropies.begin(), entropies.end());

  double worst = 0.0;
  std::string fractions;
  for (double q : {0.5, 0.8, 0.9}) {
    const double f = gate_tokens(entropies, q).gated_fraction();
    worst = std::max(worst, std::abs(f - (1.0 - q)));
    fractions += fmt(" q=%.1f:%.4f", q, f);
  }

  // q = 1 against GRPO, on one assembled update and on a full training step.
  const PolicySnapshot snap(std::make_shared<const PolicyTable>(beh), SnapshotRole::Behavior);
  AlgorithmConfig grpo;
  grpo.variant = Variant::GRPO;
  AlgorithmConfig ungated;
  ungated.variant = Variant::SimKO;
  ungated.gate_quantile = 1.0;
  const auto gate = gate_tokens(entropies, 1.0);
  const auto a = assemble_update(batch, cur, snap, nullptr, grpo, gate);
  const auto b = assemble_update(batch, cur, snap, nullptr, ungated, gate);
  bool bitwise = testing::bitwise_equal(a.grads, b.grads) && a.surrogate_value == b.surrogate_value;

  ExperimentConfig c = base_config(params, 5);
  c.algorithm.lr = 3.0;
  c.algorithm.variant = Variant::GRPO;
  TabularPolicy pg(cur), ps(cur);
  ExperimentConfig cs = c;
  cs.algorithm.variant = Variant::SimKO;
  cs.algorithm.gate_quantile = 1.0;
  for (int step = 1; step <= 5; ++step) {
    train_step(c, task, pg, nullptr, step);
    train_step(cs, task, ps, nullptr, step);
  }
  bitwise = bitwise && pg.table() == ps.table();

  const bool pass = entropies.size() >= 10000 && worst <= 0.02 && bitwise;
  return {pass, fmt("%zu tokens (%zu distinct entropies), gated fraction%s, max |dev| %.4f <= 0.02; q=1 bitwise "
                    "equal to GRPO: %s",
                    entropies.size(), distinct.size(), fractions.c_str(), worst, bitwise ? "yes" : "no")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism_and_resume() {
  const fs::path root = fs::temp_directory_path() / "rlvr_acceptance" / "determinism";
  fs::remove_all(root);
  auto config = [&](const std::string& name) {
    ExperimentConfig c;
    c.task = BranchChainParams{4, 8, 6, 2, 3};
    c.algorithm.variant = Variant::SimKO;
    c.algorithm.lr = 10.0;
    c.algorithm.kl_beta = 0.01;
    c.algorithm.minibatches = 2;
    c.schedule.total_steps = 60;
    c.schedule.eval_every = 20;
    c.schedule.eval_n_samples = 64;
    c.schedule.eval_k_list = {1, 8, 64};
    c.schedule.init_logit_std = 0.5;
    c.schedule.seed = 99;
    c.io.checkpoint_every = 25;
    c.io.output_dir = (root / name).string();
    c.validate();
    return c;
  };
  const auto first = train(config("a"));
  const auto second = train(config("b"));
  const std::string reference = slurp(first.metrics_path);
  const bool identical = !reference.empty() && reference == slurp(second.metrics_path);

  const ExperimentConfig cut = config("c");
  TrainOptions stop;
  stop.stop_after = 40;
  train(cut, stop);
  TrainOptions resume;
  resume.resume = true;
  const auto resumed = train(cut, resume);
  const bool resumed_ok = slurp(resumed.metrics_path) == reference && resumed.policy == first.policy;
  return {identical && resumed_ok,
          fmt("two runs byte-identical: %s (%zu bytes); interrupted at step 40, resumed from step-25 checkpoint, "
              "stream identical: %s",
              identical ? "yes" : "no", reference.size(), resumed_ok ? "yes" : "no")};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "gradient correctness", gradient_correctness},
      {2, "gamma_pos value identity", gamma_pos_identity},
      {3, "pass@K estimator", pass_at_k_estimator},
      {4, "squeezing effect", squeezing},
      {5, "concentration dynamics", concentration_dynamics},
      {6, "PSR/NSR ordering", psr_nsr_ordering},
      {7, "gating calibration", gating_calibration},
      {8, "determinism and resume", determinism_and_resume},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
