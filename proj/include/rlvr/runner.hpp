#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file runner.hpp
 * @brief Seeded training loop, evaluation, checkpoints, plot export, gradcheck.
 *
 * Randomness is keyed, never sequential: the rollout for (step, group,
 * index) and the evaluation sample for (step, prompt, index) each draw from
 * their own stream derived from the experiment seed. A checkpoint therefore
 * only needs the seed and the next step to resume the exact stream.
 */

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlvr/algorithms.hpp"
#include "rlvr/config.hpp"
#include "rlvr/metrics.hpp"
#include "rlvr/policy.hpp"

namespace rlvr {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ExperimentConfig config;
  PolicyTable policy{1};
  std::optional<PolicyTable> reference;
  int next_step = 1;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct EvalResult {
  std::vector<int> k_list;
  std::vector<double> pass_at_k;
  std::vector<PromptOutcome> outcomes;
  LambdaReport lambda;
  double mean_reward = 0.0;
};

/// Samples n responses per prompt from a frozen copy of the policy; the
/// policy itself is never touched.
EvalResult evaluate(const PolicyTable& policy, const TaskSpec& task, int n, std::span<const int> k_list,
                    std::uint64_t seed, double temperature, int k_max, std::uint64_t stream = 0);

/// Fresh policy for a run. With schedule.init_logit_std > 0 every state
/// reachable within the response length gets N(0, std^2) logits drawn from
/// the experiment seed; otherwise all states start uniform.
TabularPolicy initial_policy(const ExperimentConfig& config, const TaskSpec& task);

struct TrainOptions {
  bool resume = false;
  /// Stop after this step without a final checkpoint (simulates an interruption).
  std::optional<int> stop_after;
};

struct TrainResult {
  int last_step = 0;
  std::filesystem::path metrics_path;
  std::filesystem::path checkpoint_path;
  PolicyTable policy{1};
};

inline constexpr const char* kMetricsFile = "metrics.jsonl";
inline constexpr const char* kCheckpointFile = "checkpoint.json";

/// Runs the configured schedule, appending one JSON row per step to
/// <output_dir>/metrics.jsonl. Throws std::runtime_error on a non-finite
/// update after writing a diagnostic row.
TrainResult train(const ExperimentConfig& config, const TrainOptions& options = {});

/// One training step on `policy` in place; returns its metrics row.
nlohmann::json train_step(const ExperimentConfig& config, const TaskSpec& task, TabularPolicy& policy,
                          const PolicySnapshot* reference, int step);

enum class PlotKind { Lambda, PassK, Entropy };
PlotKind plot_kind_from_string(const std::string& name);

struct ExportResult {
  std::filesystem::path csv_path;
  std::size_t rows_written = 0;
  std::size_t malformed_rows = 0;
};

/// Tidy CSV, one row per (step, series). Malformed JSONL rows are skipped
/// and counted.
ExportResult export_plot_data(const std::filesystem::path& metrics, PlotKind kind, const std::filesystem::path& out_dir);

struct GradCheckCase {
  std::string label;
  AlgorithmConfig config;
};

struct GradCheckSummary {
  std::string label;
  int trials = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

/// GRPO, PSR, NSR and SimKO over alpha in {0, 0.01, 0.3}, lambda in
/// {1, 1.1, 2}, K in {1, 3, 5}.
std::vector<GradCheckCase> default_gradcheck_cases();

/// Analytic update gradients against central differences on random
/// instances (random policies, behavior/current mismatch, KL on some trials).
std::vector<GradCheckSummary> gradcheck(std::span<const GradCheckCase> cases, int trials, std::uint64_t seed);

}  // namespace rlvr
