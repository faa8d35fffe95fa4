#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file config.hpp
 * @brief Experiment configuration, read from an INI-style text file.
 *
 *   [task]       family = branch_chain | sum_grammar, plus family parameters
 *   [algorithm]  AlgorithmConfig fields
 *   [schedule]   total_steps, prompts_per_batch, eval cadence, seed
 *   [io]         output_dir, checkpoint_every
 *
 * Unknown sections or keys are errors. `schedule.seed` is mandatory.
 */

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rlvr/algorithms.hpp"
#include "rlvr/env.hpp"

namespace rlvr {

struct ScheduleConfig {
  int total_steps = 500;
  int prompts_per_batch = 8;
  int eval_every = 50;
  int eval_n_samples = 128;
  std::vector<int> eval_k_list{1, 2, 4, 8, 16, 32, 64, 128};
  std::optional<std::uint64_t> seed;
  int lambda_k_max = 3;
  int entropy_bins = 50;
  /// Std of seeded Gaussian noise on the initial logits of every state;
  /// 0 keeps the all-zero (uniform) initialization.
  double init_logit_std = 0.0;
};

struct IoConfig {
  std::string output_dir = "runs/default";
  int checkpoint_every = 50;
  bool record_wall_time = false;
};

struct ExperimentConfig {
  TaskParams task = BranchChainParams{};
  AlgorithmConfig algorithm;
  ScheduleConfig schedule;
  IoConfig io;

  /// Builds the task and checks every cross-block invariant.
  void validate() const;
  std::uint64_t seed() const;
};

/// Throws std::invalid_argument with the offending section/key on any error.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical INI text; parse_config(to_ini(c)) reproduces c.
std::string to_ini(const ExperimentConfig& config);

}  // namespace rlvr
