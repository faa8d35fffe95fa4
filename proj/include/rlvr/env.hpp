#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file env.hpp
 * @brief Synthetic token tasks with a binary verifier.
 *
 * Two families:
 *  - SumGrammar: response "a + b <end>" over digits; correct iff a + b equals
 *    the prompt's target. Target t has t + 1 correct responses.
 *  - BranchChain: fixed-length paths over `branching` tokens; each prompt has
 *    `num_paths` correct paths placed uniformly at random from a seed. There
 *    is no terminal token, every response has exactly `depth` tokens.
 */

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "rlvr/core_math.hpp"

namespace rlvr {

using TokenSeq = std::vector<TokenId>;

enum class TaskFamily { SumGrammar, BranchChain };

struct SumGrammarParams {
  std::vector<int> targets;
};

struct BranchChainParams {
  int depth = 4;
  int branching = 8;
  int num_paths = 6;
  std::uint64_t seed = 0;
  int num_prompts = 1;
};

using TaskParams = std::variant<SumGrammarParams, BranchChainParams>;

namespace sum_grammar {
inline constexpr int kVocabSize = 13;
inline constexpr TokenId kPlus = 10;
inline constexpr TokenId kEnd = 11;
inline constexpr TokenId kPromptMarker = 12;
inline constexpr int kMaxResponseLength = 4;
}  // namespace sum_grammar

struct Verdict {
  int reward = 0;
};

class TaskSpec {
 public:
  TaskFamily family() const { return family_; }
  const std::string& name() const { return name_; }
  int vocab_size() const { return vocab_size_; }
  const std::vector<int>& prompts() const { return prompts_; }
  int max_response_length() const { return max_response_length_; }
  std::optional<TokenId> terminal_token() const { return terminal_token_; }
  const TaskParams& params() const { return params_; }
  bool has_prompt(int prompt_id) const;

 private:
  friend TaskSpec make_task(const TaskParams& params);
  friend std::set<TokenSeq> enumerate_correct(const TaskSpec& task, int prompt_id);
  friend Verdict verify(const TaskSpec& task, int prompt_id, const TokenSeq& tokens);

  TaskFamily family_ = TaskFamily::SumGrammar;
  std::string name_;
  int vocab_size_ = 0;
  std::vector<int> prompts_;
  int max_response_length_ = 0;
  std::optional<TokenId> terminal_token_;
  TaskParams params_;
  std::map<int, std::set<TokenSeq>> branch_paths_;
};

/// Throws std::invalid_argument on empty/out-of-range targets or
/// num_paths > branching^depth.
TaskSpec make_task(const TaskParams& params);

/// Throws std::invalid_argument for an unknown prompt or out-of-vocabulary token.
Verdict verify(const TaskSpec& task, int prompt_id, const TokenSeq& tokens);

std::set<TokenSeq> enumerate_correct(const TaskSpec& task, int prompt_id);

std::string to_string(TaskFamily family);
TaskFamily task_family_from_string(const std::string& name);

}  // namespace rlvr
