// SPDX-License-Identifier: Apache-2.0

#include "rlvr/env.hpp"

#include <algorithm>
#include <stdexcept>

#include "rlvr/rng.hpp"

namespace rlvr {

namespace {

constexpr std::uint64_t kMaxPathSpace = std::uint64_t{1} << 62;

std::uint64_t path_space(int branching, int depth) {
  std::uint64_t total = 1;
  for (int i = 0; i < depth; ++i) {
    if (total > kMaxPathSpace / static_cast<std::uint64_t>(branching)) return kMaxPathSpace + 1;
    total *= static_cast<std::uint64_t>(branching);
  }
  return total;
}

TokenSeq decode_path(std::uint64_t index, int branching, int depth) {
  TokenSeq seq(static_cast<std::size_t>(depth));
  for (int i = depth - 1; i >= 0; --i) {
    seq[static_cast<std::size_t>(i)] = static_cast<TokenId>(index % static_cast<std::uint64_t>(branching));
    index /= static_cast<std::uint64_t>(branching);
  }
  return seq;
}

// Floyd's algorithm: exactly `count` distinct draws from [0, space).
std::set<std::uint64_t> sample_without_replacement(std::uint64_t space, std::uint64_t count, Rng& rng) {
  std::set<std::uint64_t> chosen;
  for (std::uint64_t j = space - count; j < space; ++j) {
    const std::uint64_t t = rng.below(j + 1);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  return chosen;
}

}  // namespace

bool TaskSpec::has_prompt(int prompt_id) const {
  return std::find(prompts_.begin(), prompts_.end(), prompt_id) != prompts_.end();
}

TaskSpec make_task(const TaskParams& params) {
  TaskSpec task;
  task.params_ = params;
  if (const auto* sg = std::get_if<SumGrammarParams>(&params)) {
    if (sg->targets.empty()) throw std::invalid_argument("SumGrammar: targets must be non-empty");
    std::set<int> seen;
    for (int t : sg->targets) {
      if (t < 0 || t > 9) throw std::invalid_argument("SumGrammar: target outside 0..9");
      if (!seen.insert(t).second) throw std::invalid_argument("SumGrammar: duplicate target");
    }
    task.family_ = TaskFamily::SumGrammar;
    task.name_ = "sum_grammar";
    task.vocab_size_ = sum_grammar::kVocabSize;
    task.prompts_ = sg->targets;
    task.max_response_length_ = sum_grammar::kMaxResponseLength;
    task.terminal_token_ = sum_grammar::kEnd;
    return task;
  }

  const auto& bc = std::get<BranchChainParams>(params);
  if (bc.depth < 1) throw std::invalid_argument("BranchChain: depth must be >= 1");
  if (bc.branching < 2) throw std::invalid_argument("BranchChain: branching must be >= 2");
  if (bc.num_paths < 1) throw std::invalid_argument("BranchChain: num_paths must be >= 1");
  if (bc.num_prompts < 1) throw std::invalid_argument("BranchChain: num_prompts must be >= 1");
  const std::uint64_t space = path_space(bc.branching, bc.depth);
  if (space > kMaxPathSpace) throw std::invalid_argument("BranchChain: branching^depth too large");
  if (static_cast<std::uint64_t>(bc.num_paths) > space) {
    throw std::invalid_argument("BranchChain: num_paths exceeds branching^depth");
  }
  task.family_ = TaskFamily::BranchChain;
  task.name_ = "branch_chain";
  task.vocab_size_ = bc.branching;
  task.max_response_length_ = bc.depth;
  for (int prompt = 0; prompt < bc.num_prompts; ++prompt) {
    task.prompts_.push_back(prompt);
    Rng rng = Rng::keyed(bc.seed, {0x7061746873ULL, static_cast<std::uint64_t>(prompt)});
    std::set<TokenSeq> paths;
    for (std::uint64_t index : sample_without_replacement(space, static_cast<std::uint64_t>(bc.num_paths), rng)) {
      paths.insert(decode_path(index, bc.branching, bc.depth));
    }
    task.branch_paths_.emplace(prompt, std::move(paths));
  }
  return task;
}

Verdict verify(const TaskSpec& task, int prompt_id, const TokenSeq& tokens) {
  if (!task.has_prompt(prompt_id)) {
    throw std::invalid_argument("verify: unknown prompt_id " + std::to_string(prompt_id));
  }
  for (TokenId t : tokens) {
    if (t < 0 || t >= task.vocab_size()) throw std::invalid_argument("verify: token outside vocabulary");
  }
  if (task.family() == TaskFamily::SumGrammar) {
    using namespace sum_grammar;
    const bool well_formed = tokens.size() == 4 && tokens[0] <= 9 && tokens[1] == kPlus &&
                             tokens[2] <= 9 && tokens[3] == kEnd;
    return Verdict{well_formed && tokens[0] + tokens[2] == prompt_id ? 1 : 0};
  }
  return Verdict{task.branch_paths_.at(prompt_id).count(tokens) ? 1 : 0};
}

std::set<TokenSeq> enumerate_correct(const TaskSpec& task, int prompt_id) {
  if (!task.has_prompt(prompt_id)) {
    throw std::invalid_argument("enumerate_correct: unknown prompt_id " + std::to_string(prompt_id));
  }
  if (task.family() == TaskFamily::BranchChain) return task.branch_paths_.at(prompt_id);
  std::set<TokenSeq> out;
  for (int a = 0; a <= prompt_id; ++a) {
    out.insert({a, sum_grammar::kPlus, prompt_id - a, sum_grammar::kEnd});
  }
  return out;
}

std::string to_string(TaskFamily family) {
  return family == TaskFamily::SumGrammar ? "sum_grammar" : "branch_chain";
}

TaskFamily task_family_from_string(const std::string& name) {
  if (name == "sum_grammar") return TaskFamily::SumGrammar;
  if (name == "branch_chain") return TaskFamily::BranchChain;
  throw std::invalid_argument("unknown task family '" + name + "'");
}

}  // namespace rlvr
