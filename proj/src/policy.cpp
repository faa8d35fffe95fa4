// SPDX-License-Identifier: Apache-2.0

#include "rlvr/policy.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rlvr {

std::string to_string(const DecodingState& state) {
  std::ostringstream os;
  os << "(prompt=" << state.prompt_id << ", prefix=[";
  for (std::size_t i = 0; i < state.prefix.size(); ++i) os << (i ? "," : "") << state.prefix[i];
  os << "])";
  return os.str();
}

PolicyTable::PolicyTable(int vocab_size)
    : PolicyTable(vocab_size, Logits{std::vector<double>(static_cast<std::size_t>(vocab_size), 0.0)}) {}

PolicyTable::PolicyTable(int vocab_size, Logits default_logits)
    : vocab_size_(vocab_size), default_logits_(std::move(default_logits)) {
  if (vocab_size < 1) throw std::invalid_argument("policy: vocab_size must be >= 1");
  if (default_logits_.size() != static_cast<std::size_t>(vocab_size)) {
    throw std::invalid_argument("policy: default_logits length does not match vocab_size");
  }
}

const Logits& PolicyTable::logits(const DecodingState& state) const {
  auto it = table_.find(state);
  return it == table_.end() ? default_logits_ : it->second;
}

ProbDist PolicyTable::distribution(const DecodingState& state, double temperature) const {
  return softmax(logits(state), temperature);
}

void PolicyTable::set_logits(const DecodingState& state, Logits logits) {
  if (logits.size() != static_cast<std::size_t>(vocab_size_)) {
    throw std::invalid_argument("policy: logits length does not match vocab_size at " + to_string(state));
  }
  table_.insert_or_assign(state, std::move(logits));
}

Logits& PolicyTable::materialize(const DecodingState& state) {
  auto it = table_.find(state);
  if (it == table_.end()) it = table_.emplace(state, default_logits_).first;
  return it->second;
}

void TabularPolicy::apply_gradient(const GradMap& grads, double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("apply_gradient: lr must be positive");
  for (const auto& [state, grad] : grads) {
    if (grad.size() != static_cast<std::size_t>(vocab_size())) {
      throw std::invalid_argument("apply_gradient: gradient length mismatch at " + to_string(state));
    }
    for (double g : grad) {
      if (!std::isfinite(g)) throw std::invalid_argument("apply_gradient: non-finite gradient at " + to_string(state));
    }
  }
  for (const auto& [state, grad] : grads) {
    Logits& z = table_.materialize(state);
    for (std::size_t i = 0; i < grad.size(); ++i) z[i] += lr * grad[i];
  }
}

PolicySnapshot TabularPolicy::snapshot(SnapshotRole role) const {
  return PolicySnapshot(std::make_shared<const PolicyTable>(table_), role);
}

DecodingState Rollout::state_at(std::size_t position) const {
  return DecodingState{prompt_id, TokenSeq(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(position))};
}

TokenRecord sample_token(const PolicyTable& policy, const DecodingState& state, double temperature, Rng& rng,
                         int record_depth) {
  const ProbDist dist = policy.distribution(state, temperature);
  const double u = rng.uniform();
  TokenId chosen = static_cast<TokenId>(dist.size()) - 1;
  double cumulative = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    cumulative += dist[i];
    if (u < cumulative) {
      chosen = static_cast<TokenId>(i);
      break;
    }
  }
  // Rounding can leave u >= the final cumulative sum; fall back to the last
  // token with non-zero mass.
  while (dist[static_cast<std::size_t>(chosen)] <= 0.0 && chosen > 0) --chosen;

  TokenRecord rec;
  rec.token = chosen;
  rec.behavior_logprob = std::log(dist[static_cast<std::size_t>(chosen)]);
  rec.entropy_at_emit = entropy(dist);
  rec.topk = topk(dist, std::min(record_depth, static_cast<int>(dist.size())));
  rec.rank_of_emitted = rank_of(dist, chosen);
  return rec;
}

Rollout rollout(const PolicyTable& policy, const TaskSpec& task, int prompt_id, double temperature, Rng& rng,
                int record_depth) {
  if (!task.has_prompt(prompt_id)) throw std::invalid_argument("rollout: unknown prompt_id");
  if (task.vocab_size() != policy.vocab_size()) throw std::invalid_argument("rollout: vocabulary mismatch");
  Rollout out;
  out.prompt_id = prompt_id;
  DecodingState state{prompt_id, {}};
  const auto terminal = task.terminal_token();
  while (static_cast<int>(out.tokens.size()) < task.max_response_length()) {
    TokenRecord rec = sample_token(policy, state, temperature, rng, record_depth);
    const TokenId token = rec.token;
    out.tokens.push_back(token);
    out.records.push_back(std::move(rec));
    if (terminal && token == *terminal) break;
    state.prefix.push_back(token);
  }
  out.reward = verify(task, prompt_id, out.tokens).reward;
  return out;
}

nlohmann::json table_to_json(const PolicyTable& table) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [state, logits] : table.entries()) {
    entries.push_back({{"prompt", state.prompt_id}, {"prefix", state.prefix}, {"logits", logits.values}});
  }
  return {{"vocab_size", table.vocab_size()}, {"default_logits", table.default_logits().values}, {"states", entries}};
}

PolicyTable table_from_json(const nlohmann::json& j) {
  PolicyTable table(j.at("vocab_size").get<int>(), Logits{j.at("default_logits").get<std::vector<double>>()});
  for (const auto& e : j.at("states")) {
    DecodingState state{e.at("prompt").get<int>(), e.at("prefix").get<TokenSeq>()};
    table.set_logits(state, Logits{e.at("logits").get<std::vector<double>>()});
  }
  return table;
}

}  // namespace rlvr
