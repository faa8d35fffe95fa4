#pragma once

// SPDX-License-Identifier: Apache-2.0
//
// Small builders shared by the unit tests and the acceptance binary.

#include <random>

#include "rlvr/algorithms.hpp"
#include "rlvr/policy.hpp"

namespace rlvr::testing {

/// A record as sample_token would have produced it for `token` at `state`.
inline TokenRecord record_for(const PolicyTable& behavior, const DecodingState& state, TokenId token,
                              double temperature = 1.0, int depth = kDefaultRecordDepth) {
  const ProbDist d = behavior.distribution(state, temperature);
  TokenRecord r;
  r.token = token;
  r.behavior_logprob = std::log(d[static_cast<std::size_t>(token)]);
  r.entropy_at_emit = entropy(d);
  r.topk = topk(d, std::min(depth, static_cast<int>(d.size())));
  r.rank_of_emitted = rank_of(d, token);
  return r;
}

inline Rollout forced_rollout(const PolicyTable& behavior, int prompt, const TokenSeq& tokens, int reward = 0,
                              double temperature = 1.0) {
  Rollout r;
  r.prompt_id = prompt;
  r.reward = reward;
  for (std::size_t l = 0; l < tokens.size(); ++l) {
    const DecodingState s{prompt, TokenSeq(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(l))};
    r.tokens.push_back(tokens[l]);
    r.records.push_back(record_for(behavior, s, tokens[l], temperature));
  }
  return r;
}

inline Logits gaussian_logits(std::mt19937_64& gen, int vocab, double scale) {
  std::normal_distribution<double> n01;
  Logits z;
  for (int i = 0; i < vocab; ++i) z.values.push_back(scale * n01(gen));
  return z;
}

/// One group holding one single-token response (emitted at the prompt's
/// root state) with the given advantage.
inline std::vector<RolloutGroup> single_token_batch(const PolicyTable& behavior, int prompt, TokenId token,
                                                    double advantage) {
  RolloutGroup g;
  g.prompt_id = prompt;
  g.rollouts.push_back(forced_rollout(behavior, prompt, {token}));
  g.advantages.push_back(advantage);
  return {g};
}

inline bool bitwise_equal(const GradMap& a, const GradMap& b) {
  if (a.size() != b.size()) return false;
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
    if (!(ia->first == ib->first) || ia->second != ib->second) return false;
  }
  return true;
}

}  // namespace rlvr::testing
