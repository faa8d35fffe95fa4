#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file policy.hpp
 * @brief Prefix-keyed tabular softmax policy.
 *
 * A decoding state is (prompt id, response prefix). The policy stores one
 * logit vector per state it has been updated at; every other state reads
 * `default_logits`. Snapshots share an immutable copy of the table and are
 * used as the behavior policy (ratio denominator) and the KL reference.
 */

#include <compare>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlvr/core_math.hpp"
#include "rlvr/env.hpp"
#include "rlvr/rng.hpp"

namespace rlvr {

struct DecodingState {
  int prompt_id = 0;
  TokenSeq prefix;

  auto operator<=>(const DecodingState&) const = default;
  bool operator==(const DecodingState&) const = default;
};

std::string to_string(const DecodingState& state);

/// Logit-space gradients keyed by state. std::map keeps reductions in a fixed order.
using GradMap = std::map<DecodingState, std::vector<double>>;

class PolicyTable {
 public:
  explicit PolicyTable(int vocab_size);
  PolicyTable(int vocab_size, Logits default_logits);

  int vocab_size() const { return vocab_size_; }
  const Logits& default_logits() const { return default_logits_; }
  const std::map<DecodingState, Logits>& entries() const { return table_; }

  /// Stored logits for the state, or default_logits.
  const Logits& logits(const DecodingState& state) const;
  ProbDist distribution(const DecodingState& state, double temperature = 1.0) const;

  void set_logits(const DecodingState& state, Logits logits);
  Logits& materialize(const DecodingState& state);

  bool operator==(const PolicyTable&) const = default;

 private:
  int vocab_size_;
  Logits default_logits_;
  std::map<DecodingState, Logits> table_;
};

enum class SnapshotRole { Behavior, Reference };

class PolicySnapshot {
 public:
  PolicySnapshot(std::shared_ptr<const PolicyTable> table, SnapshotRole role)
      : table_(std::move(table)), role_(role) {}

  const PolicyTable& table() const { return *table_; }
  SnapshotRole role() const { return role_; }
  int vocab_size() const { return table_->vocab_size(); }
  ProbDist distribution(const DecodingState& state, double temperature = 1.0) const {
    return table_->distribution(state, temperature);
  }

 private:
  std::shared_ptr<const PolicyTable> table_;
  SnapshotRole role_;
};

class TabularPolicy {
 public:
  explicit TabularPolicy(int vocab_size) : table_(vocab_size) {}
  explicit TabularPolicy(PolicyTable table) : table_(std::move(table)) {}

  const PolicyTable& table() const { return table_; }
  int vocab_size() const { return table_.vocab_size(); }
  ProbDist distribution(const DecodingState& state, double temperature = 1.0) const {
    return table_.distribution(state, temperature);
  }
  void set_logits(const DecodingState& state, Logits logits) { table_.set_logits(state, std::move(logits)); }

  /// logits += lr * grad per state. Validates every entry first; on a
  /// non-finite or wrongly sized gradient nothing is applied and
  /// std::invalid_argument names the offending state.
  void apply_gradient(const GradMap& grads, double lr);

  PolicySnapshot snapshot(SnapshotRole role) const;

 private:
  PolicyTable table_;
};

struct TokenRecord {
  TokenId token = 0;
  double behavior_logprob = 0.0;
  double entropy_at_emit = 0.0;
  TopKSet topk;
  int rank_of_emitted = 1;
};

struct Rollout {
  int prompt_id = 0;
  TokenSeq tokens;
  std::vector<TokenRecord> records;
  int reward = 0;

  DecodingState state_at(std::size_t position) const;
};

inline constexpr int kDefaultRecordDepth = 6;

/// Samples one token by inverse CDF and records the emit-time distribution.
/// The record depth is clamped to the vocabulary size.
TokenRecord sample_token(const PolicyTable& policy, const DecodingState& state, double temperature, Rng& rng,
                         int record_depth = kDefaultRecordDepth);

/// Samples until the terminal token or max_response_length, then verifies.
Rollout rollout(const PolicyTable& policy, const TaskSpec& task, int prompt_id, double temperature, Rng& rng,
                int record_depth = kDefaultRecordDepth);

// Checkpoint (de)serialization of the table. Doubles round-trip exactly.
nlohmann::json table_to_json(const PolicyTable& table);
PolicyTable table_from_json(const nlohmann::json& j);

}  // namespace rlvr
