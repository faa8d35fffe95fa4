#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file core_math.hpp
 * @brief Numerically robust primitives over small vocabularies.
 *
 * Everything here works in natural log (nats). Probabilities are clamped at
 * kProbFloor before taking logs so rank-k log-probabilities stay finite even
 * when a distribution has collapsed.
 */

#include <cstddef>
#include <span>
#include <vector>

namespace rlvr {

using TokenId = int;

inline constexpr double kProbFloor = 1e-300;

/// Pre-softmax scores, one per vocabulary entry.
struct Logits {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  bool operator==(const Logits&) const = default;
};

/// Probability vector over the vocabulary.
struct ProbDist {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
};

/// The k highest-probability tokens, descending, ties broken by lower id.
struct TopKSet {
  std::vector<TokenId> indices;
  std::vector<double> probs;

  std::size_t size() const { return indices.size(); }
  bool contains(TokenId token) const;
};

/// log(sum(exp(x))) with max-shift. Returns -inf for an empty span.
double log_sum_exp(std::span<const double> values);

/// softmax(z / temperature). Throws std::invalid_argument on a non-finite
/// logit or temperature <= 0.
ProbDist softmax(std::span<const double> logits, double temperature = 1.0);
inline ProbDist softmax(const Logits& logits, double temperature = 1.0) {
  return softmax(std::span<const double>(logits.values), temperature);
}

/// Shannon entropy in nats, 0 ln 0 = 0.
double entropy(const ProbDist& dist);

/// Top-k under the deterministic (probability desc, id asc) order.
TopKSet topk(const ProbDist& dist, int k);

/// 1-based rank of `token` under the same order topk uses.
int rank_of(const ProbDist& dist, TokenId token);

/// ln C(n, r) via lgamma; -infinity when r > n.
double log_binomial(long long n, long long r);

/// ln(max(p, kProbFloor)).
double safe_log(double p);

/// Throws std::invalid_argument unless dist is a probability vector
/// (non-negative, sums to 1 within 1e-9).
void check_distribution(const ProbDist& dist);

}  // namespace rlvr
