#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file oracles.hpp
 * @brief Brute-force references for tests, gradcheck and acceptance.
 *
 * Nothing in here calls the analytic gradient code in algorithms.cpp; the
 * surrogate oracle re-evaluates the objective from logits with every
 * stop-gradient factor, top-K set and rank frozen at the base point.
 */

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "rlvr/algorithms.hpp"
#include "rlvr/env.hpp"
#include "rlvr/policy.hpp"

namespace rlvr::oracles {

using ScalarObjective = std::function<double(std::span<const double>)>;

/// Central differences (f(z + h e_i) - f(z - h e_i)) / 2h. Throws
/// std::runtime_error if f is non-finite at any probe point.
std::vector<double> finite_diff_grad(const ScalarObjective& f, std::span<const double> base, double h = 1e-5);

struct EnumeratedPolicyDistribution {
  std::map<TokenSeq, double> sequences;
  double total_mass = 0.0;
  double correct_mass = 0.0;
};

inline constexpr std::uint64_t kDefaultEnumerationCap = 1'000'000;

/// Exact probability (T = 1) of every complete response. Refuses with
/// std::length_error when V^max_length exceeds `cap`.
EnumeratedPolicyDistribution enumerate_sequences(const PolicyTable& policy, const TaskSpec& task, int prompt_id,
                                                 std::uint64_t cap = kDefaultEnumerationCap);

/// 1 - (1 - p)^K.
double exact_pass_at_k_sampling(double correct_mass, int k);

struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

inline constexpr int kSubsetOracleMaxN = 12;

/// Fraction of K-subsets of the outcomes containing a success, by exhaustive
/// enumeration. Refuses n > 12.
Rational pass_at_k_subset_oracle(std::span<const bool> outcomes, int k);

/**
 * Value-only re-implementation of the clipped surrogate with stop-gradient
 * factors frozen at the base policy. Its finite-difference gradient is what
 * the analytic update must match.
 */
class SurrogateOracle {
 public:
  static SurrogateOracle freeze(std::span<const RolloutGroup> batch, const PolicyTable& base,
                                const PolicySnapshot& behavior, const PolicySnapshot* reference,
                                const AlgorithmConfig& config, const GateMask& gate);

  double evaluate(const PolicyTable& current) const;

 private:
  enum class Kind { Plain, Positive, NegativeTop1 };
  struct Term {
    DecodingState state;
    TokenId token = 0;
    double advantage = 0.0;
    double weight = 0.0;
    Kind kind = Kind::Plain;
    double behavior_prob = 0.0;
    std::vector<TokenId> topk;
    std::vector<double> topk_behavior_probs;
    std::vector<double> topk_frozen;  // gamma / gamma_k at the base point
    std::vector<double> reference_probs;
  };

  AlgorithmConfig config_;
  std::vector<Term> terms_;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t states_checked = 0;
};

/// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||)
/// over every state the batch visits.
GradCheckResult check_update_gradient(std::span<const RolloutGroup> batch, const PolicyTable& current,
                                      const PolicySnapshot& behavior, const PolicySnapshot* reference,
                                      const AlgorithmConfig& config, const GateMask& gate, double h = 1e-5);

}  // namespace rlvr::oracles
