#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file metrics.hpp
 * @brief Concentration and exploration diagnostics.
 *
 * lambda_report: per-response mean log-probability of the rank-k candidate
 * (and of the sampled token) along generated trajectories, then averaged over
 * responses. Both the log averages and their exponentials (geometric-mean
 * probabilities) are reported.
 *
 * pass@K: the unbiased estimator 1 - C(n-c, K) / C(n, K) from n samples with
 * c correct, evaluated as a product of (1 - K/i) terms in log space.
 */

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "rlvr/policy.hpp"

namespace rlvr {

struct LambdaReport {
  double lambda_sampled = 0.0;
  std::vector<double> lambda_rank;  // index 0 is rank 1
  double geo_sampled = 0.0;
  std::vector<double> geo_rank;
  std::int64_t token_count = 0;
};

/// Throws std::invalid_argument when k_max exceeds a record's top-K depth or
/// the batch has no tokens.
LambdaReport lambda_report(std::span<const Rollout> batch, int k_max);

/// Requires 0 <= c <= n and 1 <= K <= n.
double pass_at_k_unbiased(int n, int c, int k);

struct PromptOutcome {
  int n = 0;
  int c = 0;
};

/// Mean of per-prompt unbiased estimates at each K. Any K above the smallest
/// n is an error.
std::vector<double> pass_at_k_curve(std::span<const PromptOutcome> outcomes, std::span<const int> k_list);

struct EntropyHistogram {
  std::vector<double> bin_edges;
  std::vector<std::int64_t> counts;
  double gated_fraction = 0.0;
  std::int64_t token_count = 0;
  double mean_entropy = 0.0;
};

/// `num_bins` uniform bins over [0, ln V].
std::vector<double> default_entropy_bins(int vocab_size, int num_bins = 50);

/// Bins are [e_i, e_{i+1}) with the last one closed; values outside the edges
/// are folded into the first/last bin. Edges must be strictly increasing.
EntropyHistogram entropy_histogram(std::span<const double> entropies, std::span<const double> bin_edges, double q);
EntropyHistogram entropy_histogram(std::span<const Rollout> batch, std::span<const double> bin_edges, double q);

}  // namespace rlvr
