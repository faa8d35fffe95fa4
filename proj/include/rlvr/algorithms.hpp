#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file algorithms.hpp
 * @brief Group-relative policy updates: GRPO, PSR, NSR and SimKO.
 *
 * All four share one clipped surrogate
 *
 *   J = 1/B sum_groups 1/G sum_i 1/|y_i| sum_l
 *         [ min(r A, clip(r, 1-eps, 1+eps) A) - beta KL(pi || pi_ref) ]
 *
 * and differ only in which tokens contribute and in the effective ratio r:
 *
 *   - GRPO: r = gamma = pi(y|s) / pi_behavior(y|s) for every token.
 *   - PSR / NSR: GRPO restricted to A > 0 / A < 0 tokens.
 *   - SimKO: for tokens whose emit-time entropy exceeds the batch gate
 *     threshold, r = gamma_pos when A > 0 (top-K label-smoothed gradient with
 *     unchanged value) and r = gamma_neg when A < 0 (lambda * gamma if the
 *     token is rank 1 under the current policy). Other tokens use gamma.
 *
 * Gradients are analytic and expressed in logit space per decoding state, in
 * the ascent direction, so TabularPolicy::apply_gradient can add them as is.
 * The ratio is modified first and clipped second.
 */

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rlvr/core_math.hpp"
#include "rlvr/policy.hpp"

namespace rlvr {

enum class Variant { GRPO, PSR, NSR, SimKO };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

struct AlgorithmConfig {
  Variant variant = Variant::SimKO;
  double alpha = 0.01;
  int smoothing_k = 3;
  double lambda_top1 = 1.1;
  double gate_quantile = 0.8;
  double clip_eps = 0.2;
  double kl_beta = 0.0;
  int group_size = 8;
  double temperature = 1.0;
  double lr = 0.1;
  double adv_std_eps = 1e-6;
  int minibatches = 1;
  int simko_warmup_steps = 0;
  int record_depth = kDefaultRecordDepth;

  /// Throws std::invalid_argument on any out-of-range field.
  void validate(int vocab_size) const;
};

struct RolloutGroup {
  int prompt_id = 0;
  std::vector<Rollout> rollouts;
  std::vector<double> advantages;
};

/// Per-token gate over a batch, flattened in (group, rollout, position) order.
struct GateMask {
  double threshold_tau = 0.0;
  std::vector<std::uint8_t> gated;

  double gated_fraction() const;
  GateMask slice(std::size_t begin, std::size_t count) const;
};

struct UpdateCounts {
  std::int64_t tokens = 0;
  std::int64_t gated = 0;
  std::int64_t clipped = 0;
  std::int64_t positive = 0;
  std::int64_t negative = 0;
  std::int64_t zero_advantage = 0;
  std::int64_t masked = 0;     // dropped by the PSR/NSR sign filter
  std::int64_t smoothed = 0;   // SimKO gamma_pos applied
  std::int64_t amplified = 0;  // SimKO gamma_neg with lambda applied (rank-1 negative)
};

struct UpdateReport {
  double surrogate_value = 0.0;
  GradMap grads;
  UpdateCounts counts;
};

/// (r - mean) / (population std + eps); all-equal rewards give exact zeros.
std::vector<double> compute_advantages(std::span<const double> rewards, double adv_std_eps);

/// Emit-time entropies of every token in batch order.
std::vector<double> batch_entropies(std::span<const RolloutGroup> batch);
std::size_t batch_token_count(std::span<const RolloutGroup> batch);

/// tau is the linearly interpolated q-quantile; q = 0 gates everything and
/// q = 1 gates nothing. Throws std::invalid_argument on an empty batch.
GateMask gate_tokens(std::span<const double> entropies, double q);

double gamma(const PolicyTable& current, const PolicySnapshot& behavior, const DecodingState& state, TokenId token,
             double temperature = 1.0);

/// pi - e_token: logit gradient of -log pi(token).
std::vector<double> g_term(const ProbDist& dist, TokenId token);

/// pi - ((1 - alpha) e_token + alpha/K sum_{k in topK(pi)} e_k).
std::vector<double> g_tilde_term(const ProbDist& dist, TokenId token, double alpha, int smoothing_k);

struct GammaPos {
  double value = 0.0;
  /// sg(gamma) * g_tilde_term. The logit gradient of value is
  /// -grad_direction / temperature.
  std::vector<double> grad_direction;
};

/// (1 - alpha) gamma + alpha/K sum_k sg(gamma / gamma_k) gamma_k, top-K taken
/// from the current distribution at the state.
GammaPos gamma_pos(const PolicyTable& current, const PolicySnapshot& behavior, const DecodingState& state,
                   TokenId token, double alpha, int smoothing_k, double temperature = 1.0);

double gamma_neg(double gamma_value, int rank_of_emitted, double lambda_top1);

/**
 * Builds the logit-space ascent gradient of the clipped surrogate over a
 * batch of groups. `gate` must cover exactly the batch's tokens in batch
 * order; `reference` may be null when kl_beta is 0.
 *
 * Throws std::runtime_error naming (prompt, rollout, token) on any
 * non-finite intermediate.
 */
UpdateReport assemble_update(std::span<const RolloutGroup> batch, const PolicyTable& current,
                             const PolicySnapshot& behavior, const PolicySnapshot* reference,
                             const AlgorithmConfig& config, const GateMask& gate);

}  // namespace rlvr
