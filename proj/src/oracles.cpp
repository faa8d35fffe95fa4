// SPDX-License-Identifier: Apache-2.0

#include "rlvr/oracles.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

namespace rlvr::oracles {

std::vector<double> finite_diff_grad(const ScalarObjective& f, std::span<const double> base, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be positive");
  std::vector<double> point(base.begin(), base.end());
  std::vector<double> grad(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double up = f(point);
    point[i] = saved - h;
    const double down = f(point);
    point[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::runtime_error("finite_diff_grad: objective not finite at coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

namespace {

void enumerate_from(const PolicyTable& policy, const TaskSpec& task, DecodingState& state, double mass,
                    EnumeratedPolicyDistribution& out) {
  const ProbDist dist = policy.distribution(state, 1.0);
  const auto terminal = task.terminal_token();
  for (TokenId t = 0; t < policy.vocab_size(); ++t) {
    const double p = mass * dist[static_cast<std::size_t>(t)];
    state.prefix.push_back(t);
    const bool done = (terminal && t == *terminal) ||
                      static_cast<int>(state.prefix.size()) == task.max_response_length();
    if (done) {
      out.sequences[state.prefix] += p;
      out.total_mass += p;
      if (verify(task, state.prompt_id, state.prefix).reward == 1) out.correct_mass += p;
    } else {
      enumerate_from(policy, task, state, p, out);
    }
    state.prefix.pop_back();
  }
}

}  // namespace

EnumeratedPolicyDistribution enumerate_sequences(const PolicyTable& policy, const TaskSpec& task, int prompt_id,
                                                 std::uint64_t cap) {
  if (policy.vocab_size() != task.vocab_size()) throw std::invalid_argument("enumerate_sequences: vocabulary mismatch");
  if (!task.has_prompt(prompt_id)) throw std::invalid_argument("enumerate_sequences: unknown prompt");
  double size = 1.0;
  for (int i = 0; i < task.max_response_length(); ++i) size *= task.vocab_size();
  if (size > static_cast<double>(cap)) {
    throw std::length_error("enumerate_sequences: about " + std::to_string(static_cast<long double>(size)) +
                            " sequences exceeds cap " + std::to_string(cap));
  }
  EnumeratedPolicyDistribution out;
  DecodingState root{prompt_id, {}};
  enumerate_from(policy, task, root, 1.0, out);
  return out;
}

double exact_pass_at_k_sampling(double correct_mass, int k) {
  if (!(correct_mass >= 0.0 && correct_mass <= 1.0)) throw std::invalid_argument("exact_pass_at_k: p outside [0,1]");
  if (k < 1) throw std::invalid_argument("exact_pass_at_k: K must be >= 1");
  return 1.0 - std::pow(1.0 - correct_mass, k);
}

Rational pass_at_k_subset_oracle(std::span<const bool> outcomes, int k) {
  const int n = static_cast<int>(outcomes.size());
  if (n > kSubsetOracleMaxN) throw std::invalid_argument("pass_at_k_subset_oracle: n above enumeration bound");
  if (k < 1 || k > n) throw std::invalid_argument("pass_at_k_subset_oracle: need 1 <= K <= n");
  std::uint32_t success_mask = 0;
  for (int i = 0; i < n; ++i) {
    if (outcomes[static_cast<std::size_t>(i)]) success_mask |= 1u << i;
  }
  Rational r{0, 0};
  for (std::uint32_t subset = 0; subset < (1u << n); ++subset) {
    if (std::popcount(subset) != k) continue;
    ++r.den;
    if (subset & success_mask) ++r.num;
  }
  return r;
}

SurrogateOracle SurrogateOracle::freeze(std::span<const RolloutGroup> batch, const PolicyTable& base,
                                        const PolicySnapshot& behavior, const PolicySnapshot* reference,
                                        const AlgorithmConfig& config, const GateMask& gate) {
  SurrogateOracle oracle;
  oracle.config_ = config;
  const double t = config.temperature;
  std::size_t flat = 0;
  for (const auto& group : batch) {
    for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
      const Rollout& r = group.rollouts[i];
      const double adv = group.advantages.at(i);
      for (std::size_t l = 0; l < r.tokens.size(); ++l, ++flat) {
        if ((config.variant == Variant::PSR && adv < 0.0) || (config.variant == Variant::NSR && adv > 0.0)) continue;
        Term term;
        term.state = DecodingState{r.prompt_id, TokenSeq(r.tokens.begin(), r.tokens.begin() + static_cast<std::ptrdiff_t>(l))};
        term.token = r.tokens[l];
        term.advantage = adv;
        term.weight = 1.0 / (static_cast<double>(batch.size()) * static_cast<double>(group.rollouts.size()) *
                             static_cast<double>(r.tokens.size()));
        const ProbDist cur = base.distribution(term.state, t);
        const ProbDist beh = behavior.distribution(term.state, t);
        term.behavior_prob = beh[static_cast<std::size_t>(term.token)];
        const bool gated = gate.gated.at(flat) != 0;
        if (config.variant == Variant::SimKO && gated && adv > 0.0) {
          term.kind = Kind::Positive;
          const double g = cur[static_cast<std::size_t>(term.token)] / term.behavior_prob;
          for (TokenId k : topk(cur, config.smoothing_k).indices) {
            const auto ki = static_cast<std::size_t>(k);
            term.topk.push_back(k);
            term.topk_behavior_probs.push_back(beh[ki]);
            term.topk_frozen.push_back(g / (cur[ki] / beh[ki]));
          }
        } else if (config.variant == Variant::SimKO && gated && adv < 0.0 && rank_of(cur, term.token) == 1) {
          term.kind = Kind::NegativeTop1;
        }
        if (config.kl_beta > 0.0) term.reference_probs = reference->distribution(term.state, t).probs;
        oracle.terms_.push_back(std::move(term));
      }
    }
  }
  return oracle;
}

double SurrogateOracle::evaluate(const PolicyTable& current) const {
  const double t = config_.temperature;
  const double lo = 1.0 - config_.clip_eps;
  const double hi = 1.0 + config_.clip_eps;
  double total = 0.0;
  for (const Term& term : terms_) {
    const ProbDist pi = current.distribution(term.state, t);
    const double g = pi[static_cast<std::size_t>(term.token)] / term.behavior_prob;
    double ratio = g;
    if (term.kind == Kind::Positive) {
      double smoothed = 0.0;
      for (std::size_t j = 0; j < term.topk.size(); ++j) {
        const double g_k = pi[static_cast<std::size_t>(term.topk[j])] / term.topk_behavior_probs[j];
        smoothed += term.topk_frozen[j] * g_k;
      }
      ratio = (1.0 - config_.alpha) * g + config_.alpha / static_cast<double>(term.topk.size()) * smoothed;
    } else if (term.kind == Kind::NegativeTop1) {
      ratio = config_.lambda_top1 * g;
    }
    const double a = term.advantage;
    double value = std::min(ratio * a, std::clamp(ratio, lo, hi) * a);
    if (config_.kl_beta > 0.0) {
      double kl = 0.0;
      for (std::size_t v = 0; v < pi.size(); ++v) {
        if (pi[v] > 0.0) kl += pi[v] * (std::log(pi[v]) - std::log(term.reference_probs[v]));
      }
      value -= config_.kl_beta * kl;
    }
    total += term.weight * value;
  }
  return total;
}

GradCheckResult check_update_gradient(std::span<const RolloutGroup> batch, const PolicyTable& current,
                                      const PolicySnapshot& behavior, const PolicySnapshot* reference,
                                      const AlgorithmConfig& config, const GateMask& gate, double h) {
  const UpdateReport report = assemble_update(batch, current, behavior, reference, config, gate);
  const SurrogateOracle oracle = SurrogateOracle::freeze(batch, current, behavior, reference, config, gate);

  std::set<DecodingState> visited;
  for (const auto& group : batch) {
    for (const auto& r : group.rollouts) {
      for (std::size_t l = 0; l < r.tokens.size(); ++l) visited.insert(r.state_at(l));
    }
  }

  GradCheckResult result;
  double diff_sq = 0.0, analytic_sq = 0.0, numeric_sq = 0.0;
  PolicyTable probe = current;
  const std::vector<double> zeros(static_cast<std::size_t>(current.vocab_size()), 0.0);
  for (const DecodingState& state : visited) {
    const Logits base = current.logits(state);
    auto objective = [&](std::span<const double> z) {
      probe.set_logits(state, Logits{std::vector<double>(z.begin(), z.end())});
      return oracle.evaluate(probe);
    };
    const std::vector<double> numeric = finite_diff_grad(objective, base.values, h);
    probe.set_logits(state, base);
    auto it = report.grads.find(state);
    const std::vector<double>& analytic = it == report.grads.end() ? zeros : it->second;
    for (std::size_t j = 0; j < numeric.size(); ++j) {
      const double d = analytic[j] - numeric[j];
      diff_sq += d * d;
      analytic_sq += analytic[j] * analytic[j];
      numeric_sq += numeric[j] * numeric[j];
      result.max_abs_error = std::max(result.max_abs_error, std::abs(d));
    }
    ++result.states_checked;
  }
  const double scale = std::max(std::sqrt(analytic_sq), std::sqrt(numeric_sq));
  result.max_rel_error = std::sqrt(diff_sq) / std::max(scale, 1e-8);
  return result;
}

}  // namespace rlvr::oracles
