// SPDX-License-Identifier: Apache-2.0

#include "rlvr/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace rlvr {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::GRPO: return "grpo";
    case Variant::PSR: return "psr";
    case Variant::NSR: return "nsr";
    case Variant::SimKO: return "simko";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "grpo") return Variant::GRPO;
  if (lower == "psr") return Variant::PSR;
  if (lower == "nsr") return Variant::NSR;
  if (lower == "simko") return Variant::SimKO;
  throw std::invalid_argument("unknown variant '" + name + "' (expected grpo|psr|nsr|simko)");
}

void AlgorithmConfig::validate(int vocab_size) const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("algorithm config: " + what); };
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must be in [0, 1]");
  if (smoothing_k < 1 || smoothing_k > vocab_size) fail("smoothing_k must be in [1, vocab_size]");
  if (!(lambda_top1 >= 1.0) || !std::isfinite(lambda_top1)) fail("lambda_top1 must be >= 1");
  if (!(gate_quantile >= 0.0 && gate_quantile <= 1.0)) fail("gate_quantile must be in [0, 1]");
  if (!(clip_eps > 0.0) || !std::isfinite(clip_eps)) fail("clip_eps must be > 0");
  if (!(kl_beta >= 0.0) || !std::isfinite(kl_beta)) fail("kl_beta must be >= 0");
  if (group_size < 2) fail("group_size must be >= 2");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) fail("temperature must be > 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be > 0");
  if (!(adv_std_eps >= 0.0) || !std::isfinite(adv_std_eps)) fail("adv_std_eps must be >= 0");
  if (minibatches < 1) fail("minibatches must be >= 1");
  if (simko_warmup_steps < 0) fail("simko_warmup_steps must be >= 0");
  if (record_depth < 1) fail("record_depth must be >= 1");
}

double GateMask::gated_fraction() const {
  if (gated.empty()) return 0.0;
  const auto n = std::count(gated.begin(), gated.end(), std::uint8_t{1});
  return static_cast<double>(n) / static_cast<double>(gated.size());
}

GateMask GateMask::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > gated.size()) throw std::out_of_range("GateMask::slice out of range");
  GateMask out;
  out.threshold_tau = threshold_tau;
  out.gated.assign(gated.begin() + static_cast<std::ptrdiff_t>(begin),
                   gated.begin() + static_cast<std::ptrdiff_t>(begin + count));
  return out;
}

std::vector<double> compute_advantages(std::span<const double> rewards, double adv_std_eps) {
  if (rewards.size() < 2) throw std::invalid_argument("compute_advantages: group size must be >= 2");
  std::vector<double> out(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; })) return out;
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double stddev = std::sqrt(var / n);
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / (stddev + adv_std_eps);
  return out;
}

std::vector<double> batch_entropies(std::span<const RolloutGroup> batch) {
  std::vector<double> out;
  for (const auto& group : batch) {
    for (const auto& r : group.rollouts) {
      for (const auto& rec : r.records) out.push_back(rec.entropy_at_emit);
    }
  }
  return out;
}

std::size_t batch_token_count(std::span<const RolloutGroup> batch) {
  std::size_t n = 0;
  for (const auto& group : batch) {
    for (const auto& r : group.rollouts) n += r.records.size();
  }
  return n;
}

GateMask gate_tokens(std::span<const double> entropies, double q) {
  if (entropies.empty()) throw std::invalid_argument("gate_tokens: empty batch");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("gate_tokens: q must be in [0, 1]");
  GateMask mask;
  if (q == 0.0) {
    mask.threshold_tau = -std::numeric_limits<double>::infinity();
  } else if (q == 1.0) {
    mask.threshold_tau = std::numeric_limits<double>::infinity();
  } else {
    std::vector<double> sorted(entropies.begin(), entropies.end());
    std::sort(sorted.begin(), sorted.end());
    const double h = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    mask.threshold_tau = sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  }
  mask.gated.reserve(entropies.size());
  for (double e : entropies) mask.gated.push_back(e > mask.threshold_tau ? 1 : 0);
  return mask;
}

double gamma(const PolicyTable& current, const PolicySnapshot& behavior, const DecodingState& state, TokenId token,
             double temperature) {
  const auto y = static_cast<std::size_t>(token);
  return current.distribution(state, temperature)[y] / behavior.distribution(state, temperature)[y];
}

std::vector<double> g_term(const ProbDist& dist, TokenId token) {
  std::vector<double> out(dist.probs);
  out[static_cast<std::size_t>(token)] -= 1.0;
  return out;
}

std::vector<double> g_tilde_term(const ProbDist& dist, TokenId token, double alpha, int smoothing_k) {
  const TopKSet top = topk(dist, smoothing_k);
  std::vector<double> target(dist.size(), 0.0);
  target[static_cast<std::size_t>(token)] = 1.0 - alpha;
  const double share = alpha / static_cast<double>(smoothing_k);
  for (TokenId k : top.indices) target[static_cast<std::size_t>(k)] += share;
  std::vector<double> out(dist.size());
  for (std::size_t i = 0; i < dist.size(); ++i) out[i] = dist[i] - target[i];
  return out;
}

GammaPos gamma_pos(const PolicyTable& current, const PolicySnapshot& behavior, const DecodingState& state,
                   TokenId token, double alpha, int smoothing_k, double temperature) {
  const ProbDist cur = current.distribution(state, temperature);
  const ProbDist beh = behavior.distribution(state, temperature);
  const auto y = static_cast<std::size_t>(token);
  const double g = cur[y] / beh[y];

  // Each summand is sg(g / g_k) * g_k: its value is g, its gradient is that
  // of g_k rescaled by the frozen factor.
  const TopKSet top = topk(cur, smoothing_k);
  double smoothed = 0.0;
  for (TokenId k : top.indices) {
    const auto ki = static_cast<std::size_t>(k);
    const double g_k = cur[ki] / beh[ki];
    const double frozen = g / g_k;
    smoothed += frozen * g_k;
  }
  GammaPos out;
  out.value = (1.0 - alpha) * g + alpha / static_cast<double>(top.size()) * smoothed;
  out.grad_direction = g_tilde_term(cur, token, alpha, smoothing_k);
  for (double& d : out.grad_direction) d = g * d;
  return out;
}

double gamma_neg(double gamma_value, int rank_of_emitted, double lambda_top1) {
  return rank_of_emitted == 1 ? lambda_top1 * gamma_value : gamma_value;
}

namespace {

[[noreturn]] void non_finite(int prompt, std::size_t rollout_index, std::size_t position, const char* what) {
  std::ostringstream os;
  os << "assemble_update: non-finite " << what << " at prompt " << prompt << ", rollout " << rollout_index
     << ", token " << position;
  throw std::runtime_error(os.str());
}

}  // namespace

UpdateReport assemble_update(std::span<const RolloutGroup> batch, const PolicyTable& current,
                             const PolicySnapshot& behavior, const PolicySnapshot* reference,
                             const AlgorithmConfig& config, const GateMask& gate) {
  if (gate.gated.size() != batch_token_count(batch)) {
    throw std::invalid_argument("assemble_update: gate mask does not match batch token count");
  }
  const bool use_kl = config.kl_beta > 0.0;
  if (use_kl && reference == nullptr) throw std::invalid_argument("assemble_update: kl_beta > 0 needs a reference");

  const double temperature = config.temperature;
  const double lo = 1.0 - config.clip_eps;
  const double hi = 1.0 + config.clip_eps;
  const auto vocab = static_cast<std::size_t>(current.vocab_size());
  const double num_groups = static_cast<double>(batch.size());

  UpdateReport report;
  std::size_t flat = 0;
  for (const auto& group : batch) {
    if (group.advantages.size() != group.rollouts.size()) {
      throw std::invalid_argument("assemble_update: advantages missing for a group");
    }
    const double group_size = static_cast<double>(group.rollouts.size());
    for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
      const Rollout& r = group.rollouts[i];
      const double adv = group.advantages[i];
      const double weight = 1.0 / (num_groups * group_size * static_cast<double>(r.records.size()));
      for (std::size_t l = 0; l < r.records.size(); ++l, ++flat) {
        ++report.counts.tokens;
        const bool gated = gate.gated[flat] != 0;
        if (gated) ++report.counts.gated;
        if (adv > 0.0) ++report.counts.positive;
        else if (adv < 0.0) ++report.counts.negative;
        else ++report.counts.zero_advantage;

        if ((config.variant == Variant::PSR && adv < 0.0) || (config.variant == Variant::NSR && adv > 0.0)) {
          ++report.counts.masked;
          continue;
        }
        if (adv == 0.0 && !use_kl) continue;

        const DecodingState state = r.state_at(l);
        const TokenId y = r.tokens[l];
        const ProbDist dist = current.distribution(state, temperature);
        const double ratio = gamma(current, behavior, state, y, temperature);
        if (!std::isfinite(ratio)) non_finite(r.prompt_id, i, l, "ratio");

        double ratio_value = ratio;
        double coef = ratio;
        std::vector<double> scaled;  // coef * direction, direction = -(d log-prob / dz) * T
        if (config.variant == Variant::SimKO && gated && adv > 0.0) {
          GammaPos gp = gamma_pos(current, behavior, state, y, config.alpha, config.smoothing_k, temperature);
          ratio_value = gp.value;
          scaled = std::move(gp.grad_direction);
          ++report.counts.smoothed;
        } else {
          if (config.variant == Variant::SimKO && gated && adv < 0.0) {
            ratio_value = gamma_neg(ratio, rank_of(dist, y), config.lambda_top1);
            coef = ratio_value;
            if (rank_of(dist, y) == 1) ++report.counts.amplified;
          }
          scaled = g_term(dist, y);
          for (double& d : scaled) d = coef * d;
        }

        double term = 0.0;
        bool active = false;
        if (adv != 0.0) {
          const double unclipped = ratio_value * adv;
          const double clipped = std::clamp(ratio_value, lo, hi) * adv;
          term = std::min(unclipped, clipped);
          active = !((adv > 0.0 && ratio_value > hi) || (adv < 0.0 && ratio_value < lo));
          if (!active) ++report.counts.clipped;
        }

        std::vector<double>& grad = report.grads.try_emplace(state, vocab, 0.0).first->second;
        if (active) {
          for (std::size_t j = 0; j < vocab; ++j) grad[j] += weight * (adv * -scaled[j] / temperature);
        }
        if (use_kl) {
          const ProbDist ref = reference->distribution(state, temperature);
          double kl = 0.0;
          std::vector<double> log_ratio(vocab);
          for (std::size_t j = 0; j < vocab; ++j) {
            log_ratio[j] = safe_log(dist[j]) - safe_log(ref[j]);
            kl += dist[j] * log_ratio[j];
          }
          term -= config.kl_beta * kl;
          for (std::size_t j = 0; j < vocab; ++j) {
            grad[j] -= weight * config.kl_beta * dist[j] * (log_ratio[j] - kl) / temperature;
          }
        }
        if (!std::isfinite(term)) non_finite(r.prompt_id, i, l, "surrogate term");
        for (double g : grad) {
          if (!std::isfinite(g)) non_finite(r.prompt_id, i, l, "gradient");
        }
        report.surrogate_value += weight * term;
      }
    }
  }
  return report;
}

}  // namespace rlvr
