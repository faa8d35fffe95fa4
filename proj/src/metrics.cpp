// SPDX-License-Identifier: Apache-2.0

#include "rlvr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "rlvr/algorithms.hpp"

namespace rlvr {

LambdaReport lambda_report(std::span<const Rollout> batch, int k_max) {
  if (k_max < 1) throw std::invalid_argument("lambda_report: k_max must be >= 1");
  LambdaReport out;
  out.lambda_rank.assign(static_cast<std::size_t>(k_max), 0.0);
  std::size_t responses = 0;
  for (const Rollout& r : batch) {
    if (r.records.empty()) continue;
    double sampled = 0.0;
    std::vector<double> ranked(static_cast<std::size_t>(k_max), 0.0);
    for (const TokenRecord& rec : r.records) {
      if (static_cast<int>(rec.topk.size()) < k_max) {
        throw std::invalid_argument("lambda_report: k_max " + std::to_string(k_max) +
                                    " exceeds recorded top-K depth " + std::to_string(rec.topk.size()));
      }
      sampled += rec.behavior_logprob;
      for (int k = 0; k < k_max; ++k) ranked[static_cast<std::size_t>(k)] += safe_log(rec.topk.probs[static_cast<std::size_t>(k)]);
    }
    const double len = static_cast<double>(r.records.size());
    out.lambda_sampled += sampled / len;
    for (int k = 0; k < k_max; ++k) out.lambda_rank[static_cast<std::size_t>(k)] += ranked[static_cast<std::size_t>(k)] / len;
    out.token_count += static_cast<std::int64_t>(r.records.size());
    ++responses;
  }
  if (responses == 0) throw std::invalid_argument("lambda_report: batch has no tokens");
  const double denom = static_cast<double>(responses);
  out.lambda_sampled /= denom;
  for (double& v : out.lambda_rank) v /= denom;
  out.geo_sampled = std::exp(out.lambda_sampled);
  for (double v : out.lambda_rank) out.geo_rank.push_back(std::exp(v));
  return out;
}

double pass_at_k_unbiased(int n, int c, int k) {
  if (n < 0 || c < 0 || c > n) throw std::invalid_argument("pass_at_k: need 0 <= c <= n");
  if (k < 1 || k > n) throw std::invalid_argument("pass_at_k: need 1 <= K <= n");
  if (n - c < k) return 1.0;
  // C(n-c, K) / C(n, K) = prod_{i=n-c+1}^{n} (1 - K/i)
  double log_miss = 0.0;
  for (int i = n - c + 1; i <= n; ++i) log_miss += std::log1p(-static_cast<double>(k) / static_cast<double>(i));
  return 1.0 - std::exp(log_miss);
}

std::vector<double> pass_at_k_curve(std::span<const PromptOutcome> outcomes, std::span<const int> k_list) {
  if (outcomes.empty()) throw std::invalid_argument("pass_at_k_curve: no prompts");
  const int min_n = std::min_element(outcomes.begin(), outcomes.end(), [](const auto& a, const auto& b) {
                      return a.n < b.n;
                    })->n;
  std::vector<double> out;
  out.reserve(k_list.size());
  for (int k : k_list) {
    if (k < 1 || k > min_n) {
      throw std::invalid_argument("pass_at_k_curve: K=" + std::to_string(k) + " exceeds smallest n=" +
                                  std::to_string(min_n));
    }
    double sum = 0.0;
    for (const auto& o : outcomes) sum += pass_at_k_unbiased(o.n, o.c, k);
    out.push_back(sum / static_cast<double>(outcomes.size()));
  }
  return out;
}

std::vector<double> default_entropy_bins(int vocab_size, int num_bins) {
  if (vocab_size < 2 || num_bins < 1) throw std::invalid_argument("default_entropy_bins: bad arguments");
  const double top = std::log(static_cast<double>(vocab_size));
  std::vector<double> edges(static_cast<std::size_t>(num_bins) + 1);
  for (int i = 0; i <= num_bins; ++i) edges[static_cast<std::size_t>(i)] = top * i / num_bins;
  return edges;
}

EntropyHistogram entropy_histogram(std::span<const double> entropies, std::span<const double> bin_edges, double q) {
  if (entropies.empty()) throw std::invalid_argument("entropy_histogram: empty batch");
  if (bin_edges.size() < 2) throw std::invalid_argument("entropy_histogram: need at least two bin edges");
  for (std::size_t i = 1; i < bin_edges.size(); ++i) {
    if (!(bin_edges[i] > bin_edges[i - 1])) throw std::invalid_argument("entropy_histogram: unsorted bin edges");
  }
  EntropyHistogram h;
  h.bin_edges.assign(bin_edges.begin(), bin_edges.end());
  h.counts.assign(bin_edges.size() - 1, 0);
  const std::size_t last = h.counts.size() - 1;
  for (double e : entropies) {
    std::size_t bin;
    if (e >= bin_edges.back()) {
      bin = last;
    } else {
      const auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), e);
      bin = it == bin_edges.begin() ? 0 : static_cast<std::size_t>(it - bin_edges.begin()) - 1;
    }
    ++h.counts[std::min(bin, last)];
  }
  h.token_count = static_cast<std::int64_t>(entropies.size());
  h.mean_entropy = std::accumulate(entropies.begin(), entropies.end(), 0.0) / static_cast<double>(entropies.size());
  h.gated_fraction = gate_tokens(entropies, q).gated_fraction();
  return h;
}

EntropyHistogram entropy_histogram(std::span<const Rollout> batch, std::span<const double> bin_edges, double q) {
  std::vector<double> entropies;
  for (const auto& r : batch) {
    for (const auto& rec : r.records) entropies.push_back(rec.entropy_at_emit);
  }
  return entropy_histogram(entropies, bin_edges, q);
}

}  // namespace rlvr
