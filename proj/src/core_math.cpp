// SPDX-License-Identifier: Apache-2.0

#include "rlvr/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace rlvr {

bool TopKSet::contains(TokenId token) const {
  return std::find(indices.begin(), indices.end(), token) != indices.end();
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double shift = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - shift);
  return shift + std::log(sum);
}

ProbDist softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("softmax: temperature must be positive and finite");
  }
  if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) {
      throw std::invalid_argument("softmax: non-finite logit at index " + std::to_string(i));
    }
  }
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  ProbDist out;
  out.probs.resize(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.probs[i] = std::exp((logits[i] - max_logit) / temperature);
    sum += out.probs[i];
  }
  for (double& p : out.probs) p /= sum;
  return out;
}

double entropy(const ProbDist& dist) {
  double h = 0.0;
  for (double p : dist.probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

namespace {

// true when a ranks strictly ahead of b
inline bool ranks_ahead(const ProbDist& dist, TokenId a, TokenId b) {
  const double pa = dist.probs[static_cast<std::size_t>(a)];
  const double pb = dist.probs[static_cast<std::size_t>(b)];
  return pa > pb || (pa == pb && a < b);
}

}  // namespace

TopKSet topk(const ProbDist& dist, int k) {
  const int vocab = static_cast<int>(dist.size());
  if (k < 1 || k > vocab) {
    throw std::invalid_argument("topk: k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(vocab) + "]");
  }
  std::vector<TokenId> order(static_cast<std::size_t>(vocab));
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](TokenId a, TokenId b) { return ranks_ahead(dist, a, b); });
  TopKSet out;
  out.indices.assign(order.begin(), order.begin() + k);
  out.probs.reserve(static_cast<std::size_t>(k));
  for (TokenId t : out.indices) out.probs.push_back(dist.probs[static_cast<std::size_t>(t)]);
  return out;
}

int rank_of(const ProbDist& dist, TokenId token) {
  if (token < 0 || static_cast<std::size_t>(token) >= dist.size()) {
    throw std::invalid_argument("rank_of: token out of range");
  }
  int ahead = 0;
  for (TokenId j = 0; j < static_cast<TokenId>(dist.size()); ++j) {
    if (j != token && ranks_ahead(dist, j, token)) ++ahead;
  }
  return ahead + 1;
}

double log_binomial(long long n, long long r) {
  if (n < 0 || r < 0) throw std::invalid_argument("log_binomial: negative argument");
  if (r > n) return -std::numeric_limits<double>::infinity();
  if (r == 0 || r == n) return 0.0;
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(r) + 1.0) -
         std::lgamma(static_cast<double>(n - r) + 1.0);
}

double safe_log(double p) { return std::log(std::max(p, kProbFloor)); }

void check_distribution(const ProbDist& dist) {
  if (dist.probs.empty()) throw std::invalid_argument("distribution is empty");
  double sum = 0.0;
  for (double p : dist.probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw std::invalid_argument("distribution has a negative or non-finite entry");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("distribution does not sum to 1");
  }
}

}  // namespace rlvr
