// Copyright 2026 The beecurate Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "beecurate/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "beecurate/error.hpp"

namespace beecurate {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_logits(std::span<const double> logits) {
  if (logits.empty()) throw DomainError("logit vector is empty");
  bool any_finite = false;
  for (const double v : logits) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
      throw DomainError("logits must be finite or -infinity");
    any_finite = any_finite || std::isfinite(v);
  }
  if (!any_finite) throw DomainError("at least one logit must be finite");
}

// The first `count` indices by descending value, ascending index among equal
// values. Only those positions of the result are ordered.
std::vector<std::size_t> leading_indices(std::span<const double> values, std::vector<std::size_t> idx,
                                         std::size_t count) {
  const auto before = [&](std::size_t a, std::size_t b) {
    return values[a] > values[b] || (values[a] == values[b] && a < b);
  };
  count = std::min(count, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(), before);
  idx.resize(count);
  return idx;
}

}  // namespace

void SamplingConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw DomainError("temperature must be positive");
  if (top_k < 1) throw DomainError("top_k must be at least 1");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw DomainError("top_p must lie in (0, 1]");
  if (max_new_tokens < 1) throw DomainError("max_new_tokens must be at least 1");
}

std::vector<double> apply_temperature(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw DomainError("temperature must be positive");
  check_logits(logits);
  std::vector<double> out(logits.begin(), logits.end());
  for (double& v : out) v /= temperature;
  return out;
}

std::vector<double> top_k_filter(std::span<const double> logits, int k) {
  check_logits(logits);
  if (k < 1 || static_cast<std::size_t>(k) > logits.size())
    throw DomainError("top_k must lie in [1, vocabulary size]");
  std::vector<std::size_t> all(logits.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<double> out(logits.size(), kNegInf);
  for (const std::size_t i : leading_indices(logits, std::move(all), static_cast<std::size_t>(k))) out[i] = logits[i];
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  check_logits(logits);
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = logits[i] == kNegInf ? 0.0 : std::exp(logits[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

std::vector<double> top_p_filter(std::span<const double> probabilities, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw DomainError("top_p must lie in (0, 1]");
  if (probabilities.empty()) throw DomainError("probability vector is empty");
  double total = 0.0;
  for (const double v : probabilities) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("probabilities must be finite and non-negative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("probabilities must sum to 1");

  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < probabilities.size(); ++i)
    if (probabilities[i] > 0.0) support.push_back(i);
  const std::size_t size = support.size();
  std::vector<double> out(probabilities.size(), 0.0);
  double mass = 0.0;
  for (const std::size_t i : leading_indices(probabilities, std::move(support), size)) {
    // p == 1 keeps the whole support even when rounding lets the prefix sum hit 1 early.
    if (p < 1.0 && mass >= p) break;
    out[i] = probabilities[i];
    mass += probabilities[i];
  }
  for (double& v : out) v /= mass;
  return out;
}

SampledToken sample_token(std::span<const double> logits, const SamplingConfig& config, CounterRng rng) {
  config.validate();
  const int k = std::min<int>(config.top_k, static_cast<int>(logits.size()));
  const auto probs = top_p_filter(softmax(top_k_filter(apply_temperature(logits, config.temperature), k)),
                                  config.top_p);

  const double u = rng.uniform();
  double cum = 0.0;
  int chosen = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] == 0.0) continue;
    chosen = static_cast<int>(i);
    cum += probs[i];
    if (u < cum) break;
  }
  return {chosen, rng};
}

std::vector<int> decode_loop(const LmHead& lm_head, const SamplingConfig& config, int eos_token) {
  config.validate();
  std::vector<int> tokens;
  tokens.reserve(static_cast<std::size_t>(config.max_new_tokens));
  CounterRng rng(config.seed);
  while (tokens.size() < static_cast<std::size_t>(config.max_new_tokens)) {
    const auto logits = lm_head(tokens);
    auto [token, next] = sample_token(logits, config, rng);
    rng = next;
    tokens.push_back(token);
    if (token == eos_token) break;
  }
  return tokens;
}

}  // namespace beecurate
