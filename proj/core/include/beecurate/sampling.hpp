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

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "beecurate/rng.hpp"

namespace beecurate {

/// Decoding knobs. Defaults are the low-latency benchmark conditions:
/// temperature 0.1, top-k 1, top-p 0.001, 512 new tokens.
struct SamplingConfig {
  double temperature = 0.1;
  int top_k = 1;
  double top_p = 0.001;
  int max_new_tokens = 512;
  std::uint64_t seed = 0;

  /// Throws DomainError when a field is out of range.
  void validate() const;
};

// Logit vectors may contain -infinity for banned tokens; NaN and +infinity are
// rejected, and at least one entry must be finite.

/// Divides every logit by `temperature` (> 0).
std::vector<double> apply_temperature(std::span<const double> logits, double temperature);

/// Keeps the k largest logits and sets the rest to -infinity. Ties at the
/// cut-off go to the lowest index.
std::vector<double> top_k_filter(std::span<const double> logits, int k);

/// Numerically stable softmax; -infinity maps to probability 0.
std::vector<double> softmax(std::span<const double> logits);

/// Keeps the shortest prefix of tokens, sorted by descending probability
/// (lowest index first among ties), whose cumulative mass reaches `p`, and
/// renormalizes it. `probabilities` must sum to 1 within 1e-9.
std::vector<double> top_p_filter(std::span<const double> probabilities, double p);

struct SampledToken {
  int token = 0;
  CounterRng rng;
};

/// temperature -> top-k -> softmax -> top-p -> categorical draw. Consumes
/// exactly one uniform from `rng`. With top_k == 1 the token is the argmax.
SampledToken sample_token(std::span<const double> logits, const SamplingConfig& config, CounterRng rng);

/// Produces next-token logits from the tokens emitted so far.
using LmHead = std::function<std::vector<double>(std::span<const int> prefix)>;

/// Samples until `eos_token` is emitted (it is included in the output) or
/// `max_new_tokens` tokens exist. The stream is seeded from `config.seed`.
std::vector<int> decode_loop(const LmHead& lm_head, const SamplingConfig& config, int eos_token);

}  // namespace beecurate
