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

namespace beecurate {

/// Counter-based random stream. The whole state is (key, counter), so a stream
/// can be copied, replayed, or split into independent children without any
/// hidden global state. Output k of a stream is a pure function of (key, k).
class CounterRng {
 public:
  constexpr CounterRng() = default;
  explicit CounterRng(std::uint64_t seed);

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64();
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal draw (Box-Muller, consumes two outputs).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Uniform integer in [0, bound). `bound` must be positive.
  std::uint64_t below(std::uint64_t bound);

  /// Independent child stream identified by `stream`; does not advance this one.
  CounterRng split(std::uint64_t stream) const;

  friend bool operator==(const CounterRng&, const CounterRng&) = default;

 private:
  CounterRng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

}  // namespace beecurate
