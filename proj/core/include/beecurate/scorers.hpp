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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "beecurate/records.hpp"

namespace beecurate {

inline constexpr const char* kToyScorerId = "toy-bigram-v1";

/// Decodes UTF-8 into Unicode scalar values. Throws Error on malformed input.
std::u32string decode_utf8(std::string_view text);

/// Character-level bigram model with add-one smoothing, trained on answers.
///
/// Symbol ids: 0 is the start marker, 1 the unknown symbol, and 2.. the answer
/// alphabet in ascending code-point order. Smoothing spreads mass over all
/// of them, so P(b|a) = (count(a,b) + 1) / (total(a) + vocab_size()).
class BigramModel {
 public:
  using SymbolId = std::uint32_t;
  static constexpr SymbolId kStart = 0;
  static constexpr SymbolId kUnknown = 1;

  /// Answer symbols (code points) in ascending order; excludes start/unknown.
  const std::vector<char32_t>& alphabet() const noexcept { return alphabet_; }
  std::size_t vocab_size() const noexcept { return alphabet_.size() + 2; }

  /// Maps a code point to its id; unseen code points map to kUnknown.
  SymbolId symbol_id(char32_t c) const;

  std::uint64_t count(SymbolId context, SymbolId next) const;
  std::uint64_t context_total(SymbolId context) const;
  double probability(SymbolId context, SymbolId next) const;
  /// -ln P(next | context).
  double surprisal(SymbolId context, SymbolId next) const;

  const std::string& id() const noexcept { return id_; }

  friend bool operator==(const BigramModel&, const BigramModel&) = default;

 private:
  friend BigramModel train_bigram(std::span<const SampleRecord> corpus);

  static std::uint64_t pair_key(SymbolId a, SymbolId b) { return (std::uint64_t{a} << 32) | b; }

  std::string id_ = kToyScorerId;
  std::vector<char32_t> alphabet_;
  std::unordered_map<std::uint64_t, std::uint64_t> counts_;
  std::vector<std::uint64_t> context_totals_;
};

/// Tallies bigrams over every answer, each prefixed by the start marker.
BigramModel train_bigram(std::span<const SampleRecord> corpus);

/// Mean surprisal (nats) over the answer's symbols, first context = start.
LossRecord score_sample(const BigramModel& model, const SampleRecord& sample);

/// One record per sample in input order. `threads` = 0 picks the worker count
/// from BEECURATE_THREADS (default: hardware concurrency). Output does not
/// depend on the worker count.
std::vector<LossRecord> score_dataset(std::span<const SampleRecord> samples, const BigramModel& model,
                                      unsigned threads = 0);

/// Worker cap from BEECURATE_THREADS, else hardware concurrency; at least 1.
unsigned worker_count();

/// Reads a losses file written by an external evaluator and checks it covers
/// `expected_ids` exactly once each. Errors name the offending id.
std::vector<LossRecord> import_external_losses(const std::filesystem::path& path,
                                               const std::set<std::string>& expected_ids);
std::vector<LossRecord> validate_external_losses(std::vector<LossRecord> records,
                                                 const std::set<std::string>& expected_ids);

}  // namespace beecurate
