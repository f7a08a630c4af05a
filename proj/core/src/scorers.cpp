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

#include "beecurate/scorers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "beecurate/error.hpp"

namespace beecurate {

std::u32string decode_utf8(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
  while (i < text.size()) {
    const unsigned char b0 = byte(i);
    char32_t cp = 0;
    std::size_t len = 0;
    if (b0 < 0x80) {
      cp = b0;
      len = 1;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      len = 3;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      len = 4;
    } else {
      throw Error("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (i + len > text.size()) throw Error("truncated UTF-8 sequence at offset " + std::to_string(i));
    for (std::size_t k = 1; k < len; ++k) {
      const unsigned char b = byte(i + k);
      if ((b & 0xC0) != 0x80) throw Error("invalid UTF-8 continuation byte at offset " + std::to_string(i + k));
      cp = (cp << 6) | (b & 0x3F);
    }
    static constexpr char32_t kMinForLen[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMinForLen[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
      throw Error("invalid UTF-8 scalar value at offset " + std::to_string(i));
    out.push_back(cp);
    i += len;
  }
  return out;
}

BigramModel::SymbolId BigramModel::symbol_id(char32_t c) const {
  auto it = std::lower_bound(alphabet_.begin(), alphabet_.end(), c);
  if (it == alphabet_.end() || *it != c) return kUnknown;
  return static_cast<SymbolId>(2 + (it - alphabet_.begin()));
}

std::uint64_t BigramModel::count(SymbolId context, SymbolId next) const {
  auto it = counts_.find(pair_key(context, next));
  return it == counts_.end() ? 0 : it->second;
}

std::uint64_t BigramModel::context_total(SymbolId context) const {
  return context < context_totals_.size() ? context_totals_[context] : 0;
}

double BigramModel::probability(SymbolId context, SymbolId next) const {
  return static_cast<double>(count(context, next) + 1) /
         static_cast<double>(context_total(context) + vocab_size());
}

double BigramModel::surprisal(SymbolId context, SymbolId next) const {
  return std::log(static_cast<double>(context_total(context) + vocab_size())) -
         std::log(static_cast<double>(count(context, next) + 1));
}

BigramModel train_bigram(std::span<const SampleRecord> corpus) {
  if (corpus.empty()) throw Error("cannot train a bigram model on an empty corpus");

  std::vector<std::u32string> decoded;
  decoded.reserve(corpus.size());
  for (const auto& s : corpus) {
    if (s.answer.empty()) throw ValidationError(s.id, "sample '" + s.id + "' has an empty answer");
    decoded.push_back(decode_utf8(s.answer));
  }

  BigramModel m;
  for (const auto& text : decoded) m.alphabet_.insert(m.alphabet_.end(), text.begin(), text.end());
  std::sort(m.alphabet_.begin(), m.alphabet_.end());
  m.alphabet_.erase(std::unique(m.alphabet_.begin(), m.alphabet_.end()), m.alphabet_.end());
  m.context_totals_.assign(m.vocab_size(), 0);

  for (const auto& text : decoded) {
    BigramModel::SymbolId prev = BigramModel::kStart;
    for (const char32_t c : text) {
      const auto cur = m.symbol_id(c);
      ++m.counts_[BigramModel::pair_key(prev, cur)];
      ++m.context_totals_[prev];
      prev = cur;
    }
  }
  return m;
}

LossRecord score_sample(const BigramModel& model, const SampleRecord& sample) {
  if (sample.answer.empty()) throw ValidationError(sample.id, "sample '" + sample.id + "' has an empty answer");
  const auto text = decode_utf8(sample.answer);
  double total = 0.0;
  BigramModel::SymbolId prev = BigramModel::kStart;
  for (const char32_t c : text) {
    const auto cur = model.symbol_id(c);
    total += model.surprisal(prev, cur);
    prev = cur;
  }
  return LossRecord{sample.id, total / static_cast<double>(text.size()), model.id()};
}

unsigned worker_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("BEECURATE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(v));
  }
  return n;
}

std::vector<LossRecord> score_dataset(std::span<const SampleRecord> samples, const BigramModel& model,
                                      unsigned threads) {
  std::vector<LossRecord> out(samples.size());
  if (threads == 0) threads = worker_count();
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, samples.size() / 64)));

  if (threads <= 1) {
    for (std::size_t i = 0; i < samples.size(); ++i) out[i] = score_sample(model, samples[i]);
    return out;
  }

  // Each worker owns a contiguous slice; errors are rethrown in slice order.
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::jthread> workers;
  const std::size_t chunk = (samples.size() + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      const std::size_t lo = t * chunk;
      const std::size_t hi = std::min(samples.size(), lo + chunk);
      try {
        for (std::size_t i = lo; i < hi; ++i) out[i] = score_sample(model, samples[i]);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  workers.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::vector<LossRecord> validate_external_losses(std::vector<LossRecord> records,
                                                 const std::set<std::string>& expected_ids) {
  std::set<std::string> seen;
  for (const auto& r : records) {
    validate_loss(r);
    if (!expected_ids.contains(r.sample_id))
      throw ValidationError(r.sample_id, "external losses contain unknown sample id '" + r.sample_id + "'");
    if (!seen.insert(r.sample_id).second)
      throw ValidationError(r.sample_id, "external losses contain duplicate sample id '" + r.sample_id + "'");
  }
  for (const auto& id : expected_ids)
    if (!seen.contains(id)) throw ValidationError(id, "external losses are missing sample id '" + id + "'");
  return records;
}

std::vector<LossRecord> import_external_losses(const std::filesystem::path& path,
                                               const std::set<std::string>& expected_ids) {
  return validate_external_losses(read_losses(path), expected_ids);
}

}  // namespace beecurate
