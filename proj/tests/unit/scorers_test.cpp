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

#include <cmath>
#include <cstring>
#include <limits>

#include <gtest/gtest.h>

#include "beecurate/error.hpp"
#include "beecurate/rng.hpp"
#include "test_util.hpp"

namespace beecurate {
namespace {

using testing::TempDir;
using testing::write_file;

SampleRecord sample(std::string id, std::string answer) {
  SampleRecord s;
  s.id = std::move(id);
  s.question = "q";
  s.answer = std::move(answer);
  return s;
}

TEST(DecodeUtf8, ScalarValues) {
  EXPECT_EQ(decode_utf8("ab"), U"ab");
  EXPECT_EQ(decode_utf8("印章"), U"印章");
  EXPECT_EQ(decode_utf8("\xF0\x9F\x98\x80"), U"\U0001F600");
  EXPECT_THROW(decode_utf8("\xC3"), Error);
  EXPECT_THROW(decode_utf8("\xC0\xAF"), Error);        // overlong
  EXPECT_THROW(decode_utf8("\xED\xA0\x80"), Error);    // surrogate
}

TEST(TrainBigram, SingleAnswerTally) {
  const std::vector<SampleRecord> corpus{sample("s", "aa")};
  const auto m = train_bigram(corpus);
  ASSERT_EQ(m.alphabet(), std::vector<char32_t>{U'a'});
  const auto a = m.symbol_id(U'a');
  EXPECT_EQ(m.count(BigramModel::kStart, a), 1u);
  EXPECT_EQ(m.count(a, a), 1u);
  EXPECT_EQ(m.vocab_size(), 3u);  // start, unknown, 'a'
}

TEST(TrainBigram, HandTallyTwoAnswers) {
  const std::vector<SampleRecord> corpus{sample("1", "ab"), sample("2", "ba")};
  const auto m = train_bigram(corpus);
  const auto a = m.symbol_id(U'a'), b = m.symbol_id(U'b');
  EXPECT_EQ(m.count(a, b), 1u);
  EXPECT_EQ(m.count(b, a), 1u);
  EXPECT_EQ(m.count(BigramModel::kStart, a), 1u);
  EXPECT_EQ(m.count(BigramModel::kStart, b), 1u);
  EXPECT_EQ(m.count(a, a), 0u);
  EXPECT_EQ(m.context_total(BigramModel::kStart), 2u);
}

TEST(TrainBigram, Deterministic) {
  const std::vector<SampleRecord> corpus{sample("1", "hello world"), sample("2", "表格数据")};
  EXPECT_EQ(train_bigram(corpus), train_bigram(corpus));
}

TEST(TrainBigram, EmptyCorpusRejected) {
  EXPECT_THROW(train_bigram(std::vector<SampleRecord>{}), Error);
}

TEST(TrainBigram, ContextTotalsAndNormalization) {
  CounterRng rng(1);
  std::vector<SampleRecord> corpus;
  for (int i = 0; i < 40; ++i) {
    std::string text;
    for (std::uint64_t k = 0, len = 1 + rng.below(30); k < len; ++k) text += static_cast<char>('a' + rng.below(8));
    corpus.push_back(sample(std::to_string(i), text));
  }
  const auto m = train_bigram(corpus);
  for (BigramModel::SymbolId ctx = 0; ctx < m.vocab_size(); ++ctx) {
    std::uint64_t total = 0;
    double mass = 0.0;
    for (BigramModel::SymbolId next = 0; next < m.vocab_size(); ++next) {
      total += m.count(ctx, next);
      const double p = m.probability(ctx, next);
      EXPECT_GT(p, 0.0);
      EXPECT_LE(p, 1.0);
      mass += p;
    }
    EXPECT_EQ(total, m.context_total(ctx));
    EXPECT_NEAR(mass, 1.0, 1e-12);
  }
}

TEST(ScoreSample, RepeatedSymbolUsesSmoothedProbability) {
  const std::vector<SampleRecord> corpus{sample("c", "aaaa")};
  const auto m = train_bigram(corpus);
  // counts: (start,a)=1, (a,a)=3; totals start=1, a=3; V=3.
  const auto r = score_sample(m, sample("x", "aaaa"));
  const double expected = (std::log(4.0 / 2.0) + 3.0 * std::log(6.0 / 4.0)) / 4.0;
  EXPECT_NEAR(r.loss, expected, 1e-15);
  EXPECT_NEAR(r.loss, 0.4773856262211096, 1e-15);
  EXPECT_GT(r.loss, 0.0);
  EXPECT_EQ(r.scorer_id, kToyScorerId);
}

TEST(ScoreSample, HandTallyExample) {
  const std::vector<SampleRecord> corpus{sample("1", "ab"), sample("2", "ba")};
  const auto m = train_bigram(corpus);
  // V=4; P(a|start) = 2/6, P(b|a) = 2/5.
  EXPECT_NEAR(score_sample(m, sample("x", "ab")).loss, 1.0074515102711326, 1e-15);
}

TEST(ScoreSample, UnseenBigramsFromUnseenContexts) {
  const std::vector<SampleRecord> corpus{sample("1", "ab"), sample("2", "ba")};
  const auto m = train_bigram(corpus);
  const double v = static_cast<double>(m.vocab_size());
  // "xyz": start context has total 2, later contexts are the unknown symbol
  // with zero counts, which gives the uniform 1/V.
  const double expected = (std::log(2.0 + v) + 2.0 * std::log(v)) / 3.0;
  EXPECT_NEAR(score_sample(m, sample("u", "xyz")).loss, expected, 1e-15);
  // After the first position every bigram is from a zero-total context.
  const auto unk_context = m.surprisal(BigramModel::kUnknown, BigramModel::kUnknown);
  EXPECT_DOUBLE_EQ(unk_context, std::log(v));
}

TEST(ScoreSample, LossIsFiniteAndBoundedByWorstContext) {
  CounterRng rng(4);
  std::vector<SampleRecord> corpus;
  for (int i = 0; i < 60; ++i) {
    std::string text;
    for (std::uint64_t k = 0, len = 1 + rng.below(40); k < len; ++k) text += static_cast<char>('a' + rng.below(12));
    corpus.push_back(sample(std::to_string(i), text));
  }
  const auto m = train_bigram(corpus);
  double worst = 0.0;
  for (BigramModel::SymbolId ctx = 0; ctx < m.vocab_size(); ++ctx)
    worst = std::max(worst, std::log(static_cast<double>(m.context_total(ctx) + m.vocab_size())));
  for (const auto& r : score_dataset(corpus, m)) {
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_GE(r.loss, 0.0);
    EXPECT_LE(r.loss, worst);
  }
}

TEST(ScoreDataset, EmptyInput) {
  const std::vector<SampleRecord> corpus{sample("1", "ab")};
  EXPECT_TRUE(score_dataset({}, train_bigram(corpus)).empty());
}

TEST(ScoreDataset, OrderAndBitIdenticalAcrossThreadCounts) {
  CounterRng rng(77);
  std::vector<SampleRecord> samples;
  for (int i = 0; i < 500; ++i) {
    std::string text;
    for (std::uint64_t k = 0, len = 1 + rng.below(60); k < len; ++k) text += static_cast<char>(' ' + rng.below(90));
    samples.push_back(sample("s" + std::to_string(i), text));
  }
  const auto m = train_bigram(std::span(samples).first(100));
  const auto one = score_dataset(samples, m, 1);
  const auto again = score_dataset(samples, m, 1);
  const auto four = score_dataset(samples, m, 4);
  ASSERT_EQ(one.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(one[i].sample_id, samples[i].id);
    EXPECT_EQ(std::memcmp(&one[i].loss, &again[i].loss, sizeof(double)), 0);
    EXPECT_EQ(std::memcmp(&one[i].loss, &four[i].loss, sizeof(double)), 0);
  }
}

TEST(ImportExternalLosses, AcceptsExactCoverage) {
  TempDir dir;
  write_file(dir / "l.jsonl",
             "# adapter: model=m template=answer-only\n"
             R"({"sample_id":"s1","loss":0.5,"scorer_id":"m"})"
             "\n"
             R"({"sample_id":"s2","loss":1.5,"scorer_id":"m"})"
             "\n");
  const auto r = import_external_losses(dir / "l.jsonl", {"s1", "s2"});
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[1], (LossRecord{"s2", 1.5, "m"}));
}

TEST(ImportExternalLosses, MissingIdNamed) {
  const std::vector<LossRecord> records{{"s1", 0.5, "m"}};
  try {
    validate_external_losses(records, {"s1", "s7"});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.offender(), "s7");
  }
}

TEST(ImportExternalLosses, UnknownIdNamed) {
  const std::vector<LossRecord> records{{"s1", 0.5, "m"}, {"zz", 0.5, "m"}};
  try {
    validate_external_losses(records, {"s1"});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.offender(), "zz");
  }
}

TEST(ImportExternalLosses, DuplicateIdNamed) {
  const std::vector<LossRecord> records{{"s1", 0.5, "m"}, {"s1", 0.7, "m2"}};
  try {
    validate_external_losses(records, {"s1"});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.offender(), "s1");
  }
}

TEST(ImportExternalLosses, NonFiniteNamed) {
  const std::vector<LossRecord> records{{"s1", std::numeric_limits<double>::infinity(), "m"}};
  try {
    validate_external_losses(records, {"s1"});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.offender(), "s1");
  }
}

}  // namespace
}  // namespace beecurate
