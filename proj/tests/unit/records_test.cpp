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

#include "beecurate/records.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "beecurate/error.hpp"
#include "beecurate/rng.hpp"
#include "test_util.hpp"

namespace beecurate {
namespace {

using testing::TempDir;
using testing::write_file;

TEST(ReadSamples, ReturnsRecordsInFileOrder) {
  std::istringstream in(
      R"({"id":"s1","question":"q1","answer":"a1"})"
      "\n"
      R"({"id":"s2","question":"q2","answer":"a2","image_ref":"img/2.png"})"
      "\n\n"
      R"({"id":"s3","question":"q3","answer":"a3","metadata":{"category":"table"}})"
      "\n");
  const auto samples = parse_samples(in);
  ASSERT_EQ(samples.size(), 3u);
  EXPECT_EQ(samples[0].id, "s1");
  EXPECT_EQ(samples[1].image_ref, "img/2.png");
  EXPECT_FALSE(samples[0].image_ref.has_value());
  EXPECT_EQ(samples[2].metadata.at("category"), "table");
}

TEST(ReadSamples, EmptyFileIsValid) {
  TempDir dir;
  write_file(dir / "empty.jsonl", "");
  EXPECT_TRUE(read_samples(dir / "empty.jsonl").empty());
}

TEST(ReadSamples, DuplicateIdNamesTheId) {
  std::istringstream in(R"({"id":"s1","question":"q","answer":"a"})"
                        "\n"
                        R"({"id":"s1","question":"q","answer":"b"})"
                        "\n");
  try {
    parse_samples(in);
    FAIL() << "expected duplicate-id error";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.offender(), "s1");
    EXPECT_NE(std::string(e.what()).find("s1"), std::string::npos);
  }
}

TEST(ReadSamples, EmptyAnswerNamesTheId) {
  std::istringstream in(R"({"id":"s9","question":"q","answer":""})");
  try {
    parse_samples(in);
    FAIL() << "expected empty-answer error";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.offender(), "s9");
  }
}

TEST(ReadSamples, MalformedLineNamesLineNumber) {
  std::istringstream in(R"({"id":"s1","question":"q","answer":"a"})"
                        "\n"
                        "\n"
                        R"({"id":"s2","question":"q",)"
                        "\n");
  try {
    parse_samples(in, "samples.jsonl");
    FAIL() << "expected parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("samples.jsonl:3"), std::string::npos);
  }
}

TEST(ReadSamples, MissingKeyIsAParseError) {
  std::istringstream in(R"({"id":"s1","answer":"a"})");
  EXPECT_THROW(parse_samples(in), ParseError);
}

TEST(ReadSamples, MissingFileNamesThePath) {
  try {
    read_samples("/nonexistent/dir/samples.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/samples.jsonl"), std::string::npos);
  }
}

TEST(Samples, RoundTripIdentity) {
  CounterRng rng(11);
  std::vector<SampleRecord> samples;
  for (int i = 0; i < 50; ++i) {
    SampleRecord s;
    s.id = "id-" + std::to_string(i) + (i % 7 == 0 ? "\"quoted\"" : "");
    s.question = "Q" + std::to_string(rng.next_u64()) + " 表格?";
    s.answer = "答案 " + std::to_string(rng.below(1000)) + "\n\tline";
    if (i % 2) s.image_ref = "images/" + std::to_string(i) + ".png";
    if (i % 3) s.metadata = {{"category", "seal"}, {"k" + std::to_string(i), "v"}};
    samples.push_back(std::move(s));
  }
  TempDir dir;
  write_samples(dir / "s.jsonl", samples);
  EXPECT_EQ(read_samples(dir / "s.jsonl"), samples);
}

TEST(Losses, SingleRecordRoundTrip) {
  TempDir dir;
  const std::vector<LossRecord> records{{"s1", 0.5, "toy"}};
  write_losses(dir / "l.jsonl", records);
  EXPECT_EQ(read_losses(dir / "l.jsonl"), records);
}

TEST(Losses, RandomRecordsRoundTripBitExact) {
  CounterRng rng(2024);
  std::vector<LossRecord> records;
  for (int i = 0; i < 1000; ++i) {
    // Mix of magnitudes, including subnormal-adjacent and large values.
    const double mantissa = rng.uniform();
    const int exponent = static_cast<int>(rng.below(80)) - 60;
    const double loss = i == 0 ? 0.0 : std::ldexp(mantissa, exponent);
    records.push_back({"s" + std::to_string(i), loss, i % 2 ? "toy-bigram-v1" : "ext"});
  }
  TempDir dir;
  write_losses(dir / "l.jsonl", records);
  const auto back = read_losses(dir / "l.jsonl");
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(std::memcmp(&back[i].loss, &records[i].loss, sizeof(double)), 0) << "record " << i;
    EXPECT_EQ(back[i].sample_id, records[i].sample_id);
    EXPECT_EQ(back[i].scorer_id, records[i].scorer_id);
  }
}

TEST(Losses, NonFiniteRejectedOnWrite) {
  std::ostringstream out;
  const std::vector<LossRecord> inf{{"s1", std::numeric_limits<double>::infinity(), "toy"}};
  EXPECT_THROW(write_losses(out, inf), ValidationError);
  const std::vector<LossRecord> nan{{"s2", std::numeric_limits<double>::quiet_NaN(), "toy"}};
  EXPECT_THROW(write_losses(out, nan), ValidationError);
  EXPECT_TRUE(out.str().empty());
}

TEST(Losses, InfTextIsAParseError) {
  std::istringstream bare(R"({"sample_id":"s1","loss":inf,"scorer_id":"toy"})");
  EXPECT_THROW(parse_losses(bare), ParseError);
  std::istringstream quoted(R"({"sample_id":"s1","loss":"inf","scorer_id":"toy"})");
  EXPECT_THROW(parse_losses(quoted), ParseError);
}

TEST(Losses, NegativeLossIsAParseError) {
  std::istringstream in(R"({"sample_id":"s1","loss":-0.5,"scorer_id":"toy"})");
  EXPECT_THROW(parse_losses(in), ParseError);
}

TEST(Losses, DuplicateSampleScorerPairRejected) {
  std::istringstream in(R"({"sample_id":"s1","loss":1,"scorer_id":"toy"})"
                        "\n"
                        R"({"sample_id":"s1","loss":2,"scorer_id":"toy"})");
  EXPECT_THROW(parse_losses(in), ValidationError);
  std::istringstream two_scorers(R"({"sample_id":"s1","loss":1,"scorer_id":"a"})"
                                 "\n"
                                 R"({"sample_id":"s1","loss":2,"scorer_id":"b"})");
  EXPECT_EQ(parse_losses(two_scorers).size(), 2u);
}

TEST(Losses, CommentLinesSkipped) {
  std::istringstream in("# adapter template: answer-only\n"
                        R"({"sample_id":"s1","loss":1.25,"scorer_id":"m"})");
  const auto r = parse_losses(in);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].loss, 1.25);
}

TEST(Manifest, WriteReadAndVerify) {
  const std::vector<SampleRecord> samples{{"a", "q", "x", {}, {}}, {"b", "q", "y", {}, {}}, {"c", "q", "z", {}, {}}};
  DatasetManifest m{"kept", {"a", "c"}, "data/s.jsonl", "2025-01-01T00:00:00Z", "report.json"};
  TempDir dir;
  write_manifest(dir / "m.json", m);
  const auto back = read_manifest(dir / "m.json");
  EXPECT_EQ(back, m);
  EXPECT_NO_THROW(verify_manifest(back, samples));
}

TEST(Manifest, VerifyRejectsDanglingIds) {
  const std::vector<SampleRecord> samples{{"a", "q", "x", {}, {}}};
  const DatasetManifest m{"kept", {"a", "ghost"}, "s", "t", std::nullopt};
  try {
    verify_manifest(m, samples);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.offender(), "ghost");
  }
}

TEST(Manifest, VerifyRejectsOutOfOrderIds) {
  const std::vector<SampleRecord> samples{{"a", "q", "x", {}, {}}, {"b", "q", "y", {}, {}}};
  const DatasetManifest m{"kept", {"b", "a"}, "s", "t", std::nullopt};
  EXPECT_THROW(verify_manifest(m, samples), ValidationError);
}

TEST(Manifest, DuplicateIdsRejectedOnWrite) {
  TempDir dir;
  const DatasetManifest m{"kept", {"a", "a"}, "s", "t", std::nullopt};
  EXPECT_THROW(write_manifest(dir / "m.json", m), ValidationError);
}

TEST(Iso8601, FormatsUtc) {
  EXPECT_EQ(iso8601_utc(0), "1970-01-01T00:00:00Z");
  EXPECT_EQ(iso8601_utc(1700000000), "2023-11-14T22:13:20Z");
}

}  // namespace
}  // namespace beecurate
