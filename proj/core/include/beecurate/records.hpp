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

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace beecurate {

/// One multimodal training sample. `image_ref` is an opaque reference; images
/// are never decoded by this library.
struct SampleRecord {
  std::string id;
  std::string question;
  std::string answer;
  std::optional<std::string> image_ref;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

/// Per-sample forward cross-entropy from one scorer: mean negative
/// log-likelihood per answer token, in nats.
struct LossRecord {
  std::string sample_id;
  double loss = 0.0;
  std::string scorer_id;

  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

/// Ordered list of sample ids defining a (filtered) dataset.
struct DatasetManifest {
  std::string name;
  std::vector<std::string> sample_ids;
  std::string source_uri;
  std::string created_at;  // ISO-8601, UTC
  std::optional<std::string> provenance;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

// Samples files: one JSON object per line with keys id, question, answer and
// optional image_ref / metadata. Blank lines are skipped; line numbers in
// errors count every physical line.
std::vector<SampleRecord> parse_samples(std::istream& in, const std::string& source = "<stream>");
std::vector<SampleRecord> read_samples(const std::filesystem::path& path);
void write_samples(std::ostream& out, std::span<const SampleRecord> samples);
void write_samples(const std::filesystem::path& path, std::span<const SampleRecord> samples);

// Losses files: one JSON object per line with keys sample_id, loss, scorer_id.
// Lines starting with '#' are comments (external evaluators put a header there).
std::vector<LossRecord> parse_losses(std::istream& in, const std::string& source = "<stream>");
std::vector<LossRecord> read_losses(const std::filesystem::path& path);
void write_losses(std::ostream& out, std::span<const LossRecord> records);
void write_losses(const std::filesystem::path& path, std::span<const LossRecord> records);

/// Throws ValidationError when the loss is negative or non-finite.
void validate_loss(const LossRecord& record);

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
std::string manifest_to_json(const DatasetManifest& manifest);

/// Checks that every manifest id exists in `samples`, appears once, and that
/// manifest order follows sample order. Throws ValidationError naming the
/// first offending id.
void verify_manifest(const DatasetManifest& manifest, std::span<const SampleRecord> samples);

/// Formats a Unix timestamp (seconds) as "YYYY-MM-DDTHH:MM:SSZ".
std::string iso8601_utc(long long unix_seconds);

}  // namespace beecurate
