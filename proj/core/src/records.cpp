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
#include <ctime>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "beecurate/error.hpp"

namespace beecurate {

namespace {

using ordered_json = nlohmann::ordered_json;

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

void finish_output(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

nlohmann::json parse_line(const std::string& line, const std::string& source, std::size_t lineno) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(source, lineno, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError(source, lineno, "expected a JSON object");
  return j;
}

std::string required_string(const nlohmann::json& j, const char* key, const std::string& source,
                            std::size_t lineno) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(source, lineno, std::string("missing key '") + key + "'");
  if (!it->is_string()) throw ParseError(source, lineno, std::string("key '") + key + "' must be a string");
  return it->get<std::string>();
}

}  // namespace

std::vector<SampleRecord> parse_samples(std::istream& in, const std::string& source) {
  std::vector<SampleRecord> samples;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line)) continue;
    const auto j = parse_line(line, source, lineno);

    SampleRecord rec;
    rec.id = required_string(j, "id", source, lineno);
    rec.question = required_string(j, "question", source, lineno);
    rec.answer = required_string(j, "answer", source, lineno);
    if (auto it = j.find("image_ref"); it != j.end() && !it->is_null()) {
      if (!it->is_string()) throw ParseError(source, lineno, "key 'image_ref' must be a string");
      rec.image_ref = it->get<std::string>();
    }
    if (auto it = j.find("metadata"); it != j.end() && !it->is_null()) {
      if (!it->is_object()) throw ParseError(source, lineno, "key 'metadata' must be an object");
      for (const auto& [k, v] : it->items()) {
        if (!v.is_string()) throw ParseError(source, lineno, "metadata value for '" + k + "' must be a string");
        rec.metadata.emplace(k, v.get<std::string>());
      }
    }

    if (rec.id.empty()) throw ParseError(source, lineno, "empty sample id");
    if (rec.answer.empty()) throw ValidationError(rec.id, "sample '" + rec.id + "' has an empty answer");
    if (!seen.insert(rec.id).second) throw ValidationError(rec.id, "duplicate sample id '" + rec.id + "'");
    samples.push_back(std::move(rec));
  }
  return samples;
}

std::vector<SampleRecord> read_samples(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_samples(in, path.string());
}

void write_samples(std::ostream& out, std::span<const SampleRecord> samples) {
  for (const auto& s : samples) {
    ordered_json j;
    j["id"] = s.id;
    j["question"] = s.question;
    j["answer"] = s.answer;
    if (s.image_ref) j["image_ref"] = *s.image_ref;
    if (!s.metadata.empty()) j["metadata"] = s.metadata;
    out << j.dump() << '\n';
  }
}

void write_samples(const std::filesystem::path& path, std::span<const SampleRecord> samples) {
  auto out = open_output(path);
  write_samples(out, samples);
  finish_output(out, path);
}

void validate_loss(const LossRecord& record) {
  if (!std::isfinite(record.loss))
    throw ValidationError(record.sample_id, "non-finite loss for sample '" + record.sample_id + "'");
  if (record.loss < 0.0)
    throw ValidationError(record.sample_id, "negative loss for sample '" + record.sample_id + "'");
}

std::vector<LossRecord> parse_losses(std::istream& in, const std::string& source) {
  std::vector<LossRecord> records;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line)) continue;
    if (line.front() == '#') continue;
    const auto j = parse_line(line, source, lineno);

    LossRecord rec;
    rec.sample_id = required_string(j, "sample_id", source, lineno);
    rec.scorer_id = required_string(j, "scorer_id", source, lineno);
    auto it = j.find("loss");
    if (it == j.end()) throw ParseError(source, lineno, "missing key 'loss'");
    if (!it->is_number()) throw ParseError(source, lineno, "key 'loss' must be a decimal number");
    rec.loss = it->get<double>();
    if (!std::isfinite(rec.loss) || rec.loss < 0.0)
      throw ParseError(source, lineno, "loss for '" + rec.sample_id + "' must be finite and non-negative");

    if (!seen.insert(rec.sample_id + '\x1f' + rec.scorer_id).second)
      throw ValidationError(rec.sample_id, "duplicate loss record for sample '" + rec.sample_id +
                                               "' and scorer '" + rec.scorer_id + "'");
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<LossRecord> read_losses(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_losses(in, path.string());
}

void write_losses(std::ostream& out, std::span<const LossRecord> records) {
  for (const auto& r : records) validate_loss(r);
  for (const auto& r : records) {
    ordered_json j;
    j["sample_id"] = r.sample_id;
    j["loss"] = r.loss;
    j["scorer_id"] = r.scorer_id;
    out << j.dump() << '\n';
  }
}

void write_losses(const std::filesystem::path& path, std::span<const LossRecord> records) {
  for (const auto& r : records) validate_loss(r);
  auto out = open_output(path);
  write_losses(out, records);
  finish_output(out, path);
}

std::string manifest_to_json(const DatasetManifest& m) {
  ordered_json j;
  j["name"] = m.name;
  j["sample_ids"] = m.sample_ids;
  j["source_uri"] = m.source_uri;
  j["created_at"] = m.created_at;
  if (m.provenance) j["provenance"] = *m.provenance;
  return j.dump(2) + "\n";
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::unordered_set<std::string> seen;
  for (const auto& id : manifest.sample_ids)
    if (!seen.insert(id).second) throw ValidationError(id, "duplicate id '" + id + "' in manifest");
  auto out = open_output(path);
  out << manifest_to_json(manifest);
  finish_output(out, path);
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  auto in = open_input(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), 1, std::string("malformed manifest: ") + e.what());
  }
  try {
    DatasetManifest m;
    m.name = j.at("name").get<std::string>();
    m.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
    m.source_uri = j.at("source_uri").get<std::string>();
    m.created_at = j.at("created_at").get<std::string>();
    if (auto it = j.find("provenance"); it != j.end() && !it->is_null()) m.provenance = it->get<std::string>();
    std::unordered_set<std::string> seen;
    for (const auto& id : m.sample_ids)
      if (!seen.insert(id).second) throw ValidationError(id, "duplicate id '" + id + "' in manifest");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 1, std::string("invalid manifest: ") + e.what());
  }
}

void verify_manifest(const DatasetManifest& manifest, std::span<const SampleRecord> samples) {
  std::unordered_map<std::string, std::size_t> position;
  position.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) position.emplace(samples[i].id, i);

  std::unordered_set<std::string> seen;
  std::size_t last = 0;
  bool first = true;
  for (const auto& id : manifest.sample_ids) {
    auto it = position.find(id);
    if (it == position.end()) throw ValidationError(id, "manifest references unknown sample '" + id + "'");
    if (!seen.insert(id).second) throw ValidationError(id, "duplicate id '" + id + "' in manifest");
    if (!first && it->second < last)
      throw ValidationError(id, "manifest id '" + id + "' is out of source order");
    last = it->second;
    first = false;
  }
}

std::string iso8601_utc(long long unix_seconds) {
  const std::time_t t = static_cast<std::time_t>(unix_seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace beecurate
