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
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "beecurate/loss_stats.hpp"
#include "beecurate/sampling.hpp"
#include "beecurate/scorers.hpp"
#include "beecurate/vit_fusion.hpp"

namespace beecurate {

/// Output file names inside the output directory.
namespace outputs {
inline constexpr const char* kLosses = "losses.jsonl";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kHistogram = "histogram.csv";
inline constexpr const char* kProbe = "probe.json";
inline constexpr const char* kBench = "bench.json";
inline constexpr const char* kSynth = "synth.json";
}  // namespace outputs

struct SynthConfig {
  std::size_t count = 100000;
  double contamination_rate = 0.0;
  double shift_in_sigmas = 8.0;
  double clean_mu = 1.0;
  double clean_sigma = 0.25;

  void validate() const;
};

struct BenchConfig {
  int runs = 10;
  int warmup = 3;
  bool never_eos = true;  // toy head never emits EOS, so every run decodes max_new_tokens
  int vocab_size = 256;
};

/// Everything a subcommand may need. Loaded from a flat `key = value` file;
/// relative paths resolve against the config file's directory.
struct PipelineConfig {
  std::filesystem::path samples;
  std::string scorer = kToyScorerId;
  double n = 2.0;
  std::filesystem::path out = "out";
  SamplingConfig sampling;
  std::string fusion = "layer:middle";
  vit::TrunkConfig trunk;
  std::uint64_t seed = 0;
  std::string manifest_name = "filtered";
  SynthConfig synth;
  BenchConfig bench;

  /// `external:<path>` scorer selection, if any.
  std::optional<std::filesystem::path> external_losses() const;
  void validate() const;
};

/// Parses the flat key-value format. `#` starts a comment. Unknown keys and
/// malformed values raise ParseError with the line number.
PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {},
                            const std::string& source = "<config>");
PipelineConfig load_config(const std::filesystem::path& path);

/// Applies --seed to every seeded component.
void set_seed(PipelineConfig& config, std::uint64_t seed);

struct CommandResult {
  bool ok = true;
  nlohmann::ordered_json report;
  std::vector<std::string> warnings;
};

/// score: writes <out>/losses.jsonl.
CommandResult run_score(const PipelineConfig& config);
/// filter: writes manifest.json, report.json and histogram.csv.
CommandResult run_filter(const PipelineConfig& config);
/// synth: seeded normal losses with planted upper-tail outliers; writes synth.json.
CommandResult run_synth(const PipelineConfig& config);
/// probe: fusion shapes, equivalences and gradient check; writes probe.json.
/// `fusion = ablation` (or `all`) probes all five ablation strategies.
CommandResult run_probe(const PipelineConfig& config);
/// bench: preprocessing / inference / total latency means; writes bench.json.
CommandResult run_bench(const PipelineConfig& config);

/// Generated losses and filter outcome of one contamination experiment.
struct SynthExperiment {
  std::vector<double> losses;
  std::vector<bool> planted;
  double planted_value = 0.0;
  FilterReport report;
  std::size_t planted_count = 0;
  std::size_t planted_discarded = 0;
  std::size_t clean_count = 0;
  std::size_t clean_kept = 0;
};

/// Draws `count` losses (clean ones from N(clean_mu, clean_sigma^2), the
/// planted ones fixed at clean_mu + shift * clean_sigma, shuffled) and filters
/// them at `n`.
SynthExperiment run_synth_experiment(const SynthConfig& synth, double n, std::uint64_t seed);

/// Table-style text rendering of a bench report.
std::string format_bench_table(const nlohmann::ordered_json& bench_report);

/// The five ablation strategies: last, layer:middle, layer:deep,
/// mean:middle,deep and mean:shallow,middle,deep.
std::vector<std::string> ablation_strategies();

struct ProbeOutcome {
  bool ok = true;
  nlohmann::ordered_json report;
  std::vector<std::string> failures;
};
ProbeOutcome probe_strategy(const vit::FusionStrategy& strategy, const vit::TrunkConfig& trunk,
                            std::uint64_t seed);

}  // namespace beecurate
