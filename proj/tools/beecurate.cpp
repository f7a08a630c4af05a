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

// beecurate: loss-based data curation and fusion-probe command line.
//
//   beecurate score|filter|synth|probe|bench --config <path> [--n <real>] [--seed <int>] [--out <dir>]

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "beecurate/error.hpp"
#include "beecurate/pipeline.hpp"

namespace {

enum ExitCode : int { kOk = 0, kPostconditionFailed = 1, kError = 2 };

void print_warnings(const beecurate::CommandResult& r) {
  for (const auto& w : r.warnings) std::cerr << "beecurate: warning: " << w << '\n';
}

int summarize(const std::string& command, const beecurate::CommandResult& r) {
  print_warnings(r);
  const auto& rep = r.report;
  if (command == "score") {
    std::cout << "scored " << rep.at("count").get<std::size_t>() << " samples -> "
              << rep.at("losses").get<std::string>() << '\n';
  } else if (command == "filter") {
    const auto& s = rep.at("stats");
    std::printf("mu=%.6f sigma=%.6f n=%g threshold=%.6f kept=%zu discarded=%zu\n", s.at("mu").get<double>(),
                s.at("sigma").get<double>(), rep.at("n").get<double>(), rep.at("threshold").get<double>(),
                rep.at("kept_count").get<std::size_t>(), rep.at("discarded_count").get<std::size_t>());
  } else if (command == "bench") {
    std::cout << beecurate::format_bench_table(rep);
  } else {
    std::cout << rep.dump(2) << '\n';
  }
  if (!r.ok) {
    std::cerr << "beecurate: " << command << ": postcondition check failed\n";
    if (auto it = rep.find("failures"); it != rep.end())
      for (const auto& f : *it) std::cerr << "  failed: " << f.get<std::string>() << '\n';
    return kPostconditionFailed;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Loss-based data curation, fusion probes and decoding benchmarks"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<double> n;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;

  const std::pair<const char*, const char*> commands[] = {
      {"score", "Score every sample and write losses.jsonl"},
      {"filter", "Fit the loss distribution and drop the upper tail"},
      {"synth", "Run the planted-outlier contamination experiment"},
      {"probe", "Check fusion shapes, equivalences and gradients"},
      {"bench", "Time preprocessing and decoding"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "Pipeline config file (key = value)");
    sub->add_option("--n", n, "Sigma multiplier for the outlier threshold");
    sub->add_option("--seed", seed, "Seed for every stochastic component");
    sub->add_option("--out", out, "Output directory");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    beecurate::PipelineConfig config =
        config_path.empty() ? beecurate::PipelineConfig{} : beecurate::load_config(config_path);
    if (n) config.n = *n;
    if (seed) beecurate::set_seed(config, *seed);
    if (out) config.out = *out;
    if (config.n < 1.0 || config.n > 3.0) {
      // Reported again inside report.json for filter runs.
      if (command != "filter" && command != "synth")
        std::cerr << "beecurate: warning: n=" << config.n << " is outside the customary range [1, 3]\n";
    }

    beecurate::CommandResult result;
    if (command == "score") {
      result = beecurate::run_score(config);
    } else if (command == "filter") {
      result = beecurate::run_filter(config);
    } else if (command == "synth") {
      result = beecurate::run_synth(config);
    } else if (command == "probe") {
      result = beecurate::run_probe(config);
    } else {
      result = beecurate::run_bench(config);
    }
    return summarize(command, result);
  } catch (const std::exception& e) {
    std::cerr << "beecurate: error: " << e.what() << '\n';
    return kError;
  }
}
