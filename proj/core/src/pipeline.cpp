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

#include "beecurate/pipeline.hpp"

#include <sys/stat.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "beecurate/error.hpp"
#include "beecurate/records.hpp"
#include "beecurate/rng.hpp"
#include "beecurate/scorers.hpp"

namespace beecurate {

namespace {

using json = nlohmann::ordered_json;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view value, const std::string& source, std::size_t line, std::string_view key) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty())
    throw ParseError(source, line, "invalid value '" + std::string(value) + "' for key '" + std::string(key) + "'");
  return out;
}

bool parse_bool(std::string_view value, const std::string& source, std::size_t line, std::string_view key) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ParseError(source, line, "invalid boolean '" + std::string(value) + "' for key '" + std::string(key) + "'");
}

std::filesystem::path resolve(const std::filesystem::path& base, std::string_view value) {
  std::filesystem::path p{std::string(value)};
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());
}

void require_file(const std::filesystem::path& path, const char* what) {
  if (path.empty()) throw Error(std::string("no ") + what + " path configured");
  if (!std::filesystem::is_regular_file(path)) throw Error(std::string(what) + " '" + path.string() + "' not found");
}

// Manifest timestamps must not change between identical reruns, so they come
// from SOURCE_DATE_EPOCH when set and otherwise from the source file's mtime.
std::string stable_timestamp(const std::filesystem::path& source) {
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (end != env && *end == '\0') return iso8601_utc(v);
  }
  struct stat st {};
  if (::stat(source.c_str(), &st) != 0) throw Error("cannot stat '" + source.string() + "'");
  return iso8601_utc(static_cast<long long>(st.st_mtime));
}

json stats_json(const LossStats& s) {
  return json{{"count", s.count}, {"mu", s.mu},           {"sigma", s.sigma},
              {"min_loss", s.min_loss}, {"max_loss", s.max_loss}, {"std_convention", kStdConvention}};
}

json trunk_json(const vit::TrunkConfig& t) {
  return json{{"depth", t.depth},         {"hidden_dim", t.hidden_dim}, {"num_patches", t.num_patches},
              {"heads", t.heads},         {"patch_dim", t.patch_dim},   {"seed", t.seed}};
}

json sampling_json(const SamplingConfig& s) {
  return json{{"temperature", s.temperature},
              {"top_k", s.top_k},
              {"top_p", s.top_p},
              {"max_new_tokens", s.max_new_tokens},
              {"seed", s.seed}};
}

vit::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, CounterRng rng) {
  vit::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

std::vector<LossRecord> losses_for(const PipelineConfig& config, const std::vector<SampleRecord>& samples) {
  if (auto ext = config.external_losses()) {
    require_file(*ext, "external losses file");
    std::set<std::string> ids;
    for (const auto& s : samples) ids.insert(s.id);
    return import_external_losses(*ext, ids);
  }
  const auto path = config.out / outputs::kLosses;
  if (!std::filesystem::is_regular_file(path))
    throw Error("losses file '" + path.string() + "' not found; run `beecurate score` first");
  return read_losses(path);
}

}  // namespace

void SynthConfig::validate() const {
  if (count < 2) throw DomainError("synth_count must be at least 2");
  if (!(contamination_rate >= 0.0 && contamination_rate < 0.5))
    throw DomainError("synth_contamination must lie in [0, 0.5)");
  if (!(shift_in_sigmas >= 0.0) || !std::isfinite(shift_in_sigmas)) throw DomainError("synth_shift must be >= 0");
  if (!(clean_sigma > 0.0) || !std::isfinite(clean_sigma)) throw DomainError("synth_sigma must be positive");
  if (!std::isfinite(clean_mu)) throw DomainError("synth_mu must be finite");
  if (clean_mu + (shift_in_sigmas + 10.0) * clean_sigma < 0.0 || clean_mu < 0.0)
    throw DomainError("synthetic losses must stay non-negative; raise synth_mu");
}

std::optional<std::filesystem::path> PipelineConfig::external_losses() const {
  constexpr std::string_view kPrefix = "external:";
  if (std::string_view(scorer).starts_with(kPrefix)) return std::filesystem::path(scorer.substr(kPrefix.size()));
  return std::nullopt;
}

void PipelineConfig::validate() const {
  if (!(n > 0.0) || !std::isfinite(n)) throw DomainError("filter n must be positive");
  if (scorer != kToyScorerId && !external_losses())
    throw DomainError("scorer must be '" + std::string(kToyScorerId) + "' or 'external:<path>'");
  sampling.validate();
  trunk.validate();
  synth.validate();
  if (bench.runs < 1) throw DomainError("bench_runs must be at least 1");
  if (bench.warmup < 0) throw DomainError("bench_warmup must be non-negative");
  if (bench.vocab_size < 2) throw DomainError("bench_vocab must be at least 2");
}

void set_seed(PipelineConfig& config, std::uint64_t seed) {
  config.seed = seed;
  config.sampling.seed = seed;
  config.trunk.seed = seed;
}

PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir, const std::string& source) {
  PipelineConfig c;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  std::set<std::string> seen;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, lineno, "expected 'key = value'");
    const auto key = std::string(trim(line.substr(0, eq)));
    const auto value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ParseError(source, lineno, "duplicate key '" + key + "'");

    const auto num = [&]<typename T>(T& field) { field = parse_number<T>(value, source, lineno, key); };
    if (key == "samples") {
      c.samples = resolve(base_dir, value);
    } else if (key == "scorer") {
      if (value.starts_with("external:")) {
        c.scorer = "external:" + resolve(base_dir, value.substr(9)).string();
      } else {
        c.scorer = std::string(value);
      }
    } else if (key == "n") {
      num(c.n);
    } else if (key == "out") {
      c.out = resolve(base_dir, value);
    } else if (key == "temperature") {
      num(c.sampling.temperature);
    } else if (key == "top_k") {
      num(c.sampling.top_k);
    } else if (key == "top_p") {
      num(c.sampling.top_p);
    } else if (key == "max_new_tokens") {
      num(c.sampling.max_new_tokens);
    } else if (key == "seed") {
      std::uint64_t seed = 0;
      num(seed);
      set_seed(c, seed);
    } else if (key == "fusion") {
      c.fusion = std::string(value);
    } else if (key == "depth") {
      num(c.trunk.depth);
    } else if (key == "hidden_dim") {
      num(c.trunk.hidden_dim);
    } else if (key == "num_patches") {
      num(c.trunk.num_patches);
    } else if (key == "heads") {
      num(c.trunk.heads);
    } else if (key == "patch_dim") {
      num(c.trunk.patch_dim);
    } else if (key == "manifest_name") {
      c.manifest_name = std::string(value);
    } else if (key == "synth_count") {
      num(c.synth.count);
    } else if (key == "synth_contamination") {
      num(c.synth.contamination_rate);
    } else if (key == "synth_shift") {
      num(c.synth.shift_in_sigmas);
    } else if (key == "synth_mu") {
      num(c.synth.clean_mu);
    } else if (key == "synth_sigma") {
      num(c.synth.clean_sigma);
    } else if (key == "bench_runs") {
      num(c.bench.runs);
    } else if (key == "bench_warmup") {
      num(c.bench.warmup);
    } else if (key == "bench_never_eos") {
      c.bench.never_eos = parse_bool(value, source, lineno, key);
    } else if (key == "bench_vocab") {
      num(c.bench.vocab_size);
    } else {
      throw ParseError(source, lineno, "unknown key '" + key + "'");
    }
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("config file '" + path.string() + "' not found");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path(), path.string());
}

// ---------------------------------------------------------------------------

CommandResult run_score(const PipelineConfig& config) {
  config.validate();
  require_file(config.samples, "samples file");
  const auto samples = read_samples(config.samples);

  std::vector<LossRecord> losses;
  if (auto ext = config.external_losses()) {
    require_file(*ext, "external losses file");
    std::set<std::string> ids;
    for (const auto& s : samples) ids.insert(s.id);
    losses = import_external_losses(*ext, ids);
  } else {
    const auto model = train_bigram(samples);
    losses = score_dataset(samples, model);
  }

  ensure_dir(config.out);
  const auto path = config.out / outputs::kLosses;
  write_losses(path, losses);

  CommandResult r;
  r.report = json{{"command", "score"},
                  {"scorer", config.scorer},
                  {"samples", config.samples.string()},
                  {"count", losses.size()},
                  {"losses", path.string()}};
  return r;
}

CommandResult run_filter(const PipelineConfig& config) {
  config.validate();
  require_file(config.samples, "samples file");
  const auto samples = read_samples(config.samples);
  const auto losses = losses_for(config, samples);

  FilterConfig fc;
  fc.n = config.n;
  fc.scorer_id = config.external_losses() ? std::string() : std::string(kToyScorerId);
  const auto result = filter_dataset(samples, losses, fc);

  DatasetManifest manifest;
  manifest.name = config.manifest_name;
  manifest.source_uri = config.samples.string();
  manifest.created_at = stable_timestamp(config.samples);
  manifest.provenance = outputs::kReport;
  manifest.sample_ids.reserve(result.kept.size());
  for (const auto& s : result.kept) manifest.sample_ids.push_back(s.id);

  ensure_dir(config.out);
  const std::string report_text = report_to_json(result.report);
  write_text(config.out / outputs::kReport, report_text);
  write_text(config.out / outputs::kHistogram, histogram_to_csv(result.report.histogram));
  write_manifest(config.out / outputs::kManifest, manifest);

  CommandResult r;
  r.report = json::parse(report_text);
  r.warnings = result.report.warnings;
  r.ok = result.report.kept_count + result.report.discarded_count == result.report.stats.count;
  return r;
}

SynthExperiment run_synth_experiment(const SynthConfig& synth, double n, std::uint64_t seed) {
  synth.validate();
  if (!(n > 0.0)) throw DomainError("filter n must be positive");
  const CounterRng root(seed);

  SynthExperiment e;
  e.planted_count = static_cast<std::size_t>(std::llround(static_cast<double>(synth.count) * synth.contamination_rate));
  e.clean_count = synth.count - e.planted_count;
  e.planted_value = synth.clean_mu + synth.shift_in_sigmas * synth.clean_sigma;

  e.losses.reserve(synth.count);
  e.planted.reserve(synth.count);
  CounterRng draws = root.split(1);
  for (std::size_t i = 0; i < e.clean_count; ++i) {
    // Rejecting negative draws keeps losses valid; at the default 4-sigma
    // margin this never triggers.
    double x = draws.normal(synth.clean_mu, synth.clean_sigma);
    while (x < 0.0) x = draws.normal(synth.clean_mu, synth.clean_sigma);
    e.losses.push_back(x);
    e.planted.push_back(false);
  }
  for (std::size_t i = 0; i < e.planted_count; ++i) {
    e.losses.push_back(e.planted_value);
    e.planted.push_back(true);
  }
  CounterRng shuffle = root.split(2);
  for (std::size_t i = e.losses.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(shuffle.below(i));
    std::swap(e.losses[i - 1], e.losses[j]);
    std::vector<bool>::swap(e.planted[i - 1], e.planted[j]);
  }

  std::vector<SampleRecord> samples(e.losses.size());
  std::vector<LossRecord> records(e.losses.size());
  for (std::size_t i = 0; i < e.losses.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "syn-%07zu", i);
    samples[i].id = id;
    samples[i].answer = "-";
    records[i] = LossRecord{id, e.losses[i], "synthetic"};
  }
  const auto result = filter_dataset(samples, records, FilterConfig{n, "synthetic"});
  e.report = result.report;

  const double threshold = e.report.threshold;
  for (std::size_t i = 0; i < e.losses.size(); ++i) {
    const bool discarded = is_outlier(e.losses[i], threshold);
    if (e.planted[i] && discarded) ++e.planted_discarded;
    if (!e.planted[i] && !discarded) ++e.clean_kept;
  }
  return e;
}

CommandResult run_synth(const PipelineConfig& config) {
  config.validate();
  const auto e = run_synth_experiment(config.synth, config.n, config.seed);

  // Independent re-scan: the discarded set must be exactly {i : loss_i > threshold}.
  std::set<std::string> discarded(e.report.discarded_ids.begin(), e.report.discarded_ids.end());
  bool consistent = discarded.size() == e.report.discarded_count;
  for (std::size_t i = 0; i < e.losses.size() && consistent; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "syn-%07zu", i);
    consistent = (e.losses[i] > e.report.threshold) == discarded.contains(id);
  }

  const double total = static_cast<double>(e.losses.size());
  json rep{{"command", "synth"},
           {"count", e.losses.size()},
           {"clean_count", e.clean_count},
           {"planted_count", e.planted_count},
           {"planted_value", e.planted_value},
           {"contamination_rate", config.synth.contamination_rate},
           {"shift_in_sigmas", config.synth.shift_in_sigmas},
           {"clean_mu", config.synth.clean_mu},
           {"clean_sigma", config.synth.clean_sigma},
           {"n", config.n},
           {"seed", config.seed},
           {"stats", stats_json(e.report.stats)},
           {"threshold", e.report.threshold},
           {"kept_count", e.report.kept_count},
           {"discarded_count", e.report.discarded_count},
           {"retention", static_cast<double>(e.report.kept_count) / total}};
  rep["clean_retention"] =
      e.clean_count ? json(static_cast<double>(e.clean_kept) / static_cast<double>(e.clean_count)) : json(nullptr);
  rep["planted_recall"] = e.planted_count ? json(static_cast<double>(e.planted_discarded) /
                                                 static_cast<double>(e.planted_count))
                                          : json(nullptr);
  rep["expected_retention"] = expected_retention(config.n);
  rep["rescan_consistent"] = consistent;
  rep["warnings"] = e.report.warnings;

  ensure_dir(config.out);
  write_text(config.out / outputs::kSynth, rep.dump(2) + "\n");

  CommandResult r;
  r.ok = consistent;
  r.report = std::move(rep);
  r.warnings = e.report.warnings;
  return r;
}

std::vector<std::string> ablation_strategies() {
  return {"last", "layer:middle", "layer:deep", "mean:middle,deep", "mean:shallow,middle,deep"};
}

ProbeOutcome probe_strategy(const vit::FusionStrategy& strategy, const vit::TrunkConfig& trunk_config,
                            std::uint64_t seed) {
  using namespace vit;
  const auto trunk = init_trunk(trunk_config);
  strategy.validate(trunk_config.depth);
  const CounterRng root(seed);
  const Matrix patches = random_matrix(trunk_config.num_patches, trunk_config.patch_dim, root.split(1));
  const Matrix embeddings = embed_patches(trunk, patches);

  std::set<int> all_layers;
  for (int k = 1; k <= trunk_config.depth; ++k) all_layers.insert(k);
  const auto features = forward_with_taps(trunk, embeddings, all_layers);
  const auto untapped = forward_with_taps(trunk, embeddings, {});

  const int d = trunk_config.hidden_dim;
  const auto params = init_projector({d, 2 * d, d, true, Activation::Gelu}, mix64(seed + 1));

  ProbeOutcome o;
  const auto check = [&](const std::string& name, bool pass) {
    if (!pass) {
      o.ok = false;
      o.failures.push_back(name);
    }
    return pass;
  };

  const FusionStrategy baseline{LastOnly{}, strategy.combine};
  const Matrix out = project(fuse(features, strategy, params), params);
  const Matrix base = project(fuse(features, baseline, params), params);
  const bool shape_ok = check("shape matches last-only baseline", out.rows() == base.rows() && out.cols() == base.cols());
  const bool tap_transparent = check("final map independent of taps", features.final == untapped.final);

  auto layers = strategy.required_taps();
  if (layers.empty()) layers.push_back(layer_aliases(trunk_config.depth).middle);

  json equivalences = json::array();
  const auto record = [&](const std::string& name, bool exact) {
    check(name, exact);
    equivalences.push_back(json{{"name", name}, {"exact", exact}});
  };
  for (const int k : layers) {
    for (const auto mode : {CombineMode::Additive, CombineMode::ConcatProject}) {
      const char* tag = mode == CombineMode::Additive ? "add" : "concat";
      const FusionStrategy single{SingleLayer{k}, mode};
      const FusionStrategy mean{MultiLayerMean{{k}}, mode};
      record("mean:" + std::to_string(k) + " == layer:" + std::to_string(k) + " combine=" + tag,
             fuse(features, mean, params) == fuse(features, single, params));
    }
    TapFeatures zeroed = features;
    zeroed.taps[k].setZero();
    record("layer:" + std::to_string(k) + " combine=add with zero tap == last",
           fuse(zeroed, FusionStrategy{SingleLayer{k}, CombineMode::Additive}, params) ==
               fuse(zeroed, FusionStrategy{LastOnly{}, CombineMode::Additive}, params));
  }
  if (layers.size() >= 2) {
    TapFeatures same = features;
    for (const int k : layers) same.taps[k] = features.taps.at(layers.front());
    const FusionStrategy single{SingleLayer{layers.front()}, strategy.combine};
    const FusionStrategy mean{MultiLayerMean{layers}, strategy.combine};
    // Summing k copies and dividing by k rounds, so this one is approximate.
    const Matrix a = fuse(same, mean, params), b = fuse(same, single, params);
    const bool close = a.isApprox(b, 1e-14);
    check("mean of identical taps ~= single layer", close);
    equivalences.push_back(json{{"name", "mean of identical taps ~= layer:" + std::to_string(layers.front())},
                                {"exact", a == b},
                                {"within_1e-14", close}});
  }

  constexpr double kGradTolerance = 1e-4;
  const auto grad = grad_check(strategy, params, features);
  const bool grad_ok = check("gradient check within 1e-4", grad.max_relative_error <= kGradTolerance);

  o.report = json{{"strategy", strategy.to_string()},
                  {"output_shape", {out.rows(), out.cols()}},
                  {"baseline_shape", {base.rows(), base.cols()}},
                  {"shape_matches_baseline", shape_ok},
                  {"tap_transparent", tap_transparent},
                  {"equivalences", std::move(equivalences)},
                  {"grad_check",
                   {{"max_relative_error", grad.max_relative_error},
                    {"worst_parameter", grad.worst_parameter},
                    {"parameters_checked", grad.parameters_checked},
                    {"tolerance", kGradTolerance},
                    {"pass", grad_ok}}},
                  {"ok", o.ok},
                  {"failures", o.failures}};
  return o;
}

CommandResult run_probe(const PipelineConfig& config) {
  config.validate();
  std::vector<std::string> names;
  if (config.fusion == "ablation" || config.fusion == "all") {
    names = ablation_strategies();
  } else {
    names.push_back(config.fusion);
  }

  CommandResult r;
  json strategies = json::array();
  json failures = json::array();
  for (const auto& name : names) {
    const auto strategy = vit::parse_fusion_strategy(name, config.trunk.depth);
    auto o = probe_strategy(strategy, config.trunk, config.seed);
    o.report["name"] = name;
    if (!o.ok) {
      r.ok = false;
      for (const auto& f : o.failures) failures.push_back(name + ": " + f);
    }
    strategies.push_back(std::move(o.report));
  }
  r.report = json{{"command", "probe"},
                  {"trunk", trunk_json(config.trunk)},
                  {"seed", config.seed},
                  {"strategies", std::move(strategies)},
                  {"ok", r.ok},
                  {"failures", std::move(failures)}};

  ensure_dir(config.out);
  write_text(config.out / outputs::kProbe, r.report.dump(2) + "\n");
  return r;
}

namespace {

// Next-token logits from the projected visual context and the last token.
class ToyLmHead {
 public:
  ToyLmHead(const vit::RowVector& context, int vocab, bool never_eos, std::uint64_t seed)
      : context_(context), never_eos_(never_eos) {
    const CounterRng root(seed);
    const auto width = context.size();
    embed_ = random_matrix(vocab, width, root.split(1)) * 0.5;
    unembed_ = random_matrix(width, vocab, root.split(2)) / std::sqrt(static_cast<double>(width));
  }

  std::vector<double> operator()(std::span<const int> prefix) const {
    vit::RowVector state = context_;
    if (!prefix.empty()) state += embed_.row(prefix.back());
    const vit::RowVector hidden = state.array().tanh().matrix();
    const vit::RowVector logits = hidden * unembed_;
    std::vector<double> out(logits.data(), logits.data() + logits.size());
    if (never_eos_) out[kEos] = -std::numeric_limits<double>::infinity();
    return out;
  }

  static constexpr int kEos = 0;

 private:
  vit::RowVector context_;
  vit::Matrix embed_;
  vit::Matrix unembed_;
  bool never_eos_;
};

}  // namespace

CommandResult run_bench(const PipelineConfig& config) {
  using clock = std::chrono::steady_clock;
  using namespace vit;
  config.validate();

  const auto strategy = parse_fusion_strategy(config.fusion == "ablation" ? "layer:middle" : config.fusion,
                                              config.trunk.depth);
  const auto trunk = init_trunk(config.trunk);
  const int d = config.trunk.hidden_dim;
  const auto params = init_projector({d, 2 * d, d, true, Activation::Gelu}, mix64(config.seed + 1));
  const Matrix patches = random_matrix(config.trunk.num_patches, config.trunk.patch_dim, CounterRng(config.seed).split(1));
  const auto required = strategy.required_taps();
  const std::set<int> taps(required.begin(), required.end());

  struct Timing {
    std::int64_t pre_ns = 0;
    std::int64_t inf_ns = 0;
    std::int64_t total_ns = 0;
    std::size_t tokens = 0;
  };
  const auto run_once = [&] {
    Timing t;
    const auto t0 = clock::now();
    const Matrix visual = project(fuse(forward_with_taps(trunk, embed_patches(trunk, patches), taps), strategy, params),
                                  params);
    const RowVector context = visual.colwise().mean();
    const ToyLmHead head(context, config.bench.vocab_size, config.bench.never_eos, config.seed);
    const auto t1 = clock::now();
    const auto tokens = decode_loop(std::cref(head), config.sampling, ToyLmHead::kEos);
    const auto t2 = clock::now();
    t.pre_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
    t.inf_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t2 - t1).count();
    t.total_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t2 - t0).count();
    t.tokens = tokens.size();
    return t;
  };

  for (int i = 0; i < config.bench.warmup; ++i) run_once();
  std::int64_t pre = 0, inf = 0, total = 0;
  json per_run = json::array();
  std::size_t tokens = 0;
  for (int i = 0; i < config.bench.runs; ++i) {
    const auto t = run_once();
    pre += t.pre_ns;
    inf += t.inf_ns;
    total += t.total_ns;
    tokens = t.tokens;
    per_run.push_back(json{{"preprocessing_ms", t.pre_ns * 1e-6},
                           {"inference_ms", t.inf_ns * 1e-6},
                           {"total_ms", t.total_ns * 1e-6}});
  }
  const double runs = static_cast<double>(config.bench.runs);
  const double timer_resolution_ms =
      1e3 * static_cast<double>(clock::period::num) / static_cast<double>(clock::period::den);

  CommandResult r;
  r.report = json{{"command", "bench"},
                  {"runs", config.bench.runs},
                  {"warmup", config.bench.warmup},
                  {"fusion", strategy.to_string()},
                  {"trunk", trunk_json(config.trunk)},
                  {"sampling", sampling_json(config.sampling)},
                  {"never_eos", config.bench.never_eos},
                  {"tokens_per_run", tokens},
                  {"timer_resolution_ms", timer_resolution_ms},
                  {"columns", {"preprocessing_ms", "inference_ms", "total_ms"}},
                  {"mean",
                   {{"preprocessing_ms", static_cast<double>(pre) * 1e-6 / runs},
                    {"inference_ms", static_cast<double>(inf) * 1e-6 / runs},
                    {"total_ms", static_cast<double>(total) * 1e-6 / runs}}},
                  {"per_run", std::move(per_run)}};
  ensure_dir(config.out);
  write_text(config.out / outputs::kBench, r.report.dump(2) + "\n");
  return r;
}

std::string format_bench_table(const nlohmann::ordered_json& b) {
  char line[256];
  std::string out;
  std::snprintf(line, sizeof line, "# runs=%d warmup=%d max_new_tokens=%d temperature=%g top_k=%d top_p=%g fusion=%s\n",
                b.at("runs").get<int>(), b.at("warmup").get<int>(),
                b.at("sampling").at("max_new_tokens").get<int>(), b.at("sampling").at("temperature").get<double>(),
                b.at("sampling").at("top_k").get<int>(), b.at("sampling").at("top_p").get<double>(),
                b.at("fusion").get<std::string>().c_str());
  out += line;
  out += "| Preprocessing (ms) | Inference (ms) | Total (ms) |\n";
  out += "|---:|---:|---:|\n";
  const auto& m = b.at("mean");
  std::snprintf(line, sizeof line, "| %.3f | %.3f | %.3f |\n", m.at("preprocessing_ms").get<double>(),
                m.at("inference_ms").get<double>(), m.at("total_ms").get<double>());
  out += line;
  return out;
}

}  // namespace beecurate
