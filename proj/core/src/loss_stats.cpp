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

#include "beecurate/loss_stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "beecurate/error.hpp"

namespace beecurate {

namespace {

// Neumaier's variant of Kahan summation; the running total is independent of
// input order up to a few ulps of the exact sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

template <typename Label>
LossStats fit_impl(std::size_t count, auto&& value_at, Label&& label_at) {
  if (count < 2)
    throw InsufficientDataError("fitting a normal model needs at least 2 losses, got " + std::to_string(count));

  LossStats s;
  s.count = count;
  s.min_loss = value_at(0);
  s.max_loss = value_at(0);
  CompensatedSum sum;
  for (std::size_t i = 0; i < count; ++i) {
    const double x = value_at(i);
    if (!std::isfinite(x)) {
      const std::string who = label_at(i);
      throw ValidationError(who, "non-finite loss for sample '" + who + "'");
    }
    s.min_loss = std::min(s.min_loss, x);
    s.max_loss = std::max(s.max_loss, x);
    sum.add(x);
  }

  if (s.min_loss == s.max_loss) {
    s.mu = s.min_loss;
    s.sigma = 0.0;
    return s;
  }

  const double n = static_cast<double>(count);
  s.mu = std::clamp(sum.value() / n, s.min_loss, s.max_loss);

  // Corrected two-pass: the residual sum of deviations removes the rounding
  // error left in mu.
  CompensatedSum dev;
  CompensatedSum dev2;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = value_at(i) - s.mu;
    dev.add(d);
    dev2.add(d * d);
  }
  const double r = dev.value();
  const double var = std::max(0.0, (dev2.value() - r * r / n) / n);
  s.sigma = std::sqrt(var);
  return s;
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

LossStats fit_normal(std::span<const double> losses) {
  return fit_impl(
      losses.size(), [&](std::size_t i) { return losses[i]; },
      [](std::size_t i) { return "#" + std::to_string(i); });
}

LossStats fit_normal(std::span<const LossRecord> losses) {
  return fit_impl(
      losses.size(), [&](std::size_t i) { return losses[i].loss; },
      [&](std::size_t i) { return losses[i].sample_id; });
}

double normal_pdf(double x, double mu, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("normal_pdf: sigma must be positive");
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

double outlier_threshold(const LossStats& stats, double n) {
  if (!(n > 0.0)) throw DomainError("sigma multiplier n must be positive");
  return stats.mu + n * stats.sigma;
}

double expected_retention(double n) {
  return 0.5 * std::erfc(-n / std::numbers::sqrt2);
}

std::vector<HistogramBin> loss_histogram(std::span<const double> losses, const LossStats& stats,
                                         std::size_t bins) {
  if (bins == 0) throw DomainError("histogram needs at least one bin");
  std::vector<HistogramBin> hist(bins);
  const double width = (stats.max_loss - stats.min_loss) / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) hist[b].lower = stats.min_loss + static_cast<double>(b) * width;
  for (const double x : losses) {
    std::size_t b = 0;
    if (width > 0.0) {
      const double pos = (x - stats.min_loss) / width;
      b = pos <= 0.0 ? 0 : std::min(bins - 1, static_cast<std::size_t>(pos));
    }
    ++hist[b].count;
  }
  return hist;
}

std::vector<std::string> filter_config_warnings(const FilterConfig& config) {
  std::vector<std::string> w;
  if (config.n < 1.0 || config.n > 3.0)
    w.push_back("sigma multiplier n=" + format_double(config.n) + " is outside the customary range [1, 3]");
  return w;
}

FilterResult filter_dataset(std::span<const SampleRecord> samples, std::span<const LossRecord> losses,
                            const FilterConfig& config) {
  if (!(config.n > 0.0)) throw DomainError("sigma multiplier n must be positive");

  std::string scorer = config.scorer_id;
  if (scorer.empty()) {
    for (const auto& r : losses) {
      if (scorer.empty()) {
        scorer = r.scorer_id;
      } else if (r.scorer_id != scorer) {
        throw ValidationError(r.scorer_id, "losses carry several scorers ('" + scorer + "', '" + r.scorer_id +
                                               "'); select one explicitly");
      }
    }
  }

  std::unordered_map<std::string, std::size_t> sample_index;
  sample_index.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!sample_index.emplace(samples[i].id, i).second)
      throw ValidationError(samples[i].id, "duplicate sample id '" + samples[i].id + "'");
  }

  std::vector<const LossRecord*> by_sample(samples.size(), nullptr);
  for (const auto& r : losses) {
    if (r.scorer_id != scorer) continue;
    auto it = sample_index.find(r.sample_id);
    if (it == sample_index.end())
      throw ValidationError(r.sample_id, "loss record for unknown sample '" + r.sample_id + "'");
    if (by_sample[it->second] != nullptr)
      throw ValidationError(r.sample_id, "duplicate loss record for sample '" + r.sample_id + "'");
    validate_loss(r);
    by_sample[it->second] = &r;
  }

  std::vector<double> values(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (by_sample[i] == nullptr)
      throw ValidationError(samples[i].id, "sample '" + samples[i].id + "' has no loss record for scorer '" +
                                               scorer + "'");
    values[i] = by_sample[i]->loss;
  }

  FilterResult result;
  FilterReport& rep = result.report;
  rep.stats = fit_normal(values);
  rep.n = config.n;
  rep.scorer_id = scorer;
  rep.threshold = outlier_threshold(rep.stats, config.n);
  rep.warnings = filter_config_warnings(config);

  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (is_outlier(values[i], rep.threshold)) {
      rep.discarded_ids.push_back(samples[i].id);
    } else {
      result.kept.push_back(samples[i]);
    }
  }
  rep.kept_count = result.kept.size();
  rep.discarded_count = rep.discarded_ids.size();
  rep.histogram = loss_histogram(values, rep.stats);
  return result;
}

std::string report_to_json(const FilterReport& r) {
  nlohmann::ordered_json j;
  j["stats"] = {{"count", r.stats.count},
                {"mu", r.stats.mu},
                {"sigma", r.stats.sigma},
                {"min_loss", r.stats.min_loss},
                {"max_loss", r.stats.max_loss},
                {"std_convention", kStdConvention}};
  j["n"] = r.n;
  j["threshold"] = r.threshold;
  j["scorer_id"] = r.scorer_id;
  j["kept_count"] = r.kept_count;
  j["discarded_count"] = r.discarded_count;
  j["discarded_ids"] = r.discarded_ids;
  auto hist = nlohmann::ordered_json::array();
  for (const auto& b : r.histogram) hist.push_back({{"bin_lower", b.lower}, {"count", b.count}});
  j["histogram"] = std::move(hist);
  j["warnings"] = r.warnings;
  return j.dump(2) + "\n";
}

std::string histogram_to_csv(std::span<const HistogramBin> histogram) {
  std::ostringstream out;
  out << "bin_lower,count\n";
  for (const auto& b : histogram) out << format_double(b.lower) << ',' << b.count << '\n';
  return out.str();
}

}  // namespace beecurate
