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
#include <span>
#include <string>
#include <vector>

#include "beecurate/records.hpp"

namespace beecurate {

/// Normal model fitted to a loss population. `sigma` is the population
/// standard deviation (divide by N).
struct LossStats {
  std::size_t count = 0;
  double mu = 0.0;
  double sigma = 0.0;
  double min_loss = 0.0;
  double max_loss = 0.0;

  friend bool operator==(const LossStats&, const LossStats&) = default;
};

struct FilterConfig {
  double n = 2.0;             // sigma multiplier
  std::string scorer_id;      // empty: accept whichever single scorer the losses carry
};

struct HistogramBin {
  double lower = 0.0;
  std::size_t count = 0;

  friend bool operator==(const HistogramBin&, const HistogramBin&) = default;
};

inline constexpr std::size_t kHistogramBins = 50;
inline constexpr const char* kStdConvention = "population";

struct FilterReport {
  LossStats stats;
  double threshold = 0.0;
  double n = 0.0;
  std::string scorer_id;
  std::size_t kept_count = 0;
  std::size_t discarded_count = 0;
  std::vector<std::string> discarded_ids;
  std::vector<HistogramBin> histogram;
  std::vector<std::string> warnings;
};

struct FilterResult {
  std::vector<SampleRecord> kept;
  FilterReport report;
};

/// Mean and population standard deviation with compensated summation, reduced
/// sequentially in input order. Throws InsufficientDataError for fewer than
/// two values and ValidationError (offender = index) for non-finite input.
LossStats fit_normal(std::span<const double> losses);
/// Same as above; errors name the offending sample id.
LossStats fit_normal(std::span<const LossRecord> losses);

/// Normal density with mean `mu` and standard deviation `sigma`. Throws
/// DomainError for sigma <= 0.
double normal_pdf(double x, double mu, double sigma);

/// mu + n * sigma. Throws DomainError for n <= 0.
double outlier_threshold(const LossStats& stats, double n);

/// Strict: a loss equal to the threshold is kept.
constexpr bool is_outlier(double loss, double threshold) { return loss > threshold; }

/// Standard normal CDF at n: the retained fraction of an exactly normal
/// population under the n-sigma rule.
double expected_retention(double n);

/// Equal-width bins spanning [min_loss, max_loss]; the last bin is closed.
std::vector<HistogramBin> loss_histogram(std::span<const double> losses, const LossStats& stats,
                                         std::size_t bins = kHistogramBins);

/// Warnings for a sigma multiplier outside the customary [1, 3] range.
std::vector<std::string> filter_config_warnings(const FilterConfig& config);

/// Joins samples with their losses (one record per sample for the configured
/// scorer), fits the normal model over the whole population in sample order,
/// and drops every sample whose loss is strictly above mu + n * sigma.
FilterResult filter_dataset(std::span<const SampleRecord> samples, std::span<const LossRecord> losses,
                            const FilterConfig& config);

std::string report_to_json(const FilterReport& report);
/// CSV with header `bin_lower,count`.
std::string histogram_to_csv(std::span<const HistogramBin> histogram);

}  // namespace beecurate
