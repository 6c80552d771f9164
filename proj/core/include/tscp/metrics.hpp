#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tscp/conformal.hpp"
#include "tscp/logits.hpp"

namespace tscp {

/// Per-class coverage value for classes with no evaluation samples.
inline constexpr double kMissingClassCoverage = -1.0;

struct MetricsReport {
  double avg_size = 0.0;
  double mar_cov_gap = 0.0;
  double top_cov_gap = 0.0;
  double avg_cov_gap = 0.0;
  double alpha = 0.0;
  std::size_t n_eval = 0;
  std::size_t num_trials = 1;
  std::vector<double> per_class_coverage;     // kMissingClassCoverage when absent
  std::vector<std::size_t> per_class_counts;  // evaluation samples per class
};

/// Evaluate a fitted predictor on the evaluation subset. Randomized methods
/// draw one u per evaluation sample (in index order) from the seeded stream,
/// so the result is a pure function of (model, table, indices, seed).
///
/// TopCovGap averages the ceil(0.05 * C) largest per-class deviations from
/// 1 - alpha among classes that have evaluation samples; AvgCovGap averages
/// over all such classes.
MetricsReport evaluate(const CPModel& model, const LogitsTable& table,
                       std::span<const std::size_t> eval_indices, std::uint64_t seed);

MetricsReport evaluate(const MondrianModel& model, const LogitsTable& table,
                       std::span<const std::size_t> eval_indices, std::uint64_t seed);

/// Robust trial aggregation: runs trial_fn with seeds base_seed .. base_seed +
/// num_trials - 1 and reports the per-metric median of the per-trial values
/// (even counts: mean of the two central values). Per-class coverage is
/// aggregated elementwise, ignoring missing-class sentinels.
MetricsReport median_of_means(
    const std::function<MetricsReport(std::uint64_t seed)>& trial_fn,
    std::size_t num_trials, std::uint64_t base_seed);

/// Median with the even-count mean-of-central-pair convention.
double median(std::vector<double> values);

std::string metrics_report_json(const MetricsReport& report);

/// One batch CSV row: `T,method,avg_size,mar_cov_gap,top_cov_gap,avg_cov_gap`.
std::string metrics_csv_row(double temperature, const std::string& method,
                            const MetricsReport& report);

}  // namespace tscp
