#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tscp/calibrate.hpp"
#include "tscp/conformal.hpp"
#include "tscp/logits.hpp"
#include "tscp/metrics.hpp"

namespace tscp {

/// Temperature grid for sweep experiments. The default floor of 0.3 guards
/// the regime where the threshold saturates at 1 and coverage degrades;
/// override_floor lets callers study that regime deliberately.
struct TemperatureGrid {
  double t_min = 0.5;
  double t_max = 5.0;
  double step = 0.1;
  bool override_floor = false;

  std::vector<double> values() const;
};

inline constexpr double kTemperatureFloor = 0.3;

struct SweepEntry {
  double q_hat = 0.0;  // median across trials
  MetricsReport report;
};

/// Per-temperature thresholds and metrics for each method, aggregated with
/// median-of-means across trials.
struct SweepCurve {
  std::vector<double> temperatures;
  std::vector<ScoreMethod> methods;
  // per_method[m][t] aligns with methods[m] x temperatures[t].
  std::vector<std::vector<SweepEntry>> per_method;
  double alpha = 0.1;
  std::size_t num_trials = 1;
  std::uint64_t base_seed = 0;
  double t_star = 1.0;  // ECE-optimal temperature of the calibration split
  /// Empirical peak of AvgSize per adaptive method (ties: smallest T).
  std::map<std::string, double> t_c_empirical;

  std::size_t method_index(const std::string& display_name) const;
};

/// Full sweep: per trial the calibration/CP/eval split is redrawn from the
/// given fractions, thresholds are fitted on the CP split at each grid
/// temperature, metrics are computed on the eval split, and trials aggregate
/// via median-of-means.
SweepCurve run_sweep(const LogitsTable& table, const SplitPlan& split,
                     const std::vector<ScoreMethod>& methods, double alpha,
                     const TemperatureGrid& grid, std::size_t num_trials,
                     std::uint64_t base_seed);

/// Calibration-set approximation of the sweep: a single trial on the given
/// split where the CP split fits the thresholds and the calibration split is
/// reused as the evaluation set (exchangeability is preserved because the
/// calibration split never touches the CP fit).
SweepCurve approximate_curves(const LogitsTable& table, const SplitPlan& split,
                              const std::vector<ScoreMethod>& methods, double alpha,
                              const TemperatureGrid& grid, std::uint64_t seed);

enum class SelectionRule { kMinTopCovGap, kMinAvgSize, kUserFixed };

SelectionRule parse_selection_rule(const std::string& name);
std::string selection_rule_name(SelectionRule rule);

/// Two-branch temperature plan: T* feeds the confidence branch, T-hat the
/// prediction-set branch.
struct GuidelinePlan {
  double t_star = 1.0;
  double t_hat = 1.0;
  SelectionRule rule = SelectionRule::kMinTopCovGap;
  std::string method;  // display name of the method the rule was applied to
  SweepCurve approximated_curve;
};

/// Applies the selection rule to the curve of one method (grid argmin; ties
/// resolve to the smallest temperature). kUserFixed passes fixed_t through.
GuidelinePlan select_t_hat(const SweepCurve& curve, SelectionRule rule,
                           const std::string& method_name,
                           std::optional<double> fixed_t = std::nullopt);

struct MicroscopicDiff {
  std::vector<double> sorted_differences;  // |set at t_b| - |set at t_a|, descending
  std::size_t increased = 0;
  std::size_t unchanged = 0;
  std::size_t decreased = 0;
  double mean_difference = 0.0;
};

/// Per-evaluation-sample prediction-set size change between two temperatures
/// for an adaptive method (APS or RAPS; LAC is rejected).
MicroscopicDiff microscopic_diff(const LogitsTable& table, const SplitPlan& split,
                                 const ScoreMethod& method, double alpha,
                                 Temperature t_a, Temperature t_b, std::uint64_t seed);

struct TwoBranchOutput {
  double confidence = 0.0;
  PredictionSet set;
};

/// Runs both branches of the guideline on one sample: confidence at T*, the
/// prediction set at T-hat. The fitted inputs must match the plan's
/// temperatures or a ConsistencyError is thrown.
TwoBranchOutput two_branch_predict(const GuidelinePlan& plan,
                                   const CalibrationResult& model_conf,
                                   const CPModel& model_cp,
                                   std::span<const double> logits, double u = 0.0);

/// CSV `T,method,q_hat,avg_size,mar_cov_gap,top_cov_gap,avg_cov_gap`.
std::string sweep_curve_csv(const SweepCurve& curve);
/// Sidecar metadata (grid, seeds, t_star, empirical peaks).
std::string sweep_curve_meta_json(const SweepCurve& curve);

std::string guideline_plan_json(const GuidelinePlan& plan);
GuidelinePlan guideline_plan_from_json(const std::string& text);

}  // namespace tscp
