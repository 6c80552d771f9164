#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tscp/logits.hpp"
#include "tscp/softmax.hpp"

namespace tscp {

enum class CalibrationObjective { kEce, kNll };

CalibrationObjective parse_objective(const std::string& name);
std::string objective_name(CalibrationObjective o);

/// Number of equal-width confidence bins used by ECE and reliability diagrams.
struct EceConfig {
  std::size_t num_bins = 10;
};

/// Search bracket for the temperature optimizer.
struct TemperatureSearch {
  double t_min = 0.1;
  double t_max = 10.0;
  double grid_step = 0.01;
};

struct CalibrationResult {
  double t_star = 1.0;
  CalibrationObjective objective = CalibrationObjective::kEce;
  double objective_value_before = 0.0;  // at T = 1
  double objective_value_after = 0.0;   // at T = t_star
  std::vector<std::pair<double, double>> search_trace;  // (T, objective)
};

/// Expected calibration error: samples are binned by their max softmax
/// probability; returns sum over bins of (|bin|/N) * |accuracy - confidence|.
double ece(const LogitsTable& table, Temperature temperature, const EceConfig& config);

/// Negative log-likelihood -sum_i ln pi_{T, y_i}(x_i), evaluated in the log
/// domain via log-sum-exp.
double nll(const LogitsTable& table, Temperature temperature);

/// Coarse grid scan over [t_min, t_max] (T = 1 always included) followed by
/// golden-section refinement of the best grid cell. The refinement is skipped
/// for the ECE objective, whose discontinuities break unimodal search; the
/// grid minimum is returned instead. Grid ties resolve to the smallest T.
CalibrationResult optimize_temperature(const LogitsTable& table,
                                       CalibrationObjective objective,
                                       const EceConfig& config,
                                       const TemperatureSearch& search);

struct ReliabilityBin {
  double bin_low = 0.0;
  double bin_high = 0.0;
  std::size_t count = 0;
  double accuracy = 0.0;
  double mean_confidence = 0.0;
};

/// Per-bin statistics over the confidence range [0,1], equally partitioned.
std::vector<ReliabilityBin> reliability_diagram(const LogitsTable& table,
                                                Temperature temperature,
                                                const EceConfig& config);

/// CSV with header `bin_low,bin_high,count,accuracy,mean_confidence`.
std::string reliability_diagram_csv(const std::vector<ReliabilityBin>& bins);

std::string calibration_result_json(const CalibrationResult& result);

}  // namespace tscp
