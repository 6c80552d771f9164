#include "tscp/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace tscp {

namespace {

struct BinStats {
  std::size_t count = 0;
  std::size_t correct = 0;
  double confidence_sum = 0.0;
};

// Confidence = max softmax entry (predicted-class probability). The last bin
// is closed above so confidence 1.0 lands in bin L-1.
std::size_t bin_of(double confidence, std::size_t num_bins) {
  auto b = static_cast<std::size_t>(confidence * static_cast<double>(num_bins));
  return std::min(b, num_bins - 1);
}

std::vector<BinStats> collect_bins(const LogitsTable& table, Temperature temperature,
                                   std::size_t num_bins) {
  std::vector<BinStats> bins(num_bins);
  for (std::size_t i = 0; i < table.num_samples(); ++i) {
    const auto row = table.row(i);
    const ProbVector p = softmax_at(row, temperature);
    const std::size_t predicted = argmax_class(row);
    const double confidence = p[predicted];
    BinStats& bin = bins[bin_of(confidence, num_bins)];
    ++bin.count;
    bin.confidence_sum += confidence;
    if (static_cast<int>(predicted) == table.label(i)) ++bin.correct;
  }
  return bins;
}

double golden_section(double lo, double hi, double tol,
                      const std::function<double(double)>& f) {
  constexpr double inv_phi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

CalibrationObjective parse_objective(const std::string& name) {
  if (name == "ece") return CalibrationObjective::kEce;
  if (name == "nll") return CalibrationObjective::kNll;
  throw ArgumentError("unknown objective '" + name + "' (expected ece or nll)");
}

std::string objective_name(CalibrationObjective o) {
  return o == CalibrationObjective::kEce ? "ece" : "nll";
}

double ece(const LogitsTable& table, Temperature temperature, const EceConfig& config) {
  if (config.num_bins < 2) throw ArgumentError("ece: need at least 2 bins");
  const auto bins = collect_bins(table, temperature, config.num_bins);
  const auto n = static_cast<double>(table.num_samples());
  double total = 0.0;
  for (const BinStats& bin : bins) {
    if (bin.count == 0) continue;
    const auto cnt = static_cast<double>(bin.count);
    const double acc = static_cast<double>(bin.correct) / cnt;
    const double conf = bin.confidence_sum / cnt;
    total += (cnt / n) * std::abs(acc - conf);
  }
  return total;
}

double nll(const LogitsTable& table, Temperature temperature) {
  const double t = temperature.value();
  double total = 0.0;
  for (std::size_t i = 0; i < table.num_samples(); ++i) {
    const auto row = table.row(i);
    double max_scaled = row[0] / t;
    for (double z : row) max_scaled = std::max(max_scaled, z / t);
    double sum = 0.0;
    for (double z : row) sum += std::exp(z / t - max_scaled);
    const double log_prob =
        row[static_cast<std::size_t>(table.label(i))] / t - max_scaled - std::log(sum);
    total -= log_prob;
  }
  return total;
}

CalibrationResult optimize_temperature(const LogitsTable& table,
                                       CalibrationObjective objective,
                                       const EceConfig& config,
                                       const TemperatureSearch& search) {
  if (!(search.t_min > 0.0) || !(search.t_min < search.t_max)) {
    throw ArgumentError("optimize_temperature: need 0 < t_min < t_max");
  }
  if (!(search.grid_step > 0.0)) {
    throw ArgumentError("optimize_temperature: grid_step must be positive");
  }

  const auto eval = [&](double t) {
    return objective == CalibrationObjective::kEce
               ? ece(table, Temperature(t), config)
               : nll(table, Temperature(t));
  };

  CalibrationResult result;
  result.objective = objective;

  std::vector<double> grid;
  for (double t = search.t_min; t <= search.t_max + 0.5 * search.grid_step;
       t += search.grid_step) {
    grid.push_back(std::min(t, search.t_max));
  }
  if (1.0 >= search.t_min && 1.0 <= search.t_max &&
      std::none_of(grid.begin(), grid.end(), [](double t) { return t == 1.0; })) {
    grid.push_back(1.0);
    std::sort(grid.begin(), grid.end());
  }

  double best_t = grid.front();
  double best_value = std::numeric_limits<double>::infinity();
  for (double t : grid) {
    const double value = eval(t);
    result.search_trace.emplace_back(t, value);
    if (value < best_value) {  // strict: ties keep the smaller T
      best_value = value;
      best_t = t;
    }
  }

  if (objective == CalibrationObjective::kNll) {
    const double lo = std::max(search.t_min, best_t - search.grid_step);
    const double hi = std::min(search.t_max, best_t + search.grid_step);
    const double refined = golden_section(lo, hi, 1e-4, eval);
    const double refined_value = eval(refined);
    result.search_trace.emplace_back(refined, refined_value);
    if (refined_value < best_value) {
      best_value = refined_value;
      best_t = refined;
    }
  }

  result.t_star = best_t;
  result.objective_value_before = eval(1.0);
  result.objective_value_after = best_value;
  return result;
}

std::vector<ReliabilityBin> reliability_diagram(const LogitsTable& table,
                                                Temperature temperature,
                                                const EceConfig& config) {
  if (config.num_bins < 2) throw ArgumentError("reliability_diagram: need >= 2 bins");
  const auto stats = collect_bins(table, temperature, config.num_bins);
  std::vector<ReliabilityBin> bins(config.num_bins);
  const double width = 1.0 / static_cast<double>(config.num_bins);
  for (std::size_t b = 0; b < config.num_bins; ++b) {
    bins[b].bin_low = width * static_cast<double>(b);
    bins[b].bin_high = b + 1 == config.num_bins ? 1.0 : width * static_cast<double>(b + 1);
    bins[b].count = stats[b].count;
    if (stats[b].count > 0) {
      const auto cnt = static_cast<double>(stats[b].count);
      bins[b].accuracy = static_cast<double>(stats[b].correct) / cnt;
      bins[b].mean_confidence = stats[b].confidence_sum / cnt;
    }
  }
  return bins;
}

std::string reliability_diagram_csv(const std::vector<ReliabilityBin>& bins) {
  std::ostringstream out;
  out.precision(12);
  out << "bin_low,bin_high,count,accuracy,mean_confidence\n";
  for (const ReliabilityBin& b : bins) {
    out << b.bin_low << ',' << b.bin_high << ',' << b.count << ',' << b.accuracy << ','
        << b.mean_confidence << '\n';
  }
  return out.str();
}

std::string calibration_result_json(const CalibrationResult& result) {
  nlohmann::json j;
  j["t_star"] = result.t_star;
  j["objective"] = objective_name(result.objective);
  j["objective_value_before"] = result.objective_value_before;
  j["objective_value_after"] = result.objective_value_after;
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& [t, v] : result.search_trace) {
    trace.push_back({{"t", t}, {"value", v}});
  }
  j["search_trace"] = std::move(trace);
  return j.dump(2);
}

}  // namespace tscp
