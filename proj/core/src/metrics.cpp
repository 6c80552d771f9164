#include "tscp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tscp/rng.hpp"

namespace tscp {

namespace {

MetricsReport evaluate_with(const std::function<PredictionSet(std::size_t, double)>& set_of,
                            const ScoreMethod& method, double alpha,
                            const LogitsTable& table,
                            std::span<const std::size_t> eval_indices,
                            std::uint64_t seed) {
  if (eval_indices.empty()) throw ArgumentError("evaluate: empty evaluation split");
  const std::size_t c = table.num_classes();

  Xoshiro256 u_stream(derive_seed(seed, 0, SeedPurpose::kPredictU));

  MetricsReport report;
  report.alpha = alpha;
  report.n_eval = eval_indices.size();
  report.per_class_counts.assign(c, 0);
  std::vector<std::size_t> covered_per_class(c, 0);

  std::size_t total_size = 0;
  std::size_t total_covered = 0;
  for (const std::size_t idx : eval_indices) {
    const double u = method.randomized ? u_stream.uniform() : 0.0;
    const PredictionSet set = set_of(idx, u);
    total_size += set.size();
    const int y = table.label(idx);
    const auto yc = static_cast<std::size_t>(y);
    ++report.per_class_counts[yc];
    if (set.contains(y)) {
      ++total_covered;
      ++covered_per_class[yc];
    }
  }

  const auto n = static_cast<double>(eval_indices.size());
  report.avg_size = static_cast<double>(total_size) / n;
  const double coverage = static_cast<double>(total_covered) / n;
  report.mar_cov_gap = std::abs(coverage - (1.0 - alpha));

  report.per_class_coverage.assign(c, kMissingClassCoverage);
  std::vector<double> deviations;
  deviations.reserve(c);
  for (std::size_t y = 0; y < c; ++y) {
    if (report.per_class_counts[y] == 0) continue;
    const double cov = static_cast<double>(covered_per_class[y]) /
                       static_cast<double>(report.per_class_counts[y]);
    report.per_class_coverage[y] = cov;
    deviations.push_back(std::abs(cov - (1.0 - alpha)));
  }
  if (!deviations.empty()) {
    std::sort(deviations.begin(), deviations.end(), std::greater<>());
    const auto top_k = static_cast<std::size_t>(
        std::ceil(0.05 * static_cast<double>(c)));
    const std::size_t k = std::min(std::max<std::size_t>(top_k, 1), deviations.size());
    double top_sum = 0.0, all_sum = 0.0;
    for (std::size_t i = 0; i < deviations.size(); ++i) {
      all_sum += deviations[i];
      if (i < k) top_sum += deviations[i];
    }
    report.top_cov_gap = top_sum / static_cast<double>(k);
    report.avg_cov_gap = all_sum / static_cast<double>(deviations.size());
  }
  return report;
}

}  // namespace

MetricsReport evaluate(const CPModel& model, const LogitsTable& table,
                       std::span<const std::size_t> eval_indices, std::uint64_t seed) {
  return evaluate_with(
      [&](std::size_t idx, double u) { return predict_set(model, table.row(idx), u); },
      model.method, model.alpha, table, eval_indices, seed);
}

MetricsReport evaluate(const MondrianModel& model, const LogitsTable& table,
                       std::span<const std::size_t> eval_indices, std::uint64_t seed) {
  return evaluate_with(
      [&](std::size_t idx, double u) {
        return predict_set_mondrian(model, table.row(idx), u);
      },
      model.pooled.method, model.pooled.alpha, table, eval_indices, seed);
}

double median(std::vector<double> values) {
  if (values.empty()) throw ArgumentError("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

MetricsReport median_of_means(
    const std::function<MetricsReport(std::uint64_t seed)>& trial_fn,
    std::size_t num_trials, std::uint64_t base_seed) {
  if (num_trials < 1) throw ArgumentError("median_of_means: need at least one trial");

  std::vector<MetricsReport> trials;
  trials.reserve(num_trials);
  for (std::size_t t = 0; t < num_trials; ++t) {
    try {
      trials.push_back(trial_fn(base_seed + t));
    } catch (const Error& e) {
      throw Error("trial with seed " + std::to_string(base_seed + t) +
                  " failed: " + e.what());
    }
  }

  MetricsReport out;
  out.alpha = trials.front().alpha;
  out.n_eval = trials.front().n_eval;
  out.num_trials = num_trials;

  const auto collect = [&](auto getter) {
    std::vector<double> v;
    v.reserve(num_trials);
    for (const auto& r : trials) v.push_back(getter(r));
    return median(std::move(v));
  };
  out.avg_size = collect([](const MetricsReport& r) { return r.avg_size; });
  out.mar_cov_gap = collect([](const MetricsReport& r) { return r.mar_cov_gap; });
  out.top_cov_gap = collect([](const MetricsReport& r) { return r.top_cov_gap; });
  out.avg_cov_gap = collect([](const MetricsReport& r) { return r.avg_cov_gap; });

  const std::size_t c = trials.front().per_class_coverage.size();
  out.per_class_coverage.assign(c, kMissingClassCoverage);
  out.per_class_counts.assign(c, 0);
  for (std::size_t y = 0; y < c; ++y) {
    std::vector<double> values;
    for (const auto& r : trials) {
      if (y < r.per_class_coverage.size() &&
          r.per_class_coverage[y] != kMissingClassCoverage) {
        values.push_back(r.per_class_coverage[y]);
        out.per_class_counts[y] += r.per_class_counts[y];
      }
    }
    if (!values.empty()) out.per_class_coverage[y] = median(std::move(values));
  }
  return out;
}

std::string metrics_report_json(const MetricsReport& report) {
  nlohmann::json j;
  j["avg_size"] = report.avg_size;
  j["mar_cov_gap"] = report.mar_cov_gap;
  j["top_cov_gap"] = report.top_cov_gap;
  j["avg_cov_gap"] = report.avg_cov_gap;
  j["alpha"] = report.alpha;
  j["n_eval"] = report.n_eval;
  j["num_trials"] = report.num_trials;
  j["per_class_coverage"] = report.per_class_coverage;
  j["per_class_counts"] = report.per_class_counts;
  return j.dump(2);
}

std::string metrics_csv_row(double temperature, const std::string& method,
                            const MetricsReport& report) {
  std::ostringstream out;
  out.precision(12);
  out << temperature << ',' << method << ',' << report.avg_size << ','
      << report.mar_cov_gap << ',' << report.top_cov_gap << ',' << report.avg_cov_gap;
  return out.str();
}

}  // namespace tscp
