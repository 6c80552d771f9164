#include "tscp/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tscp/rng.hpp"

namespace tscp {

namespace {

// One trial of the sweep: fit every (method, T) on the CP indices, evaluate
// on the eval indices. Outputs q_hat and report per method per temperature.
struct TrialResult {
  std::vector<std::vector<double>> q_hat;           // [method][t]
  std::vector<std::vector<MetricsReport>> reports;  // [method][t]
};

TrialResult run_trial(const LogitsTable& table, std::span<const std::size_t> cp,
                      std::span<const std::size_t> eval,
                      const std::vector<ScoreMethod>& methods, double alpha,
                      const std::vector<double>& temperatures, std::uint64_t seed) {
  TrialResult result;
  result.q_hat.resize(methods.size());
  result.reports.resize(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    result.q_hat[m].reserve(temperatures.size());
    result.reports[m].reserve(temperatures.size());
    for (const double t : temperatures) {
      const CPModel model =
          fit_threshold(table, cp, methods[m], alpha, Temperature(t), seed);
      result.q_hat[m].push_back(model.q_hat);
      result.reports[m].push_back(evaluate(model, table, eval, seed));
    }
  }
  return result;
}

SweepCurve assemble_curve(const LogitsTable& table, const SplitPlan& base_split,
                          const std::vector<ScoreMethod>& methods, double alpha,
                          const std::vector<double>& temperatures,
                          const std::vector<TrialResult>& trials,
                          std::size_t num_trials, std::uint64_t base_seed) {
  SweepCurve curve;
  curve.temperatures = temperatures;
  curve.methods = methods;
  curve.alpha = alpha;
  curve.num_trials = num_trials;
  curve.base_seed = base_seed;

  // T* for the confidence branch, from the calibration split (ECE objective,
  // matching the calibration defaults).
  {
    std::vector<double> calib_logits;
    std::vector<int> calib_labels;
    for (const std::size_t idx : base_split.calib_indices) {
      const auto row = table.row(idx);
      calib_logits.insert(calib_logits.end(), row.begin(), row.end());
      calib_labels.push_back(table.label(idx));
    }
    const LogitsTable calib_table(table.num_classes(), std::move(calib_logits),
                                  std::move(calib_labels));
    curve.t_star = optimize_temperature(calib_table, CalibrationObjective::kEce,
                                        EceConfig{}, TemperatureSearch{})
                       .t_star;
  }

  curve.per_method.resize(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    curve.per_method[m].resize(temperatures.size());
    for (std::size_t ti = 0; ti < temperatures.size(); ++ti) {
      std::vector<double> qs;
      qs.reserve(num_trials);
      for (const TrialResult& trial : trials) qs.push_back(trial.q_hat[m][ti]);
      curve.per_method[m][ti].q_hat = median(std::move(qs));
      curve.per_method[m][ti].report = median_of_means(
          [&](std::uint64_t t) { return trials[t].reports[m][ti]; }, num_trials, 0);
    }
    if (methods[m].kind != ScoreKind::kLac) {
      std::size_t best = 0;
      for (std::size_t ti = 1; ti < temperatures.size(); ++ti) {
        if (curve.per_method[m][ti].report.avg_size >
            curve.per_method[m][best].report.avg_size) {
          best = ti;  // strict: ties keep the smaller T
        }
      }
      curve.t_c_empirical[methods[m].display_name()] = temperatures[best];
    }
  }
  return curve;
}

}  // namespace

std::vector<double> TemperatureGrid::values() const {
  if (!(step > 0.0) || !(t_min > 0.0) || !(t_min <= t_max)) {
    throw ArgumentError("temperature grid: need 0 < t_min <= t_max and step > 0");
  }
  if (t_min < kTemperatureFloor && !override_floor) {
    throw ArgumentError("temperature grid: t_min below the 0.3 floor "
                        "(pass override_floor to study that regime)");
  }
  std::vector<double> out;
  for (double t = t_min; t <= t_max + 0.5 * step; t += step) {
    out.push_back(std::min(t, t_max));
  }
  return out;
}

std::size_t SweepCurve::method_index(const std::string& display_name) const {
  for (std::size_t m = 0; m < methods.size(); ++m) {
    if (methods[m].display_name() == display_name) return m;
  }
  throw ArgumentError("method '" + display_name + "' not present in curve");
}

SweepCurve run_sweep(const LogitsTable& table, const SplitPlan& split,
                     const std::vector<ScoreMethod>& methods, double alpha,
                     const TemperatureGrid& grid, std::size_t num_trials,
                     std::uint64_t base_seed) {
  if (methods.empty()) throw ArgumentError("run_sweep: no methods given");
  if (num_trials < 1) throw ArgumentError("run_sweep: need at least one trial");
  const std::vector<double> temperatures = grid.values();

  std::vector<TrialResult> trials;
  trials.reserve(num_trials);
  for (std::size_t t = 0; t < num_trials; ++t) {
    // Each trial redraws the whole partition, as in the resampling protocol.
    const SplitPlan trial_split =
        make_split(table, split.calib_fraction, split.cp_fraction,
                   derive_seed(base_seed, t, SeedPurpose::kSplit));
    trials.push_back(run_trial(table, trial_split.cp_indices, trial_split.eval_indices,
                               methods, alpha, temperatures,
                               derive_seed(base_seed, t, SeedPurpose::kTrial)));
  }
  return assemble_curve(table, split, methods, alpha, temperatures, trials, num_trials,
                        base_seed);
}

SweepCurve approximate_curves(const LogitsTable& table, const SplitPlan& split,
                              const std::vector<ScoreMethod>& methods, double alpha,
                              const TemperatureGrid& grid, std::uint64_t seed) {
  if (methods.empty()) throw ArgumentError("approximate_curves: no methods given");
  if (split.calib_indices.empty()) {
    throw ArgumentError("approximate_curves: empty calibration split");
  }
  const std::vector<double> temperatures = grid.values();
  std::vector<TrialResult> trials;
  trials.push_back(run_trial(table, split.cp_indices, split.calib_indices, methods,
                             alpha, temperatures,
                             derive_seed(seed, 0, SeedPurpose::kTrial)));
  return assemble_curve(table, split, methods, alpha, temperatures, trials, 1, seed);
}

SelectionRule parse_selection_rule(const std::string& name) {
  if (name == "min-topcovgap") return SelectionRule::kMinTopCovGap;
  if (name == "min-avgsize") return SelectionRule::kMinAvgSize;
  if (name == "fixed") return SelectionRule::kUserFixed;
  throw ArgumentError("unknown rule '" + name +
                      "' (expected min-topcovgap, min-avgsize or fixed)");
}

std::string selection_rule_name(SelectionRule rule) {
  switch (rule) {
    case SelectionRule::kMinTopCovGap: return "min-topcovgap";
    case SelectionRule::kMinAvgSize: return "min-avgsize";
    case SelectionRule::kUserFixed: return "fixed";
  }
  return "?";
}

GuidelinePlan select_t_hat(const SweepCurve& curve, SelectionRule rule,
                           const std::string& method_name,
                           std::optional<double> fixed_t) {
  if (curve.temperatures.empty()) throw ArgumentError("select_t_hat: empty curve");
  GuidelinePlan plan;
  plan.t_star = curve.t_star;
  plan.rule = rule;
  plan.method = method_name;
  plan.approximated_curve = curve;

  if (rule == SelectionRule::kUserFixed) {
    if (!fixed_t.has_value()) throw ArgumentError("select_t_hat: fixed rule needs a T");
    plan.t_hat = *fixed_t;
    return plan;
  }
  const std::size_t m = curve.method_index(method_name);
  std::size_t best = 0;
  for (std::size_t ti = 1; ti < curve.temperatures.size(); ++ti) {
    const auto value = [&](std::size_t k) {
      return rule == SelectionRule::kMinTopCovGap
                 ? curve.per_method[m][k].report.top_cov_gap
                 : curve.per_method[m][k].report.avg_size;
    };
    if (value(ti) < value(best)) best = ti;  // strict: ties keep the smaller T
  }
  plan.t_hat = curve.temperatures[best];
  return plan;
}

MicroscopicDiff microscopic_diff(const LogitsTable& table, const SplitPlan& split,
                                 const ScoreMethod& method, double alpha,
                                 Temperature t_a, Temperature t_b, std::uint64_t seed) {
  if (method.kind == ScoreKind::kLac) {
    throw ArgumentError("microscopic_diff: adaptive methods only (aps or raps)");
  }
  const std::uint64_t fit_seed = derive_seed(seed, 0, SeedPurpose::kTrial);
  const CPModel model_a =
      fit_threshold(table, split.cp_indices, method, alpha, t_a, fit_seed);
  const CPModel model_b =
      fit_threshold(table, split.cp_indices, method, alpha, t_b, fit_seed);

  // One u per evaluation sample, shared between the two temperatures; the
  // stream matches evaluate() so summary counts reconcile with AvgSize.
  Xoshiro256 u_stream(derive_seed(fit_seed, 0, SeedPurpose::kPredictU));
  MicroscopicDiff diff;
  diff.sorted_differences.reserve(split.eval_indices.size());
  double total = 0.0;
  for (const std::size_t idx : split.eval_indices) {
    const double u = method.randomized ? u_stream.uniform() : 0.0;
    const auto size_a =
        static_cast<double>(predict_set(model_a, table.row(idx), u).size());
    const auto size_b =
        static_cast<double>(predict_set(model_b, table.row(idx), u).size());
    const double d = size_b - size_a;
    diff.sorted_differences.push_back(d);
    total += d;
    if (d > 0) ++diff.increased;
    else if (d < 0) ++diff.decreased;
    else ++diff.unchanged;
  }
  std::sort(diff.sorted_differences.begin(), diff.sorted_differences.end(),
            std::greater<>());
  diff.mean_difference = total / static_cast<double>(split.eval_indices.size());
  return diff;
}

TwoBranchOutput two_branch_predict(const GuidelinePlan& plan,
                                   const CalibrationResult& model_conf,
                                   const CPModel& model_cp,
                                   std::span<const double> logits, double u) {
  if (std::abs(model_conf.t_star - plan.t_star) > 1e-12) {
    throw ConsistencyError("confidence branch temperature differs from the plan");
  }
  if (std::abs(model_cp.temperature - plan.t_hat) > 1e-12) {
    throw ConsistencyError("CP branch temperature differs from the plan");
  }
  TwoBranchOutput out;
  const ProbVector p = softmax_at(logits, Temperature(plan.t_star));
  out.confidence = p[argmax_class(logits)];
  out.set = predict_set(model_cp, logits, u);
  return out;
}

std::string sweep_curve_csv(const SweepCurve& curve) {
  std::ostringstream out;
  out.precision(12);
  out << "T,method,q_hat,avg_size,mar_cov_gap,top_cov_gap,avg_cov_gap\n";
  for (std::size_t ti = 0; ti < curve.temperatures.size(); ++ti) {
    for (std::size_t m = 0; m < curve.methods.size(); ++m) {
      const SweepEntry& e = curve.per_method[m][ti];
      out << curve.temperatures[ti] << ',' << curve.methods[m].display_name() << ','
          << e.q_hat << ',' << e.report.avg_size << ',' << e.report.mar_cov_gap << ','
          << e.report.top_cov_gap << ',' << e.report.avg_cov_gap << '\n';
    }
  }
  return out.str();
}

std::string sweep_curve_meta_json(const SweepCurve& curve) {
  nlohmann::json j;
  j["temperatures"] = curve.temperatures;
  nlohmann::json methods = nlohmann::json::array();
  for (const ScoreMethod& m : curve.methods) methods.push_back(m.display_name());
  j["methods"] = std::move(methods);
  j["alpha"] = curve.alpha;
  j["num_trials"] = curve.num_trials;
  j["base_seed"] = curve.base_seed;
  j["t_star"] = curve.t_star;
  j["t_c_empirical"] = curve.t_c_empirical;
  return j.dump(2);
}

namespace {

nlohmann::json method_to_json(const ScoreMethod& m) {
  return {{"kind", score_kind_name(m.kind)},
          {"randomized", m.randomized},
          {"lambda", m.lambda},
          {"k_reg", m.k_reg}};
}

ScoreMethod method_from_json(const nlohmann::json& j) {
  ScoreMethod m;
  m.kind = parse_score_kind(j.at("kind").get<std::string>());
  m.randomized = j.at("randomized").get<bool>();
  m.lambda = j.at("lambda").get<double>();
  m.k_reg = j.at("k_reg").get<std::size_t>();
  return m;
}

}  // namespace

std::string guideline_plan_json(const GuidelinePlan& plan) {
  nlohmann::json j;
  j["t_star"] = plan.t_star;
  j["t_hat"] = plan.t_hat;
  j["rule"] = selection_rule_name(plan.rule);
  j["method"] = plan.method;

  const SweepCurve& curve = plan.approximated_curve;
  nlohmann::json jc;
  jc["temperatures"] = curve.temperatures;
  nlohmann::json methods = nlohmann::json::array();
  for (const ScoreMethod& m : curve.methods) methods.push_back(method_to_json(m));
  jc["methods"] = std::move(methods);
  jc["alpha"] = curve.alpha;
  jc["num_trials"] = curve.num_trials;
  jc["base_seed"] = curve.base_seed;
  jc["t_star"] = curve.t_star;
  jc["t_c_empirical"] = curve.t_c_empirical;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t m = 0; m < curve.methods.size(); ++m) {
    for (std::size_t ti = 0; ti < curve.temperatures.size(); ++ti) {
      const SweepEntry& e = curve.per_method[m][ti];
      rows.push_back({{"method", m},
                      {"t", ti},
                      {"q_hat", e.q_hat},
                      {"avg_size", e.report.avg_size},
                      {"mar_cov_gap", e.report.mar_cov_gap},
                      {"top_cov_gap", e.report.top_cov_gap},
                      {"avg_cov_gap", e.report.avg_cov_gap}});
    }
  }
  jc["rows"] = std::move(rows);
  j["approximated_curve"] = std::move(jc);
  return j.dump(2);
}

GuidelinePlan guideline_plan_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError("invalid GuidelinePlan JSON");
  try {
    GuidelinePlan plan;
    plan.t_star = j.at("t_star").get<double>();
    plan.t_hat = j.at("t_hat").get<double>();
    plan.rule = parse_selection_rule(j.at("rule").get<std::string>());
    plan.method = j.at("method").get<std::string>();

    const nlohmann::json& jc = j.at("approximated_curve");
    SweepCurve& curve = plan.approximated_curve;
    curve.temperatures = jc.at("temperatures").get<std::vector<double>>();
    for (const auto& jm : jc.at("methods")) curve.methods.push_back(method_from_json(jm));
    curve.alpha = jc.at("alpha").get<double>();
    curve.num_trials = jc.at("num_trials").get<std::size_t>();
    curve.base_seed = jc.at("base_seed").get<std::uint64_t>();
    curve.t_star = jc.at("t_star").get<double>();
    curve.t_c_empirical =
        jc.at("t_c_empirical").get<std::map<std::string, double>>();
    curve.per_method.assign(curve.methods.size(),
                            std::vector<SweepEntry>(curve.temperatures.size()));
    for (const auto& row : jc.at("rows")) {
      const auto m = row.at("method").get<std::size_t>();
      const auto ti = row.at("t").get<std::size_t>();
      SweepEntry& e = curve.per_method.at(m).at(ti);
      e.q_hat = row.at("q_hat").get<double>();
      e.report.avg_size = row.at("avg_size").get<double>();
      e.report.mar_cov_gap = row.at("mar_cov_gap").get<double>();
      e.report.top_cov_gap = row.at("top_cov_gap").get<double>();
      e.report.avg_cov_gap = row.at("avg_cov_gap").get<double>();
      e.report.alpha = curve.alpha;
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid GuidelinePlan JSON: ") + e.what());
  }
}

}  // namespace tscp
