// tscp: calibration + conformal prediction experiments on stored logits.
//
// Subcommands: calibrate, fit, eval, sweep, guideline, verify-theory,
// mondrian-compare. A JSON config (--config) provides defaults; explicit
// flags win. All randomness flows from --seed through documented derived
// streams, so identical invocations produce byte-identical outputs.
//
// Exit codes: 0 success, 1 theory-verification violation, 2 usage/IO error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tscp/calibrate.hpp"
#include "tscp/conformal.hpp"
#include "tscp/logits.hpp"
#include "tscp/metrics.hpp"
#include "tscp/rng.hpp"
#include "tscp/sweep.hpp"
#include "tscp/theory.hpp"

namespace fs = std::filesystem;

namespace {

struct RunConfig {
  std::string input;
  std::string format = "csv";
  double calib_fraction = 0.1;
  double cp_fraction = 0.1;
  std::uint64_t seed = 0;
  std::string method = "aps";
  bool randomized = false;
  double lambda = 0.1;
  std::size_t k_reg = 5;
  double alpha = 0.1;
  double t_min = 0.5;
  double t_max = 5.0;
  double t_step = 0.1;
  std::size_t trials = 10;
  std::string out_dir = ".";
  std::string objective = "ece";
  double temperature = 1.0;
  std::string rule = "min-topcovgap";
  double t_hat = 1.0;
  std::string model_path;
  std::size_t cases = 100000;
  std::size_t classes = 10;
  std::string config_path;  // consumed by a pre-parse scan; kept for --help
};

// Write-to-temp plus atomic rename: a failed run never leaves partial files.
void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw tscp::FormatError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw tscp::FormatError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

tscp::ScoreMethod method_from(const RunConfig& cfg) {
  tscp::ScoreMethod m;
  m.kind = tscp::parse_score_kind(cfg.method);
  m.randomized = cfg.randomized;
  m.lambda = cfg.lambda;
  m.k_reg = cfg.k_reg;
  return m;
}

tscp::LogitsTable load_input(const RunConfig& cfg) {
  if (cfg.input.empty()) throw tscp::ArgumentError("--input is required");
  if (!fs::exists(cfg.input)) {
    throw tscp::FormatError("input file '" + cfg.input + "' does not exist");
  }
  return tscp::load_logits(cfg.input, tscp::parse_file_format(cfg.format));
}

void validate_common(const RunConfig& cfg) {
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
    throw tscp::ArgumentError("--alpha must lie in (0,1)");
  }
  if (!(cfg.calib_fraction > 0.0 && cfg.cp_fraction > 0.0 &&
        cfg.calib_fraction + cfg.cp_fraction < 1.0)) {
    throw tscp::ArgumentError("split fractions must be positive and sum below 1");
  }
  tscp::parse_score_kind(cfg.method);
  tscp::parse_objective(cfg.objective);
  if (!fs::exists(cfg.out_dir)) fs::create_directories(cfg.out_dir);
}

tscp::TemperatureGrid grid_from(const RunConfig& cfg) {
  tscp::TemperatureGrid grid;
  grid.t_min = cfg.t_min;
  grid.t_max = cfg.t_max;
  grid.step = cfg.t_step;
  grid.values();  // validate now, before any computation
  return grid;
}

int cmd_calibrate(const RunConfig& cfg) {
  validate_common(cfg);
  const tscp::LogitsTable table = load_input(cfg);
  const tscp::SplitPlan split =
      tscp::make_split(table, cfg.calib_fraction, cfg.cp_fraction, cfg.seed);

  std::vector<double> calib_logits;
  std::vector<int> calib_labels;
  for (const std::size_t idx : split.calib_indices) {
    const auto row = table.row(idx);
    calib_logits.insert(calib_logits.end(), row.begin(), row.end());
    calib_labels.push_back(table.label(idx));
  }
  const tscp::LogitsTable calib(table.num_classes(), std::move(calib_logits),
                                std::move(calib_labels));

  const tscp::CalibrationResult result =
      tscp::optimize_temperature(calib, tscp::parse_objective(cfg.objective),
                                 tscp::EceConfig{}, tscp::TemperatureSearch{});

  const fs::path out(cfg.out_dir);
  write_file_atomic(out / "calibration.json", tscp::calibration_result_json(result));
  write_file_atomic(out / "reliability_before.csv",
                    tscp::reliability_diagram_csv(tscp::reliability_diagram(
                        calib, tscp::Temperature(1.0), tscp::EceConfig{})));
  write_file_atomic(out / "reliability_after.csv",
                    tscp::reliability_diagram_csv(tscp::reliability_diagram(
                        calib, tscp::Temperature(result.t_star), tscp::EceConfig{})));
  std::cout << "t_star: " << result.t_star << " (" << cfg.objective << ")\n";
  return 0;
}

int cmd_fit(const RunConfig& cfg) {
  validate_common(cfg);
  const tscp::LogitsTable table = load_input(cfg);
  const tscp::SplitPlan split =
      tscp::make_split(table, cfg.calib_fraction, cfg.cp_fraction, cfg.seed);
  const tscp::CPModel model =
      tscp::fit_threshold(table, split.cp_indices, method_from(cfg), cfg.alpha,
                          tscp::Temperature(cfg.temperature), cfg.seed);
  write_file_atomic(fs::path(cfg.out_dir) / "cpmodel.json", tscp::cp_model_json(model));
  std::cout << "q_hat: " << model.q_hat << " (n=" << model.n_cal << ")\n";
  if (model.clamp_warning) {
    std::cout << "warning: quantile index clamped to the max score; the coverage "
                 "guarantee is vacuous at this (n, alpha)\n";
  }
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  validate_common(cfg);
  const tscp::LogitsTable table = load_input(cfg);
  const tscp::SplitPlan split =
      tscp::make_split(table, cfg.calib_fraction, cfg.cp_fraction, cfg.seed);

  tscp::CPModel model;
  if (!cfg.model_path.empty()) {
    std::ifstream in(cfg.model_path);
    if (!in) throw tscp::FormatError("cannot open model '" + cfg.model_path + "'");
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    model = tscp::cp_model_from_json(text);
  } else {
    model = tscp::fit_threshold(table, split.cp_indices, method_from(cfg), cfg.alpha,
                                tscp::Temperature(cfg.temperature), cfg.seed);
  }

  const tscp::MetricsReport report =
      tscp::evaluate(model, table, split.eval_indices, cfg.seed);
  write_file_atomic(fs::path(cfg.out_dir) / "metrics.json",
                    tscp::metrics_report_json(report));
  std::cout << tscp::metrics_csv_row(model.temperature, model.method.display_name(),
                                     report)
            << '\n';
  return 0;
}

std::vector<tscp::ScoreMethod> sweep_methods(const RunConfig& cfg) {
  // the sweep runs the configured method; LAC rides along as the flat baseline
  std::vector<tscp::ScoreMethod> methods{method_from(cfg)};
  if (methods[0].kind != tscp::ScoreKind::kLac) {
    methods.push_back({tscp::ScoreKind::kLac, false, 0.0, 0});
  }
  return methods;
}

int cmd_sweep(const RunConfig& cfg) {
  validate_common(cfg);
  const tscp::TemperatureGrid grid = grid_from(cfg);
  const tscp::LogitsTable table = load_input(cfg);
  const tscp::SplitPlan split =
      tscp::make_split(table, cfg.calib_fraction, cfg.cp_fraction, cfg.seed);
  const tscp::SweepCurve curve = tscp::run_sweep(table, split, sweep_methods(cfg),
                                                 cfg.alpha, grid, cfg.trials, cfg.seed);
  const fs::path out(cfg.out_dir);
  write_file_atomic(out / "sweep.csv", tscp::sweep_curve_csv(curve));
  write_file_atomic(out / "sweep_meta.json", tscp::sweep_curve_meta_json(curve));
  for (const auto& [name, t_c] : curve.t_c_empirical) {
    std::cout << name << " t_c: " << t_c << '\n';
  }
  return 0;
}

int cmd_guideline(const RunConfig& cfg) {
  validate_common(cfg);
  const tscp::TemperatureGrid grid = grid_from(cfg);
  const tscp::SelectionRule rule = tscp::parse_selection_rule(cfg.rule);
  const tscp::LogitsTable table = load_input(cfg);
  const tscp::SplitPlan split =
      tscp::make_split(table, cfg.calib_fraction, cfg.cp_fraction, cfg.seed);
  const tscp::SweepCurve curve = tscp::approximate_curves(
      table, split, sweep_methods(cfg), cfg.alpha, grid, cfg.seed);
  const tscp::GuidelinePlan plan =
      tscp::select_t_hat(curve, rule, method_from(cfg).display_name(),
                         rule == tscp::SelectionRule::kUserFixed
                             ? std::optional<double>(cfg.t_hat)
                             : std::nullopt);
  write_file_atomic(fs::path(cfg.out_dir) / "guideline.json",
                    tscp::guideline_plan_json(plan));
  std::cout << "t_star: " << plan.t_star << " t_hat: " << plan.t_hat << '\n';
  return 0;
}

int cmd_verify_theory(const RunConfig& cfg) {
  validate_common(cfg);
  tscp::TheoryRunConfig theory;
  theory.num_cases = cfg.cases;
  theory.seed = cfg.seed;
  theory.num_classes = cfg.classes;
  theory.record_cases = cfg.cases <= 10000;  // keep the JSONL bounded

  std::vector<tscp::TheoryReport> reports;
  reports.push_back(tscp::verify_universal_score_decrease(theory));
  reports.push_back(tscp::verify_gradient_sign_theorem(theory));
  reports.push_back(tscp::verify_sufficient_condition(theory));
  {
    // the decay scan is quadratic in C; cap the case count to stay fast
    tscp::TheoryRunConfig decay = theory;
    decay.num_cases = std::min<std::size_t>(theory.num_cases, 10000);
    reports.push_back(tscp::verify_decay_bound(decay));
  }

  std::string jsonl;
  std::size_t violations = 0;
  for (const auto& report : reports) {
    jsonl += tscp::theory_report_jsonl(report);
    std::cout << report.summary() << '\n';
    violations += report.violations;
  }
  write_file_atomic(fs::path(cfg.out_dir) / "theory.jsonl", jsonl);
  std::cout << "violations: " << violations << '\n';
  return violations == 0 ? 0 : 1;
}

int cmd_mondrian_compare(const RunConfig& cfg) {
  validate_common(cfg);
  const tscp::TemperatureGrid grid = grid_from(cfg);
  const tscp::LogitsTable table = load_input(cfg);
  const tscp::SplitPlan split =
      tscp::make_split(table, cfg.calib_fraction, cfg.cp_fraction, cfg.seed);
  tscp::ScoreMethod method = method_from(cfg);
  if (method.kind == tscp::ScoreKind::kLac) {
    throw tscp::ArgumentError("mondrian-compare works with adaptive methods (aps/raps)");
  }

  // T-hat from the calibration-set-approximated TopCovGap curve.
  const tscp::SweepCurve approx =
      tscp::approximate_curves(table, split, {method}, cfg.alpha, grid, cfg.seed);
  const tscp::GuidelinePlan plan =
      tscp::select_t_hat(approx, tscp::SelectionRule::kMinTopCovGap,
                         method.display_name());

  struct Row {
    std::vector<double> avg_size, mar_cov_gap, top_cov_gap;
  };
  Row mondrian, ts_branch;
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    const std::uint64_t trial_seed =
        tscp::derive_seed(cfg.seed, t, tscp::SeedPurpose::kTrial);
    const tscp::SplitPlan trial_split = tscp::make_split(
        table, cfg.calib_fraction, cfg.cp_fraction,
        tscp::derive_seed(cfg.seed, t, tscp::SeedPurpose::kSplit));

    const tscp::MondrianModel mcp =
        tscp::fit_mondrian(table, trial_split.cp_indices, method, cfg.alpha,
                           tscp::Temperature(1.0), trial_seed);
    const tscp::MetricsReport m_report =
        tscp::evaluate(mcp, table, trial_split.eval_indices, trial_seed);
    mondrian.avg_size.push_back(m_report.avg_size);
    mondrian.mar_cov_gap.push_back(m_report.mar_cov_gap);
    mondrian.top_cov_gap.push_back(m_report.top_cov_gap);

    const tscp::CPModel cp =
        tscp::fit_threshold(table, trial_split.cp_indices, method, cfg.alpha,
                            tscp::Temperature(plan.t_hat), trial_seed);
    const tscp::MetricsReport t_report =
        tscp::evaluate(cp, table, trial_split.eval_indices, trial_seed);
    ts_branch.avg_size.push_back(t_report.avg_size);
    ts_branch.mar_cov_gap.push_back(t_report.mar_cov_gap);
    ts_branch.top_cov_gap.push_back(t_report.top_cov_gap);
  }

  const auto stddev = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
  };

  std::ostringstream csv;
  csv.precision(12);
  csv << "approach,metric,value,trial_std\n";
  const auto emit = [&](const std::string& name, const Row& row) {
    csv << name << ",avg_size," << tscp::median(row.avg_size) << ','
        << stddev(row.avg_size) << '\n';
    csv << name << ",mar_cov_gap," << tscp::median(row.mar_cov_gap) << ','
        << stddev(row.mar_cov_gap) << '\n';
    csv << name << ",top_cov_gap," << tscp::median(row.top_cov_gap) << ','
        << stddev(row.top_cov_gap) << '\n';
  };
  emit("mondrian", mondrian);
  emit("ts_with_t_hat", ts_branch);
  write_file_atomic(fs::path(cfg.out_dir) / "mondrian_compare.csv", csv.str());
  std::cout << "t_hat: " << plan.t_hat << " trials: " << cfg.trials << '\n';
  return 0;
}

// The JSON config supplies defaults; flags parsed afterwards override them.
void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw tscp::FormatError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw tscp::FormatError("invalid config JSON: " + std::string(e.what()));
  }
  const auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("input", cfg.input);
  get("format", cfg.format);
  get("calib_fraction", cfg.calib_fraction);
  get("cp_fraction", cfg.cp_fraction);
  get("seed", cfg.seed);
  get("method", cfg.method);
  get("randomized", cfg.randomized);
  get("lambda", cfg.lambda);
  get("k_reg", cfg.k_reg);
  get("alpha", cfg.alpha);
  get("t_min", cfg.t_min);
  get("t_max", cfg.t_max);
  get("t_step", cfg.t_step);
  get("trials", cfg.trials);
  get("out_dir", cfg.out_dir);
  get("objective", cfg.objective);
  get("temperature", cfg.temperature);
  get("rule", cfg.rule);
  get("t_hat", cfg.t_hat);
  get("model", cfg.model_path);
  get("cases", cfg.cases);
  get("classes", cfg.classes);
}

void add_shared_flags(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--input", cfg.input, "logits file (csv or jsonl)");
  cmd->add_option("--format", cfg.format, "input format: csv or jsonl");
  cmd->add_option("--alpha", cfg.alpha, "miscoverage level in (0,1)");
  cmd->add_option("--seed", cfg.seed, "base seed; all randomness derives from it");
  cmd->add_option("--out-dir", cfg.out_dir, "output directory");
  cmd->add_option("--calib-fraction", cfg.calib_fraction, "calibration split fraction");
  cmd->add_option("--cp-fraction", cfg.cp_fraction, "CP split fraction");
  cmd->add_option("--config", cfg.config_path, "JSON config with defaults (flags win)");
}

void add_method_flags(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--method", cfg.method, "score method: lac, aps or raps");
  cmd->add_flag("--randomized", cfg.randomized, "randomized APS/RAPS variant");
  cmd->add_option("--lambda", cfg.lambda, "RAPS depth penalty");
  cmd->add_option("--k-reg", cfg.k_reg, "RAPS penalty-free rank count");
}

void add_sweep_flags(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--t-min", cfg.t_min, "grid start");
  cmd->add_option("--t-max", cfg.t_max, "grid end");
  cmd->add_option("--t-step", cfg.t_step, "grid step");
  cmd->add_option("--trials", cfg.trials, "number of resampled trials");
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;

  // --config is applied before flag parsing so flags win.
  try {
    for (int i = 1; i < argc; ++i) {
      const std::string arg = argv[i];
      if (arg == "--config" && i + 1 < argc) {
        apply_config_file(cfg, argv[i + 1]);
      } else if (arg.rfind("--config=", 0) == 0) {
        apply_config_file(cfg, arg.substr(9));
      }
    }
  } catch (const tscp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  CLI::App app{"temperature scaling + conformal prediction toolkit"};
  app.require_subcommand(1);

  auto* calibrate = app.add_subcommand("calibrate", "optimize T* and emit diagrams");
  add_shared_flags(calibrate, cfg);
  calibrate->add_option("--objective", cfg.objective, "ece or nll");

  auto* fit = app.add_subcommand("fit", "fit a conformal threshold");
  add_shared_flags(fit, cfg);
  add_method_flags(fit, cfg);
  fit->add_option("--temperature", cfg.temperature, "scaling temperature for the fit");

  auto* eval = app.add_subcommand("eval", "evaluate coverage and set-size metrics");
  add_shared_flags(eval, cfg);
  add_method_flags(eval, cfg);
  eval->add_option("--temperature", cfg.temperature, "scaling temperature");
  eval->add_option("--model", cfg.model_path, "CPModel JSON (skips fitting)");

  auto* sweep = app.add_subcommand("sweep", "metrics across a temperature grid");
  add_shared_flags(sweep, cfg);
  add_method_flags(sweep, cfg);
  add_sweep_flags(sweep, cfg);

  auto* guideline =
      app.add_subcommand("guideline", "two-branch plan from approximated curves");
  add_shared_flags(guideline, cfg);
  add_method_flags(guideline, cfg);
  add_sweep_flags(guideline, cfg);
  guideline->add_option("--rule", cfg.rule, "min-topcovgap, min-avgsize or fixed");
  guideline->add_option("--t-hat", cfg.t_hat, "temperature for the fixed rule");

  auto* verify = app.add_subcommand("verify-theory", "run the theorem verifiers");
  add_shared_flags(verify, cfg);
  verify->add_option("--cases", cfg.cases, "random cases per verifier");
  verify->add_option("--classes", cfg.classes, "number of classes C");

  auto* mondrian =
      app.add_subcommand("mondrian-compare", "classwise CP vs TS-with-T-hat");
  add_shared_flags(mondrian, cfg);
  add_method_flags(mondrian, cfg);
  add_sweep_flags(mondrian, cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (calibrate->parsed()) return cmd_calibrate(cfg);
    if (fit->parsed()) return cmd_fit(cfg);
    if (eval->parsed()) return cmd_eval(cfg);
    if (sweep->parsed()) return cmd_sweep(cfg);
    if (guideline->parsed()) return cmd_guideline(cfg);
    if (verify->parsed()) return cmd_verify_theory(cfg);
    if (mondrian->parsed()) return cmd_mondrian_compare(cfg);
  } catch (const tscp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
