#include "tscp/theory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tscp/rng.hpp"

namespace tscp {

namespace {

// Softmax over a sorted logits vector; output stays sorted descending.
std::vector<double> sorted_softmax(std::span<const double> z, double t) {
  std::vector<double> p(z.size());
  const double top = z[0] / t;
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] / t - top);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

// Random sorted logits with a controlled dominance margin: z_1 = delta_z,
// z_2 = 0, remaining entries uniform below z_2. Branch coverage of the
// theorems is then a direct function of the sampled delta_z.
SortedLogits sample_sorted_logits(Xoshiro256& rng, std::size_t c, double delta_z,
                                  double tail_span = 8.0) {
  std::vector<double> z(c);
  z[0] = delta_z;
  z[1] = 0.0;
  for (std::size_t i = 2; i < c; ++i) z[i] = -rng.uniform(0.0, tail_span);
  std::sort(z.begin() + 1, z.end(), std::greater<>());
  return SortedLogits(std::move(z));
}

// T on the branch requested: false -> [0.10, 0.95], true -> [1.05, 8].
// Values adjacent to T = 1 are excluded: b(T) diverges there and the
// gradient vanishes, so nothing is learned from those cases.
double sample_temperature(Xoshiro256& rng, bool above_one) {
  return above_one ? rng.uniform(1.05, 8.0) : rng.uniform(0.10, 0.95);
}

void finish_record(TheoryReport& report, const TheoryRunConfig& config,
                   TheoryCaseRecord&& record) {
  ++report.cases;
  if (record.status == "asserted") ++report.asserted;
  else if (record.status == "trivial") ++report.trivial;
  else if (record.status == "not_covered") ++report.not_covered;
  else if (record.status == "precondition_unmet") ++report.precondition_unmet;
  if (record.violation) ++report.violations;
  if (config.record_cases) report.records.push_back(std::move(record));
}

}  // namespace

SortedLogits::SortedLogits(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() < 2) throw ArgumentError("SortedLogits: need at least 2 entries");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) throw ArgumentError("SortedLogits: non-finite entry");
    if (i > 0 && values_[i] > values_[i - 1]) {
      throw ArgumentError("SortedLogits: entries must be non-increasing");
    }
  }
}

double gap(const SortedLogits& z, Temperature temperature, std::size_t m) {
  if (m < 1 || m > z.size()) throw ArgumentError("gap: M out of range [1, C]");
  return sorted_top_mass(z.values(), Temperature(1.0), m) -
         sorted_top_mass(z.values(), temperature, m);
}

double grad_gap_z1(const SortedLogits& z, Temperature temperature, std::size_t m) {
  if (m < 1 || m > z.size()) throw ArgumentError("grad_gap_z1: M out of range [1, C]");
  if (m == z.size()) return 0.0;  // g(.; T, C) is identically zero
  const double t = temperature.value();
  const std::vector<double> p1 = sorted_softmax(z.values(), 1.0);
  const std::vector<double> pt = sorted_softmax(z.values(), t);
  double tail1 = 0.0, tailt = 0.0;
  for (std::size_t i = m; i < z.size(); ++i) {
    tail1 += p1[i];
    tailt += pt[i];
  }
  return p1[0] * tail1 - (1.0 / t) * pt[0] * tailt;
}

double bound_b(Temperature temperature, std::size_t num_classes) {
  const double t = temperature.value();
  if (num_classes < 2) throw ArgumentError("bound_b: need C >= 2");
  if (t == 1.0) throw ArgumentError("bound_b: undefined at T = 1");
  const auto cm1 = static_cast<double>(num_classes - 1);
  if (t > 1.0) {
    return std::max(t / (t - 1.0) * std::log(4.0 * t),
                    t / (t + 1.0) * std::log(4.0 * t * cm1 * cm1));
  }
  return std::max(t / (t - 1.0) * std::log(t / 4.0),
                  t / (t + 1.0) * std::log(4.0 * cm1 * cm1 / t));
}

double bound_minimizer(std::size_t num_classes, double t_lo, double t_hi) {
  if (!(t_lo > 1.0 && t_lo < t_hi)) throw ArgumentError("bound_minimizer: bad bracket");
  const auto b = [&](double t) { return bound_b(Temperature(t), num_classes); };

  // Coarse grid bracket around the minimum; b has a kink where the max
  // switches branches, so golden section runs only inside one grid cell.
  const int steps = 400;
  double best_t = t_lo;
  double best_v = b(t_lo);
  for (int i = 1; i <= steps; ++i) {
    const double t = t_lo + (t_hi - t_lo) * static_cast<double>(i) / steps;
    const double v = b(t);
    if (v < best_v) {
      best_v = v;
      best_t = t;
    }
  }
  const double cell = (t_hi - t_lo) / steps;
  double lo = std::max(t_lo, best_t - cell);
  double hi = std::min(t_hi, best_t + cell);
  constexpr double inv_phi = 0.6180339887498949;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = b(x1), f2 = b(x2);
  while (hi - lo > 1e-8) {
    if (f1 <= f2) {
      hi = x2; x2 = x1; f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = b(x1);
    } else {
      lo = x1; x1 = x2; f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = b(x2);
    }
  }
  return 0.5 * (lo + hi);
}

std::string TheoryReport::summary() const {
  std::ostringstream out;
  out << name << ": cases=" << cases << " asserted=" << asserted
      << " trivial=" << trivial << " not_covered=" << not_covered
      << " precondition_unmet=" << precondition_unmet << " violations=" << violations;
  return out.str();
}

TheoryReport verify_gradient_sign_theorem(
    const TheoryRunConfig& config,
    const std::function<double(const SortedLogits&, Temperature, std::size_t)>&
        gradient_override) {
  TheoryReport report;
  report.name = "gradient_sign_theorem";
  const auto grad = gradient_override
                        ? gradient_override
                        : [](const SortedLogits& z, Temperature t, std::size_t m) {
                            return grad_gap_z1(z, t, m);
                          };
  Xoshiro256 rng(derive_seed(config.seed, 0, SeedPurpose::kTheoryCases));
  for (std::size_t i = 0; i < config.num_cases; ++i) {
    const bool above_one = (i % 2) == 0;
    const Temperature t(sample_temperature(rng, above_one));
    const double b = bound_b(t, config.num_classes);
    // Half the cases land above the bound (asserted), half below (recorded).
    const bool covered = (rng.next() & 1) != 0;
    const double delta_z =
        covered ? b + rng.uniform(0.05, 5.0) : std::max(0.0, b) * rng.uniform();
    const SortedLogits z = sample_sorted_logits(rng, config.num_classes, delta_z);
    const std::size_t m = 1 + rng.next_below(config.num_classes - 1);  // M < C

    TheoryCaseRecord record;
    record.t = t.value();
    record.delta_z = delta_z;
    record.m = m;
    record.bound = b;
    record.value = grad(z, t, m);
    if (z.delta_z() > b) {
      record.status = "asserted";
      record.violation = above_one ? !(record.value < 0.0) : !(record.value > 0.0);
    } else {
      record.status = "not_covered";
    }
    finish_record(report, config, std::move(record));
  }
  return report;
}

TheoryReport verify_sufficient_condition(const TheoryRunConfig& config) {
  TheoryReport report;
  report.name = "sufficient_condition";
  Xoshiro256 rng(derive_seed(config.seed, 1, SeedPurpose::kTheoryCases));
  for (std::size_t i = 0; i < config.num_cases; ++i) {
    const bool above_one = (i % 2) == 0;
    const Temperature t(sample_temperature(rng, above_one));
    const SortedLogits z =
        sample_sorted_logits(rng, config.num_classes, rng.uniform(0.0, 6.0));
    const ProbVector p1{sorted_softmax(z.values(), 1.0)};
    const ProbVector pt{sorted_softmax(z.values(), t.value())};

    // Branch ordering constraint: T > 1 forces q_hat >= q_hat_T.
    double qa = rng.uniform(1e-6, 1.0), qb = rng.uniform(1e-6, 1.0);
    const double q_hat = above_one ? std::max(qa, qb) : std::min(qa, qb);
    const double q_hat_t = above_one ? std::min(qa, qb) : std::max(qa, qb);

    const std::size_t l = deterministic_set_size(p1, q_hat);
    const std::size_t l_t = deterministic_set_size(pt, q_hat_t);

    TheoryCaseRecord record;
    record.t = t.value();
    record.delta_z = z.delta_z();
    record.value = static_cast<double>(l) - static_cast<double>(l_t);

    // The gap inequality is accumulated exactly as deterministic_set_size
    // accumulates its prefix sums, so the implication is exact in floating
    // point, not merely up to rounding.
    const auto prefix = [](const ProbVector& p, std::size_t count) {
      double sum = 0.0;
      for (std::size_t j = 0; j < count; ++j) sum += p[j];
      return sum;
    };

    if (above_one) {
      if (l == 1) {
        record.status = "trivial";  // L = 1 makes L <= L_T immediate
        record.violation = !(l <= l_t);
      } else {
        const double lhs = prefix(p1, l - 1) - prefix(pt, l - 1);
        if (lhs >= q_hat - q_hat_t) {
          record.status = "asserted";
          record.violation = !(l <= l_t);
        } else {
          record.status = "not_covered";
        }
      }
    } else {
      if (l_t == 1) {
        record.status = "trivial";
        record.violation = !(l >= l_t);
      } else {
        const double lhs = prefix(p1, l_t - 1) - prefix(pt, l_t - 1);
        if (lhs <= q_hat - q_hat_t) {
          record.status = "asserted";
          record.violation = !(l >= l_t);
        } else {
          record.status = "not_covered";
        }
      }
    }
    finish_record(report, config, std::move(record));
  }
  return report;
}

DecayBoundResult decay_bound(const SortedLogits& z, Temperature temperature) {
  const std::size_t c = z.size();
  const double t = temperature.value();
  if (t == 1.0) throw ArgumentError("decay_bound: undefined at T = 1");
  const std::vector<double> p1 = sorted_softmax(z.values(), 1.0);
  const std::vector<double> pt = sorted_softmax(z.values(), t);

  DecayBoundResult result;
  // s = last index (1-based) where d = p1 - pt carries the branch sign.
  // All-equal logits give d == 0 everywhere; s defaults to 1 there, which is
  // sound because every gap difference is exactly zero.
  result.s_index = 1;
  for (std::size_t i = 0; i < c; ++i) {
    const double d = p1[i] - pt[i];
    if ((t > 1.0 && d > 0.0) || (t < 1.0 && d < 0.0)) result.s_index = i + 1;
  }
  result.precondition_met = result.s_index == 1;
  if (!result.precondition_met) return result;

  const double dz = z.delta_z();
  const auto cm1 = static_cast<double>(c - 1);
  const double e = t > 1.0 ? cm1 * std::exp(-dz / t) : cm1 * std::exp(-dz);
  result.bound = e / (e + 1.0);

  // g(z;T,M) for every M, then the exhaustive pairwise scan.
  std::vector<double> g(c);
  double acc1 = 0.0, acct = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    acc1 += p1[i];
    acct += pt[i];
    g[i] = acc1 - acct;
  }
  for (std::size_t m = 0; m < c; ++m) {
    for (std::size_t l = 0; l < c; ++l) {
      result.max_gap_difference =
          std::max(result.max_gap_difference, std::abs(g[m] - g[l]));
    }
  }
  result.violated = !(result.max_gap_difference < result.bound);
  return result;
}

TheoryReport verify_decay_bound(const TheoryRunConfig& config) {
  TheoryReport report;
  report.name = "decay_bound";
  Xoshiro256 rng(derive_seed(config.seed, 2, SeedPurpose::kTheoryCases));
  std::size_t met = 0;
  const std::size_t max_attempts = config.num_cases * 50;
  for (std::size_t attempt = 0; met < config.num_cases && attempt < max_attempts;
       ++attempt) {
    const bool above_one = (attempt % 2) == 0;
    const Temperature t(sample_temperature(rng, above_one));
    // Dominant first entries make s = 1 typical, mirroring quantile samples.
    const SortedLogits z =
        sample_sorted_logits(rng, config.num_classes, rng.uniform(3.0, 12.0));
    const DecayBoundResult r = decay_bound(z, t);

    TheoryCaseRecord record;
    record.t = t.value();
    record.delta_z = z.delta_z();
    record.value = r.max_gap_difference;
    record.bound = r.bound;
    if (!r.precondition_met) {
      record.status = "precondition_unmet";
    } else {
      ++met;
      record.status = "asserted";
      record.violation = r.violated;
    }
    finish_record(report, config, std::move(record));
  }
  return report;
}

TheoryReport verify_universal_score_decrease(const TheoryRunConfig& config) {
  TheoryReport report;
  report.name = "universal_score_decrease";
  Xoshiro256 rng(derive_seed(config.seed, 3, SeedPurpose::kTheoryCases));
  for (std::size_t i = 0; i < config.num_cases; ++i) {
    // Spread and temperature gap bounded away from degeneracy so that the
    // strict inequality stays representable in double precision.
    const std::size_t c = 2 + rng.next_below(config.num_classes - 1);
    std::vector<double> z(c);
    for (double& v : z) v = rng.uniform(-5.0, 5.0);
    std::sort(z.begin(), z.end(), std::greater<>());
    const SortedLogits sorted(std::move(z));
    double t_small = rng.uniform(0.3, 5.0);
    double t_big = rng.uniform(0.3, 5.0);
    if (t_small > t_big) std::swap(t_small, t_big);
    t_big += 0.05;
    const std::size_t l = 1 + rng.next_below(c);

    const double mass_small = sorted_top_mass(sorted.values(), Temperature(t_small), l);
    const double mass_big = sorted_top_mass(sorted.values(), Temperature(t_big), l);

    TheoryCaseRecord record;
    record.t = t_big;
    record.delta_z = sorted.delta_z();
    record.m = l;
    record.value = mass_small - mass_big;

    bool all_equal = true;
    for (std::size_t j = 1; j < c; ++j) {
      if (sorted.values()[j] != sorted.values()[0]) {
        all_equal = false;
        break;
      }
    }
    if (l == c || all_equal) {
      record.status = "trivial";  // equality allowed
      record.violation = !(mass_small >= mass_big);
    } else {
      record.status = "asserted";
      record.violation = !(mass_small > mass_big);
    }
    finish_record(report, config, std::move(record));
  }
  return report;
}

std::vector<QuantileSimilarityRow> quantile_similarity_report(
    const LogitsTable& table, std::span<const std::size_t> cp_indices,
    const ScoreMethod& method, double alpha, std::span<const double> temperatures,
    std::uint64_t seed) {
  if (cp_indices.empty()) throw ArgumentError("quantile_similarity_report: empty CP set");

  // Positions (into cp_indices) of the threshold-realizing and median-score
  // samples at temperature T; ties resolve to the earliest CP-set position.
  const auto locate = [&](double t_value, std::size_t& quantile_pos,
                          std::size_t& median_pos) {
    Xoshiro256 u_stream(derive_seed(seed, 0, SeedPurpose::kFitScoreU));
    std::vector<std::pair<double, std::size_t>> scored(cp_indices.size());
    for (std::size_t pos = 0; pos < cp_indices.size(); ++pos) {
      const std::size_t idx = cp_indices[pos];
      const ProbVector p = softmax_at(table.row(idx), Temperature(t_value));
      std::optional<double> u;
      if (method.randomized) u = u_stream.uniform();
      scored[pos] = {score(method, p, table.label(idx), u), pos};
    }
    std::stable_sort(scored.begin(), scored.end());
    const std::size_t n = scored.size();
    const double raw = std::ceil((static_cast<double>(n) + 1.0) * (1.0 - alpha));
    const std::size_t k = std::min(static_cast<std::size_t>(raw), n);
    quantile_pos = scored[k - 1].second;
    median_pos = scored[(n - 1) / 2].second;
  };

  const auto delta_z_of = [&](std::size_t pos) {
    const auto row = table.row(cp_indices[pos]);
    std::vector<double> z(row.begin(), row.end());
    std::sort(z.begin(), z.end(), std::greater<>());
    return z[0] - z[1];
  };
  const auto top5_of = [&](std::size_t pos, double t_value) {
    const ProbVector p = softmax_at(table.row(cp_indices[pos]), Temperature(t_value));
    std::vector<double> sorted = p.probs;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    sorted.resize(std::min<std::size_t>(5, sorted.size()));
    return sorted;
  };

  std::size_t base_quantile = 0, base_median = 0;
  locate(1.0, base_quantile, base_median);

  std::vector<QuantileSimilarityRow> rows;
  rows.reserve(temperatures.size());
  for (const double t : temperatures) {
    std::size_t q_pos = 0, m_pos = 0;
    locate(t, q_pos, m_pos);
    QuantileSimilarityRow row;
    row.t = t;
    row.quantile_index_base = base_quantile;
    row.quantile_index_at_t = q_pos;
    row.same_sample = q_pos == base_quantile;
    row.delta_z_base = delta_z_of(base_quantile);
    row.delta_z_at_t = delta_z_of(q_pos);
    row.median_delta_z = delta_z_of(m_pos);
    row.top5_base = top5_of(base_quantile, 1.0);
    row.top5_at_t = top5_of(q_pos, t);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string theory_report_jsonl(const TheoryReport& report) {
  std::ostringstream out;
  for (const TheoryCaseRecord& r : report.records) {
    nlohmann::json j;
    j["t"] = r.t;
    j["delta_z"] = r.delta_z;
    j["m"] = r.m;
    j["value"] = r.value;
    j["bound"] = r.bound;
    j["status"] = r.status;
    j["violation"] = r.violation;
    out << j.dump() << '\n';
  }
  nlohmann::json s;
  s["name"] = report.name;
  s["cases"] = report.cases;
  s["asserted"] = report.asserted;
  s["trivial"] = report.trivial;
  s["not_covered"] = report.not_covered;
  s["precondition_unmet"] = report.precondition_unmet;
  s["violations"] = report.violations;
  out << s.dump() << '\n';
  return out.str();
}

}  // namespace tscp
