#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "tscp/rng.hpp"
#include "tscp/synthetic.hpp"
#include "tscp/theory.hpp"

using namespace tscp;

namespace {

SortedLogits random_sorted(Xoshiro256& rng, std::size_t c, double delta_z,
                           double span = 8.0) {
  std::vector<double> z(c);
  z[0] = delta_z;
  z[1] = 0.0;
  for (std::size_t i = 2; i < c; ++i) z[i] = -rng.uniform(0.0, span);
  std::sort(z.begin() + 1, z.end(), std::greater<>());
  return SortedLogits(std::move(z));
}

// Finite-difference oracle for d g / d z_1 (central difference).
double fd_grad(const SortedLogits& z, Temperature t, std::size_t m, double h = 1e-6) {
  std::vector<double> up(z.values().begin(), z.values().end());
  std::vector<double> down = up;
  up[0] += h;
  down[0] -= h;
  return (gap(SortedLogits(up), t, m) - gap(SortedLogits(down), t, m)) / (2.0 * h);
}

}  // namespace

TEST_CASE("sorted logits validation") {
  CHECK_THROWS_AS(SortedLogits({1.0}), ArgumentError);
  CHECK_THROWS_AS(SortedLogits({1.0, 2.0}), ArgumentError);
  CHECK_THROWS_AS(SortedLogits({1.0, std::nan("")}), ArgumentError);
  const SortedLogits ok({3.0, 1.0, 1.0, -2.0});
  CHECK(ok.delta_z() == 2.0);
}

TEST_CASE("gap closed forms") {
  const SortedLogits flat({0.5, 0.5, 0.5, 0.5});
  for (const double t : {0.4, 2.0, 7.0}) {
    for (std::size_t m = 1; m <= 4; ++m) {
      CHECK(gap(flat, Temperature(t), m) == doctest::Approx(0.0).epsilon(1e-15));
    }
  }
  const SortedLogits z({2.0, 0.0, 0.0});
  CHECK(gap(z, Temperature(2.0), 3) == doctest::Approx(0.0));  // M = C
  // sigma([2,0,0])_1 - sigma([1,0,0])_1, frozen from direct evaluation
  CHECK(gap(z, Temperature(2.0), 1) ==
        doctest::Approx(0.2108691573957694).epsilon(1e-12));
  CHECK(gap(z, Temperature(1.0), 1) == doctest::Approx(0.0));
  CHECK_THROWS_AS(gap(z, Temperature(2.0), 0), ArgumentError);
  CHECK_THROWS_AS(gap(z, Temperature(2.0), 4), ArgumentError);
}

TEST_CASE("gap sign follows the temperature branch") {
  Xoshiro256 rng(3);
  for (int trial = 0; trial < 5000; ++trial) {
    const std::size_t c = 3 + rng.next_below(10);
    const SortedLogits z = random_sorted(rng, c, rng.uniform(0.01, 6.0));
    const std::size_t m = 1 + rng.next_below(c - 1);  // M < C
    const double hot = gap(z, Temperature(rng.uniform(1.05, 5.0)), m);
    const double cold = gap(z, Temperature(rng.uniform(0.2, 0.95)), m);
    CHECK(hot > 0.0);
    CHECK(cold < 0.0);
  }
}

TEST_CASE("analytic gradient matches finite differences") {
  Xoshiro256 rng(7);
  std::size_t checked = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t c = 3 + rng.next_below(10);
    const SortedLogits z = random_sorted(rng, c, rng.uniform(0.05, 8.0));
    const double t_value =
        (trial % 2 == 0) ? rng.uniform(1.05, 5.0) : rng.uniform(0.3, 0.95);
    const Temperature t(t_value);
    const std::size_t m = 1 + rng.next_below(c);
    const double analytic = grad_gap_z1(z, t, m);
    const double fd = fd_grad(z, t, m);
    const double tol = std::max(1e-5 * std::max(std::abs(analytic), std::abs(fd)), 1e-9);
    CHECK(std::abs(analytic - fd) <= tol);
    ++checked;
  }
  CHECK(checked == 10000);
}

TEST_CASE("gradient at T = 1 and at M = C vanishes") {
  Xoshiro256 rng(11);
  const SortedLogits z = random_sorted(rng, 6, 2.0);
  CHECK(grad_gap_z1(z, Temperature(1.0), 3) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(grad_gap_z1(z, Temperature(2.0), 6) == 0.0);
}

TEST_CASE("gradient closed form at uniform logits") {
  // All-equal logits: sigma_1 = 1/C, tail = (C-M)/C at any temperature, so
  // grad = (1/C)(C-M)/C - (1/T)(1/C)(C-M)/C = (1 - 1/T) (C-M) / C^2.
  const std::size_t c = 5;
  const SortedLogits flat({1.0, 1.0, 1.0, 1.0, 1.0});
  for (const double t : {0.5, 2.0}) {
    for (std::size_t m = 1; m < c; ++m) {
      const double expected = (1.0 - 1.0 / t) * static_cast<double>(c - m) /
                              static_cast<double>(c * c);
      CHECK(grad_gap_z1(flat, Temperature(t), m) ==
            doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("bound function values") {
  // max{2 ln 8, (2/3) ln(8 * 99^2)} with C = 100, frozen from evaluation
  CHECK(bound_b(Temperature(2.0), 100) ==
        doctest::Approx(7.51312082796601).epsilon(1e-12));
  CHECK_THROWS_AS(bound_b(Temperature(1.0), 100), ArgumentError);
  CHECK_THROWS_AS(bound_b(Temperature(2.0), 1), ArgumentError);
  // divergence toward T = 1 from above
  CHECK(bound_b(Temperature(1.0001), 100) > 1e3);
}

TEST_CASE("bound root-finding reproduces the published intervals") {
  // With C = 100 the level set b(T) = 8 bounds the ranges (0, 0.83) and
  // (1.25, 2.33): a sample with delta-z = 8 satisfies the theorem exactly in
  // those temperature windows.
  const auto b = [](double t) { return bound_b(Temperature(t), 100); };
  const auto bisect = [&](double lo, double hi) {
    const bool rising = b(hi) > 8.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      if ((b(mid) > 8.0) == rising) hi = mid;
      else lo = mid;
    }
    return 0.5 * (lo + hi);
  };
  const double below = bisect(0.5, 0.9999);
  CHECK(std::abs(below - 0.83) < 0.01);
  const double t_c = bound_minimizer(100);
  const double lower = bisect(t_c, 1.0001);  // descending side
  const double upper = bisect(t_c, 6.0);     // ascending side
  CHECK(std::abs(lower - 1.25) < 0.01);
  CHECK(std::abs(upper - 2.33) < 0.01);
}

TEST_CASE("bound minimizer shifts left as C grows") {
  const double t10 = bound_minimizer(10);
  const double t100 = bound_minimizer(100);
  const double t1000 = bound_minimizer(1000);
  CHECK(t10 > t100);
  CHECK(t100 > t1000);
  CHECK(t1000 > 1.0);
  // frozen from a fine-grid scan
  CHECK(t10 == doctest::Approx(1.9302).epsilon(1e-3));
  CHECK(t100 == doctest::Approx(1.3702).epsilon(1e-3));
  CHECK(t1000 == doctest::Approx(1.2308).epsilon(1e-3));
}

TEST_CASE("gradient sign theorem holds on sampled cases") {
  TheoryRunConfig config;
  config.num_cases = 20000;
  config.seed = 1;
  config.num_classes = 10;
  const TheoryReport report = verify_gradient_sign_theorem(config);
  CHECK(report.cases == 20000);
  CHECK(report.violations == 0);
  CHECK(report.asserted > 5000);
  CHECK(report.not_covered > 5000);  // below-bound cases are never asserted
}

TEST_CASE("a constructed just-above-bound case has the predicted sign") {
  Xoshiro256 rng(13);
  const double b = bound_b(Temperature(2.0), 10);
  const SortedLogits z = random_sorted(rng, 10, b + 0.1);
  CHECK(grad_gap_z1(z, Temperature(2.0), 3) < 0.0);
  const double b_cold = bound_b(Temperature(0.5), 10);
  const SortedLogits z2 = random_sorted(rng, 10, b_cold + 0.1);
  CHECK(grad_gap_z1(z2, Temperature(0.5), 3) > 0.0);
}

TEST_CASE("an injected sign flip is caught by the verifier") {
  TheoryRunConfig config;
  config.num_cases = 2000;
  config.seed = 2;
  config.num_classes = 10;
  const auto flipped = [](const SortedLogits& z, Temperature t, std::size_t m) {
    return -grad_gap_z1(z, t, m);
  };
  const TheoryReport report = verify_gradient_sign_theorem(config, flipped);
  CHECK(report.violations > 0);
}

TEST_CASE("sufficient condition proposition holds on sampled cases") {
  TheoryRunConfig config;
  config.num_cases = 20000;
  config.seed = 3;
  config.num_classes = 10;
  const TheoryReport report = verify_sufficient_condition(config);
  CHECK(report.cases == 20000);
  CHECK(report.violations == 0);
  CHECK(report.asserted > 0);
  CHECK(report.trivial > 0);
}

TEST_CASE("decay bound single cases") {
  // C = 100, T = 2, delta-z = 8: bound = 99 e^-4 / (99 e^-4 + 1)
  Xoshiro256 rng(17);
  const SortedLogits z = random_sorted(rng, 100, 8.0);
  const DecayBoundResult r = decay_bound(z, Temperature(2.0));
  REQUIRE(r.precondition_met);
  CHECK(r.bound == doctest::Approx(0.6445390128633531).epsilon(1e-12));
  CHECK_FALSE(r.violated);
  CHECK(r.max_gap_difference < r.bound);

  // all-equal logits: every gap difference is zero, trivially below bound
  const SortedLogits flat(std::vector<double>(100, 1.0));
  const DecayBoundResult rf = decay_bound(flat, Temperature(2.0));
  CHECK(rf.precondition_met);
  CHECK(rf.max_gap_difference == 0.0);
  CHECK_FALSE(rf.violated);
}

TEST_CASE("decay bound property run") {
  TheoryRunConfig config;
  config.num_cases = 1000;
  config.seed = 5;
  config.num_classes = 100;
  const TheoryReport report = verify_decay_bound(config);
  CHECK(report.asserted == 1000);
  CHECK(report.violations == 0);
}

TEST_CASE("universal score decrease property run") {
  TheoryRunConfig config;
  config.num_cases = 20000;
  config.seed = 7;
  config.num_classes = 30;
  const TheoryReport report = verify_universal_score_decrease(config);
  CHECK(report.cases == 20000);
  CHECK(report.violations == 0);
}

TEST_CASE("threshold monotonicity on a fixed CP set") {
  const LogitsTable table = make_synthetic_table(
      {.num_samples = 500, .num_classes = 10, .scale = 2.0, .seed = 19});
  std::vector<std::size_t> idx(table.num_samples());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (const bool randomized : {false, true}) {
    for (const auto kind : {ScoreKind::kAps, ScoreKind::kRaps}) {
      const ScoreMethod method{kind, randomized, 0.1, 2};
      double previous = std::numeric_limits<double>::infinity();
      for (double t = 0.5; t <= 5.0 + 1e-9; t += 0.1) {
        const CPModel model =
            fit_threshold(table, idx, method, 0.1, Temperature(t), 23);
        CHECK(model.q_hat <= previous);
        previous = model.q_hat;
      }
    }
  }
}

TEST_CASE("quantile similarity report shape and dominance") {
  const LogitsTable table = make_synthetic_table(
      {.num_samples = 4000, .num_classes = 20, .scale = 2.0, .seed = 29});
  std::vector<std::size_t> idx(table.num_samples());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::vector<double> temps{1.0, 0.7, 1.5, 2.5};
  const auto rows = quantile_similarity_report(table, idx, {ScoreKind::kAps, false, 0, 0},
                                               0.1, temps, 31);
  REQUIRE(rows.size() == temps.size());
  // T = 1 against itself: identical quantile sample
  CHECK(rows[0].same_sample);
  CHECK(rows[0].delta_z_base == rows[0].delta_z_at_t);
  for (const auto& row : rows) {
    CHECK(row.top5_base.size() == 5);
    // quantile samples carry a larger dominance margin than the median sample
    CHECK(row.delta_z_at_t > row.median_delta_z);
  }
}

TEST_CASE("theory report jsonl has one line per record plus a summary") {
  TheoryRunConfig config;
  config.num_cases = 50;
  config.seed = 11;
  config.num_classes = 5;
  config.record_cases = true;
  const TheoryReport report = verify_gradient_sign_theorem(config);
  const std::string jsonl = theory_report_jsonl(report);
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 51);
  CHECK(jsonl.find("\"violations\":0") != std::string::npos);
}
