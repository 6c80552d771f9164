#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "tscp/calibrate.hpp"
#include "tscp/conformal.hpp"
#include "tscp/metrics.hpp"
#include "tscp/softmax.hpp"
#include "tscp/synthetic.hpp"
#include "tscp/theory.hpp"

namespace {

tscp::LogitsTable bench_table(std::size_t n, std::size_t c) {
  return tscp::make_synthetic_table(
      {.num_samples = n, .num_classes = c, .scale = 2.0, .seed = 1});
}

void BM_softmax(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  std::vector<double> z(c);
  for (std::size_t i = 0; i < c; ++i) z[i] = static_cast<double>(i % 13) - 6.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tscp::softmax_at(z, tscp::Temperature(1.5)));
  }
}
BENCHMARK(BM_softmax)->Arg(10)->Arg(100)->Arg(1000);

void BM_fit_threshold(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const tscp::LogitsTable table = bench_table(n, 100);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const tscp::ScoreMethod method{tscp::ScoreKind::kRaps, true, 0.1, 5};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        tscp::fit_threshold(table, idx, method, 0.1, tscp::Temperature(1.3), 7));
  }
}
BENCHMARK(BM_fit_threshold)->Arg(500)->Arg(2000);

void BM_evaluate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const tscp::LogitsTable table = bench_table(n, 100);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const tscp::ScoreMethod method{tscp::ScoreKind::kAps, false, 0.0, 0};
  const tscp::CPModel model =
      tscp::fit_threshold(table, idx, method, 0.1, tscp::Temperature(1.3), 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tscp::evaluate(model, table, idx, 3));
  }
}
BENCHMARK(BM_evaluate)->Arg(1000)->Arg(5000);

void BM_nll(benchmark::State& state) {
  const tscp::LogitsTable table = bench_table(5000, 100);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tscp::nll(table, tscp::Temperature(1.5)));
  }
}
BENCHMARK(BM_nll);

void BM_gradient_sign_cases(benchmark::State& state) {
  tscp::TheoryRunConfig config;
  config.num_cases = static_cast<std::size_t>(state.range(0));
  config.num_classes = 10;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tscp::verify_gradient_sign_theorem(config));
  }
}
BENCHMARK(BM_gradient_sign_cases)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
