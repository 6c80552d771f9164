#include "tscp/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "tscp/rng.hpp"
#include "tscp/softmax.hpp"

namespace tscp {

LogitsTable make_synthetic_table(const SyntheticConfig& config) {
  if (config.num_classes < 2) throw ArgumentError("synthetic: need C >= 2");
  if (config.num_samples < 1) throw ArgumentError("synthetic: need N >= 1");
  if (!(config.scale > 0.0)) throw ArgumentError("synthetic: scale must be positive");

  Xoshiro256 rng(derive_seed(config.seed, 0, SeedPurpose::kGenerator));
  const std::size_t n = config.num_samples;
  const std::size_t c = config.num_classes;

  std::vector<double> logits(n * c);
  std::vector<int> labels(n);
  std::vector<double> raw(c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) raw[j] = config.noise_sd * rng.normal();
    const std::size_t signalled = rng.next_below(c);
    const double boost =
        std::max(0.0, config.signal_mean + config.signal_sd * rng.normal());
    raw[signalled] += boost;

    // Label drawn from softmax(raw): the raw logits are the true posterior,
    // which is exactly what "calibrated" means here.
    const ProbVector p = softmax_at(raw, Temperature(1.0));
    const double pick = rng.uniform();
    double acc = 0.0;
    std::size_t label = c - 1;
    for (std::size_t j = 0; j < c; ++j) {
      acc += p[j];
      if (pick < acc) {
        label = j;
        break;
      }
    }
    labels[i] = static_cast<int>(label);
    for (std::size_t j = 0; j < c; ++j) logits[i * c + j] = config.scale * raw[j];
  }
  return LogitsTable(c, std::move(logits), std::move(labels));
}

}  // namespace tscp
