#pragma once

#include <cstddef>
#include <cstdint>

#include "tscp/logits.hpp"

namespace tscp {

/// Synthetic classifier output with a known optimal temperature.
///
/// Per sample: one class receives a signal boost on top of i.i.d. Gaussian
/// noise, the label is drawn from the softmax of those raw logits (so the raw
/// logits are perfectly calibrated by construction), and the emitted logits
/// are the raw ones multiplied by `scale`. scale > 1 yields an overconfident
/// table whose NLL-optimal temperature equals `scale`; scale < 1 yields an
/// underconfident one.
struct SyntheticConfig {
  std::size_t num_samples = 1000;
  std::size_t num_classes = 10;
  double scale = 1.0;        // beta; the temperature that re-calibrates the table
  double signal_mean = 4.0;  // mean boost of the signalled class
  double signal_sd = 2.0;
  double noise_sd = 1.0;
  std::uint64_t seed = 0;
};

LogitsTable make_synthetic_table(const SyntheticConfig& config);

}  // namespace tscp
