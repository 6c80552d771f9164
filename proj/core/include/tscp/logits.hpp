#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tscp/errors.hpp"

namespace tscp {

enum class FileFormat { kCsv, kJsonl };

FileFormat parse_file_format(const std::string& name);

/// N samples of C raw logits plus an integer label each. Immutable after
/// construction; safe to share read-only across threads.
class LogitsTable {
 public:
  /// Validates shape, label range and finiteness.
  LogitsTable(std::size_t num_classes, std::vector<double> logits,
              std::vector<int> labels);

  std::size_t num_samples() const { return labels_.size(); }
  std::size_t num_classes() const { return num_classes_; }

  std::span<const double> row(std::size_t i) const {
    return {logits_.data() + i * num_classes_, num_classes_};
  }
  int label(std::size_t i) const { return labels_[i]; }
  const std::vector<int>& labels() const { return labels_; }

 private:
  std::size_t num_classes_;
  std::vector<double> logits_;  // row-major N x C
  std::vector<int> labels_;
};

/// Load a logits file. CSV expects a header `z0,...,z{C-1},label`; JSONL
/// expects one object per line with fields `logits` (array) and `label`.
/// Row order is preserved.
LogitsTable load_logits(const std::string& path, FileFormat format);

/// Write a table back out (used for fixtures and round-trip tests).
void save_logits_csv(const LogitsTable& table, const std::string& path);

/// Seeded partition of [0, N) into calibration / CP / evaluation index sets.
/// Sizes are floor(N * fraction) for calib and cp; the remainder is eval.
/// A pure function of (N, fractions, seed): identical inputs give identical
/// index vectors. Index vectors are sorted ascending.
struct SplitPlan {
  double calib_fraction = 0.0;
  double cp_fraction = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> calib_indices;
  std::vector<std::size_t> cp_indices;
  std::vector<std::size_t> eval_indices;
};

SplitPlan make_split(const LogitsTable& table, double calib_fraction,
                     double cp_fraction, std::uint64_t seed);

}  // namespace tscp
