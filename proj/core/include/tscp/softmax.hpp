#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tscp/errors.hpp"

namespace tscp {

/// Positive, finite temperature for logit scaling z -> z/T.
class Temperature {
 public:
  explicit Temperature(double value);
  double value() const { return value_; }

 private:
  double value_;
};

/// A probability vector: entries in [0,1] summing to 1 (1e-9 tolerance).
struct ProbVector {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
};

/// True iff p satisfies the ProbVector invariants.
bool is_valid_prob_vector(const ProbVector& p);

/// Softmax of z/T with max-subtraction for stability. Entry ranking equals
/// the logit ranking for every T > 0.
ProbVector softmax_at(std::span<const double> logits, Temperature temperature);

/// Shannon entropy -sum p_i ln p_i, with 0 ln 0 := 0. Lies in [0, ln C].
double entropy(const ProbVector& p);

/// Index of the maximum logit; ties broken by the lowest index.
std::size_t argmax_class(std::span<const double> logits);

/// Cumulative softmax mass of the top `count` entries of a descending-sorted
/// logits vector at temperature T, computed as a ratio of partial exponential
/// sums. Shares one summation order between numerator and denominator, so
/// count == C yields exactly 1.0 and order comparisons between temperatures
/// are as sharp as doubles allow.
double sorted_top_mass(std::span<const double> sorted_logits, Temperature temperature,
                       std::size_t count);

}  // namespace tscp
