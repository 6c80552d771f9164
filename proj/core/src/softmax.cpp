#include "tscp/softmax.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace tscp {

Temperature::Temperature(double value) : value_(value) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw ArgumentError("temperature must be positive and finite, got " +
                        std::to_string(value));
  }
}

bool is_valid_prob_vector(const ProbVector& p) {
  if (p.probs.empty()) return false;
  double sum = 0.0;
  for (double v : p.probs) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= 1e-9;
}

ProbVector softmax_at(std::span<const double> logits, Temperature temperature) {
  if (logits.empty()) throw ArgumentError("softmax_at: empty logits vector");
  const double t = temperature.value();
  double max_scaled = -std::numeric_limits<double>::infinity();
  for (double z : logits) {
    if (!std::isfinite(z)) throw ArgumentError("softmax_at: non-finite logit");
    max_scaled = std::max(max_scaled, z / t);
  }
  ProbVector out;
  out.probs.resize(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.probs[i] = std::exp(logits[i] / t - max_scaled);
    sum += out.probs[i];
  }
  for (double& v : out.probs) v /= sum;
  return out;
}

double entropy(const ProbVector& p) {
  double h = 0.0;
  for (double v : p.probs) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

std::size_t argmax_class(std::span<const double> logits) {
  if (logits.empty()) throw ArgumentError("argmax_class: empty vector");
  for (double z : logits) {
    if (!std::isfinite(z)) throw ArgumentError("argmax_class: non-finite logit");
  }
  return static_cast<std::size_t>(
      std::max_element(logits.begin(), logits.end()) - logits.begin());
}

double sorted_top_mass(std::span<const double> sorted_logits, Temperature temperature,
                       std::size_t count) {
  const std::size_t c = sorted_logits.size();
  if (c == 0) throw ArgumentError("sorted_top_mass: empty logits vector");
  if (count < 1 || count > c) throw ArgumentError("sorted_top_mass: count out of range");
  const double t = temperature.value();
  const double top = sorted_logits[0] / t;  // sorted descending: max is first
  double prefix = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    const double e = std::exp(sorted_logits[i] / t - top);
    total += e;
    if (i < count) prefix = total;
  }
  return prefix / total;
}

}  // namespace tscp
