#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tscp/conformal.hpp"
#include "tscp/logits.hpp"
#include "tscp/softmax.hpp"

namespace tscp {

/// A logits vector validated to be non-increasing.
class SortedLogits {
 public:
  explicit SortedLogits(std::vector<double> values);
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  /// z_1 - z_2, the dominance margin of the first entry.
  double delta_z() const { return values_[0] - values_[1]; }

 private:
  std::vector<double> values_;
};

/// Top-M softmax mass difference between T = 1 and temperature T:
///   g(z; T, M) = sum_{i<=M} sigma_i(z) - sum_{i<=M} sigma_i(z/T).
/// Positive for T > 1 (M < C, non-constant z), negative for T < 1.
double gap(const SortedLogits& z, Temperature temperature, std::size_t m);

/// Analytic d g / d z_1:
///   sigma_1(z) * tail_mass(z) - (1/T) * sigma_1(z/T) * tail_mass(z/T),
/// with tail_mass the softmax mass beyond rank M.
double grad_gap_z1(const SortedLogits& z, Temperature temperature, std::size_t m);

/// The two-branch bound b(T) on delta-z beyond which the gradient sign of the
/// gap function is determined. Undefined at T = 1.
double bound_b(Temperature temperature, std::size_t num_classes);

/// Minimizer of b(T) on the T > 1 branch (grid bracketing + golden section).
double bound_minimizer(std::size_t num_classes, double t_lo = 1.01, double t_hi = 10.0);

/// Outcome counters for a verification run. `violations` must be zero for a
/// correct implementation: the checked statements are theorems.
struct TheoryCaseRecord {
  double t = 0.0;
  double delta_z = 0.0;
  std::size_t m = 0;
  double value = 0.0;   // gap / gradient / bound difference, per verifier
  double bound = 0.0;
  std::string status;   // "asserted", "trivial", "not_covered", "precondition_unmet"
  bool violation = false;
};

struct TheoryReport {
  std::string name;
  std::size_t cases = 0;
  std::size_t asserted = 0;
  std::size_t trivial = 0;
  std::size_t not_covered = 0;
  std::size_t precondition_unmet = 0;
  std::size_t violations = 0;
  std::vector<TheoryCaseRecord> records;  // filled only when recording enabled

  std::string summary() const;
};

struct TheoryRunConfig {
  std::size_t num_cases = 100000;
  std::uint64_t seed = 0;
  std::size_t num_classes = 10;
  bool record_cases = false;
};

/// Gradient-sign theorem: delta_z > b(T) forces the sign of d g / d z_1
/// (positive for T < 1, negative for T > 1). Cases are sampled on both
/// branches with delta_z both above and below the bound; below-bound cases
/// are recorded as not covered and never asserted. `gradient_override`
/// exists so tests can inject a broken gradient and watch the verifier
/// catch it.
TheoryReport verify_gradient_sign_theorem(
    const TheoryRunConfig& config,
    const std::function<double(const SortedLogits&, Temperature, std::size_t)>&
        gradient_override = nullptr);

/// Sufficient-condition proposition: with q_hat ordering matched to the
/// branch, the stated gap inequality forces L <= L_T (T > 1) or L >= L_T
/// (T < 1). Trivial branch cases (L = 1 resp. L_T = 1) are counted apart.
TheoryReport verify_sufficient_condition(const TheoryRunConfig& config);

/// Exponential-decay bound: when the per-entry softmax difference changes
/// sign after the first entry (s = 1), every |g(z;T,M) - g(z;T,L)| stays
/// below the branch bound. Checked by exhaustive (M, L) scan per case; cases
/// with s > 1 are recorded as precondition unmet.
TheoryReport verify_decay_bound(const TheoryRunConfig& config);

/// Universal score decrease: cumulative sorted softmax mass at T is no larger
/// than at T-tilde < T, strictly unless L = C or all logits equal.
TheoryReport verify_universal_score_decrease(const TheoryRunConfig& config);

struct DecayBoundResult {
  bool precondition_met = false;  // s == 1
  std::size_t s_index = 0;        // 1-based last index with branch-signed difference
  double bound = 0.0;
  double max_gap_difference = 0.0;
  bool violated = false;
};

/// Single-case decay bound evaluation (the building block of
/// verify_decay_bound, exposed for direct probing).
DecayBoundResult decay_bound(const SortedLogits& z, Temperature temperature);

struct QuantileSimilarityRow {
  double t = 0.0;
  std::size_t quantile_index_base = 0;  // CP-set position realizing q_hat at T = 1
  std::size_t quantile_index_at_t = 0;  // same at temperature T
  bool same_sample = false;
  double delta_z_base = 0.0;
  double delta_z_at_t = 0.0;
  double median_delta_z = 0.0;  // delta_z of the median-score sample at T
  std::vector<double> top5_base;
  std::vector<double> top5_at_t;
};

/// Descriptive support for the shared-quantile-sample assumption: for each
/// temperature, locate the CP-set sample realizing the threshold with and
/// without scaling and report its logit dominance. Never asserted.
std::vector<QuantileSimilarityRow> quantile_similarity_report(
    const LogitsTable& table, std::span<const std::size_t> cp_indices,
    const ScoreMethod& method, double alpha, std::span<const double> temperatures,
    std::uint64_t seed);

std::string theory_report_jsonl(const TheoryReport& report);

}  // namespace tscp
