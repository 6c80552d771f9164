#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tscp/logits.hpp"
#include "tscp/softmax.hpp"

namespace tscp {

enum class ScoreKind { kLac, kAps, kRaps };

ScoreKind parse_score_kind(const std::string& name);
std::string score_kind_name(ScoreKind kind);

/// Nonconformity score family. lambda and k_reg apply to RAPS only.
struct ScoreMethod {
  ScoreKind kind = ScoreKind::kLac;
  bool randomized = false;
  double lambda = 0.1;
  std::size_t k_reg = 5;

  /// "lac", "aps", "raps", with "-rand" appended for randomized variants.
  std::string display_name() const;
};

/// A fitted split-conformal predictor.
struct CPModel {
  ScoreMethod method;
  double alpha = 0.1;
  double temperature = 1.0;
  double q_hat = 0.0;
  std::size_t n_cal = 0;
  /// Set when ceil((n+1)(1-alpha)) exceeded n and the max score was used;
  /// the coverage guarantee is vacuous in that regime.
  bool clamp_warning = false;
};

struct PredictionSet {
  std::vector<int> classes;  // ascending, no duplicates; may be empty

  bool contains(int y) const;
  std::size_t size() const { return classes.size(); }
};

/// Descending stable sort of a probability vector (ties broken by ascending
/// class index) plus prefix sums; the shared view used by scores and sets.
struct SortedProbs {
  std::vector<double> probs;      // sorted descending
  std::vector<int> class_at;      // class index at each rank
  std::vector<std::size_t> rank_of;  // rank of each class
  std::vector<double> prefix;     // prefix[r] = sum of probs[0..r]

  static SortedProbs from(const ProbVector& p);
};

/// Nonconformity score of (probs, label). `u` must be supplied exactly for
/// randomized methods; one uniform draw is shared by all candidate labels of
/// a sample.
double score(const ScoreMethod& method, const ProbVector& probs, int label,
             std::optional<double> u = std::nullopt);

/// Fit the conformal threshold on the CP subset `indices` at the given
/// temperature: q_hat is the k-th smallest of the true-label scores with
/// k = ceil((n+1)(1-alpha)), clamped to n (with a warning flag) when the
/// index overflows. Randomized methods draw one fresh u per sample from the
/// seeded generator; the draws depend only on (seed, position), never on T.
CPModel fit_threshold(const LogitsTable& table, std::span<const std::size_t> indices,
                      const ScoreMethod& method, double alpha, Temperature temperature,
                      std::uint64_t seed);

/// Prediction set {y : s(x, y) <= q_hat}, using the same u for every
/// candidate label of this sample. May be empty.
PredictionSet predict_set(const CPModel& model, std::span<const double> logits,
                          double u = 0.0);

/// Smallest prefix length of a descending-sorted probability vector whose
/// cumulative sum reaches q_hat (minimum 1; C if the sum never reaches it).
std::size_t deterministic_set_size(const ProbVector& sorted_probs, double q_hat);

/// Classwise (Mondrian) conformal predictor: one threshold per class, the
/// pooled threshold as fallback for classes absent from the CP subset.
struct MondrianModel {
  std::vector<CPModel> per_class;
  std::vector<bool> used_fallback;
  CPModel pooled;
};

MondrianModel fit_mondrian(const LogitsTable& table, std::span<const std::size_t> indices,
                           const ScoreMethod& method, double alpha,
                           Temperature temperature, std::uint64_t seed);

/// Includes label y iff s(x, y) <= q_hat_y.
PredictionSet predict_set_mondrian(const MondrianModel& model,
                                   std::span<const double> logits, double u = 0.0);

std::string cp_model_json(const CPModel& model);
CPModel cp_model_from_json(const std::string& text);

}  // namespace tscp
