#include "tscp/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "tscp/rng.hpp"

namespace tscp {

namespace {

// Rank-r score (0-based rank) against a sorted view. Monotone non-decreasing
// in r for every method, which makes prediction sets prefixes of the ranking.
double rank_score(const ScoreMethod& method, const SortedProbs& sp, std::size_t rank,
                  std::optional<double> u) {
  switch (method.kind) {
    case ScoreKind::kLac:
      return 1.0 - sp.probs[rank];
    case ScoreKind::kAps:
    case ScoreKind::kRaps: {
      double s = sp.prefix[rank];
      if (method.randomized) s -= *u * sp.probs[rank];
      if (method.kind == ScoreKind::kRaps) {
        const double depth =
            static_cast<double>(rank + 1) - static_cast<double>(method.k_reg);
        s += method.lambda * std::max(depth, 0.0);
      }
      return s;
    }
  }
  return 0.0;
}

void check_u(const ScoreMethod& method, std::optional<double> u) {
  if (method.kind == ScoreKind::kLac) return;
  if (method.randomized) {
    if (!u.has_value()) {
      throw ArgumentError("randomized " + score_kind_name(method.kind) +
                          " requires a uniform draw u");
    }
    if (!(*u >= 0.0 && *u <= 1.0)) throw ArgumentError("u must lie in [0,1]");
  }
}

// k-th smallest (1-based) conformal quantile index; clamps to n when the
// formula overflows the sample count.
std::size_t quantile_rank(std::size_t n, double alpha, bool& clamped) {
  const double raw = std::ceil((static_cast<double>(n) + 1.0) * (1.0 - alpha));
  auto k = static_cast<std::size_t>(raw);
  clamped = k > n;
  if (clamped) k = n;
  if (k < 1) k = 1;
  return k;
}

std::vector<double> true_label_scores(const LogitsTable& table,
                                      std::span<const std::size_t> indices,
                                      const ScoreMethod& method, Temperature temperature,
                                      Xoshiro256& u_stream) {
  std::vector<double> scores;
  scores.reserve(indices.size());
  for (const std::size_t idx : indices) {
    const ProbVector p = softmax_at(table.row(idx), temperature);
    std::optional<double> u;
    if (method.randomized) u = u_stream.uniform();
    scores.push_back(score(method, p, table.label(idx), u));
  }
  return scores;
}

CPModel fit_from_scores(std::vector<double> scores, const ScoreMethod& method,
                        double alpha, Temperature temperature) {
  CPModel model;
  model.method = method;
  model.alpha = alpha;
  model.temperature = temperature.value();
  model.n_cal = scores.size();
  bool clamped = false;
  const std::size_t k = quantile_rank(scores.size(), alpha, clamped);
  std::nth_element(scores.begin(), scores.begin() + (k - 1), scores.end());
  model.q_hat = scores[k - 1];
  model.clamp_warning = clamped;
  return model;
}

}  // namespace

ScoreKind parse_score_kind(const std::string& name) {
  if (name == "lac") return ScoreKind::kLac;
  if (name == "aps") return ScoreKind::kAps;
  if (name == "raps") return ScoreKind::kRaps;
  throw ArgumentError("unknown score method '" + name + "' (expected lac, aps or raps)");
}

std::string score_kind_name(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::kLac: return "lac";
    case ScoreKind::kAps: return "aps";
    case ScoreKind::kRaps: return "raps";
  }
  return "?";
}

std::string ScoreMethod::display_name() const {
  std::string name = score_kind_name(kind);
  if (kind != ScoreKind::kLac && randomized) name += "-rand";
  return name;
}

bool PredictionSet::contains(int y) const {
  return std::binary_search(classes.begin(), classes.end(), y);
}

SortedProbs SortedProbs::from(const ProbVector& p) {
  const std::size_t c = p.size();
  SortedProbs sp;
  sp.class_at.resize(c);
  std::iota(sp.class_at.begin(), sp.class_at.end(), 0);
  std::stable_sort(sp.class_at.begin(), sp.class_at.end(),
                   [&](int a, int b) { return p[a] > p[b]; });
  sp.probs.resize(c);
  sp.rank_of.resize(c);
  sp.prefix.resize(c);
  double running = 0.0;
  for (std::size_t r = 0; r < c; ++r) {
    sp.probs[r] = p[static_cast<std::size_t>(sp.class_at[r])];
    sp.rank_of[static_cast<std::size_t>(sp.class_at[r])] = r;
    running += sp.probs[r];
    sp.prefix[r] = running;
  }
  // Renormalize by the accumulated total so the full-prefix mass is exactly
  // 1.0; q_hat = 1 then includes every class without rounding artifacts.
  const double total = sp.prefix[c - 1];
  for (std::size_t r = 0; r < c; ++r) {
    sp.probs[r] /= total;
    sp.prefix[r] /= total;
  }
  return sp;
}

double score(const ScoreMethod& method, const ProbVector& probs, int label,
             std::optional<double> u) {
  if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
    throw ArgumentError("score: label out of range");
  }
  check_u(method, u);
  if (method.kind == ScoreKind::kLac) {
    return 1.0 - probs[static_cast<std::size_t>(label)];
  }
  const SortedProbs sp = SortedProbs::from(probs);
  return rank_score(method, sp, sp.rank_of[static_cast<std::size_t>(label)], u);
}

CPModel fit_threshold(const LogitsTable& table, std::span<const std::size_t> indices,
                      const ScoreMethod& method, double alpha, Temperature temperature,
                      std::uint64_t seed) {
  if (indices.empty()) throw ArgumentError("fit_threshold: empty CP set");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("fit_threshold: alpha in (0,1)");
  Xoshiro256 u_stream(derive_seed(seed, 0, SeedPurpose::kFitScoreU));
  return fit_from_scores(true_label_scores(table, indices, method, temperature, u_stream),
                         method, alpha, temperature);
}

PredictionSet predict_set(const CPModel& model, std::span<const double> logits,
                          double u) {
  const ProbVector p = softmax_at(logits, Temperature(model.temperature));
  PredictionSet set;
  if (model.method.kind == ScoreKind::kLac) {
    // y is included iff pi_y >= 1 - q_hat.
    for (std::size_t y = 0; y < p.size(); ++y) {
      if (1.0 - p[y] <= model.q_hat) set.classes.push_back(static_cast<int>(y));
    }
    return set;
  }
  std::optional<double> uu;
  if (model.method.randomized) {
    check_u(model.method, u);
    uu = u;
  }
  const SortedProbs sp = SortedProbs::from(p);
  for (std::size_t r = 0; r < p.size(); ++r) {
    if (rank_score(model.method, sp, r, uu) > model.q_hat) break;  // scores rise with rank
    set.classes.push_back(sp.class_at[r]);
  }
  std::sort(set.classes.begin(), set.classes.end());
  return set;
}

std::size_t deterministic_set_size(const ProbVector& sorted_probs, double q_hat) {
  const std::size_t c = sorted_probs.size();
  if (c == 0) throw ArgumentError("deterministic_set_size: empty vector");
  for (std::size_t i = 1; i < c; ++i) {
    if (sorted_probs[i] > sorted_probs[i - 1]) {
      throw ArgumentError("deterministic_set_size: probabilities not sorted descending");
    }
  }
  if (!(q_hat > 0.0 && q_hat <= 1.0)) {
    throw ArgumentError("deterministic_set_size: q_hat must lie in (0,1]");
  }
  double cumulative = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    cumulative += sorted_probs[i];
    if (cumulative >= q_hat) return i + 1;
  }
  return c;  // rounding left the total just below q_hat
}

MondrianModel fit_mondrian(const LogitsTable& table, std::span<const std::size_t> indices,
                           const ScoreMethod& method, double alpha,
                           Temperature temperature, std::uint64_t seed) {
  if (indices.empty()) throw ArgumentError("fit_mondrian: empty CP set");
  const std::size_t c = table.num_classes();

  // One shared u stream in CP-set order, as in fit_threshold, so pooled and
  // per-class fits see identical per-sample draws.
  Xoshiro256 u_stream(derive_seed(seed, 0, SeedPurpose::kFitScoreU));
  const std::vector<double> scores =
      true_label_scores(table, indices, method, temperature, u_stream);

  std::vector<std::vector<double>> class_scores(c);
  for (std::size_t pos = 0; pos < indices.size(); ++pos) {
    class_scores[static_cast<std::size_t>(table.label(indices[pos]))].push_back(
        scores[pos]);
  }

  MondrianModel model;
  model.pooled = fit_from_scores(scores, method, alpha, temperature);
  model.per_class.reserve(c);
  model.used_fallback.resize(c, false);
  for (std::size_t y = 0; y < c; ++y) {
    if (class_scores[y].empty()) {
      model.per_class.push_back(model.pooled);
      model.used_fallback[y] = true;
    } else {
      model.per_class.push_back(
          fit_from_scores(std::move(class_scores[y]), method, alpha, temperature));
    }
  }
  return model;
}

PredictionSet predict_set_mondrian(const MondrianModel& model,
                                   std::span<const double> logits, double u) {
  const ProbVector p = softmax_at(logits, Temperature(model.pooled.temperature));
  const ScoreMethod& method = model.pooled.method;
  std::optional<double> uu;
  if (method.kind != ScoreKind::kLac && method.randomized) {
    check_u(method, u);
    uu = u;
  }
  const SortedProbs sp = SortedProbs::from(p);
  PredictionSet set;
  for (std::size_t y = 0; y < p.size(); ++y) {
    const double s = method.kind == ScoreKind::kLac
                         ? 1.0 - p[y]
                         : rank_score(method, sp, sp.rank_of[y], uu);
    if (s <= model.per_class[y].q_hat) set.classes.push_back(static_cast<int>(y));
  }
  return set;
}

std::string cp_model_json(const CPModel& model) {
  nlohmann::json j;
  j["method"] = score_kind_name(model.method.kind);
  j["randomized"] = model.method.randomized;
  j["lambda"] = model.method.lambda;
  j["k_reg"] = model.method.k_reg;
  j["alpha"] = model.alpha;
  j["temperature"] = model.temperature;
  j["q_hat"] = model.q_hat;
  j["n_cal"] = model.n_cal;
  j["clamp_warning"] = model.clamp_warning;
  return j.dump(2);
}

CPModel cp_model_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError("invalid CPModel JSON");
  CPModel model;
  try {
    model.method.kind = parse_score_kind(j.at("method").get<std::string>());
    model.method.randomized = j.at("randomized").get<bool>();
    model.method.lambda = j.at("lambda").get<double>();
    model.method.k_reg = j.at("k_reg").get<std::size_t>();
    model.alpha = j.at("alpha").get<double>();
    model.temperature = j.at("temperature").get<double>();
    model.q_hat = j.at("q_hat").get<double>();
    model.n_cal = j.at("n_cal").get<std::size_t>();
    model.clamp_warning = j.at("clamp_warning").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid CPModel JSON: ") + e.what());
  }
  return model;
}

}  // namespace tscp
