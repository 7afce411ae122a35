#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "diffattack/error.hpp"
#include "diffattack/oracle.hpp"
#include "diffattack/rng.hpp"
#include "diffattack/tensor.hpp"

namespace diffattack {

// How the output gap between the two oracles is scored.
enum class DivergenceMode {
  kReferenceLabelGap,  // |P1(ref) - P2(ref)|, ref = oracle 1's label on the seed
  kL1Distribution,     // ||dist1 - dist2||_1, full distributions required
  kRegressionGap,      // |value1 - value2|
};

inline const char* to_string(DivergenceMode m) {
  switch (m) {
    case DivergenceMode::kReferenceLabelGap: return "ref-gap";
    case DivergenceMode::kL1Distribution: return "l1-dist";
    case DivergenceMode::kRegressionGap: return "regression";
  }
  return "?";
}

inline DivergenceMode divergence_mode_from_string(const std::string& s) {
  if (s == "ref-gap") return DivergenceMode::kReferenceLabelGap;
  if (s == "l1-dist") return DivergenceMode::kL1Distribution;
  if (s == "regression") return DivergenceMode::kRegressionGap;
  throw ConfigError("unknown divergence mode '" + s + "'");
}

struct AttackConfig {
  std::uint64_t max_iterations = 10000;  // T, evaluations per oracle including the seed
  double c = 0.001;                      // weight of the L2 term in the fitness
  DivergenceMode mode = DivergenceMode::kReferenceLabelGap;
  double regression_threshold = 0.2;     // delta, regression success gap
  std::uint64_t rng_seed = 0;
  std::optional<double> epsilon;         // hard L2 cap on candidates, off by default

  void validate() const {
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (!(c >= 0.0) || !std::isfinite(c)) throw ConfigError("c must be a finite value >= 0");
    if (mode == DivergenceMode::kRegressionGap && !(regression_threshold > 0.0)) {
      throw ConfigError("regression threshold must be > 0");
    }
    if (epsilon && !(*epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  }
};

enum class AttackStatus { kSuccess, kBudgetExhausted };

inline const char* to_string(AttackStatus s) {
  return s == AttackStatus::kSuccess ? "SUCCESS" : "BUDGET_EXHAUSTED";
}

inline AttackStatus attack_status_from_string(const std::string& s) {
  if (s == "SUCCESS") return AttackStatus::kSuccess;
  if (s == "BUDGET_EXHAUSTED") return AttackStatus::kBudgetExhausted;
  throw ProtocolError("unknown attack status '" + s + "'");
}

struct AttackResult {
  AttackStatus status = AttackStatus::kBudgetExhausted;
  InputTensor adversarial;
  double divergence = 0.0;
  double fitness = 0.0;
  double l2 = 0.0;
  std::uint64_t queries_per_oracle = 0;
  std::uint64_t iterations = 0;
  std::chrono::nanoseconds elapsed{0};
  Prediction seed_prediction_1;
  Prediction seed_prediction_2;
  Prediction final_prediction_1;
  Prediction final_prediction_2;

  bool success() const noexcept { return status == AttackStatus::kSuccess; }

  // Equality ignoring wall-clock time.
  bool same_outcome(const AttackResult& o) const {
    AttackResult a = *this;
    a.elapsed = o.elapsed;
    return a == o;
  }

  friend bool operator==(const AttackResult&, const AttackResult&) = default;
};

// Copy of x with one uniformly chosen pixel set to a uniform integer in [0, 255].
inline InputTensor mutate(const InputTensor& x, Rng& rng) {
  const auto index = static_cast<std::size_t>(rng.below(x.size()));
  const auto value = static_cast<double>(rng.below(256));
  return x.with_pixel(index, value);
}

namespace detail {
inline double label_probability(const Prediction& p, int label) {
  // Under top-1 access the probability of a non-top label is unobservable; 0 is a lower bound.
  return p.probability_of(label).value_or(0.0);
}
}  // namespace detail

inline double divergence(const Prediction& p1, const Prediction& p2, DivergenceMode mode,
                         int reference_label) {
  switch (mode) {
    case DivergenceMode::kReferenceLabelGap:
      if (p1.task != TaskKind::kClassification || p2.task != TaskKind::kClassification) {
        throw ConfigError("ref-gap divergence needs classification predictions");
      }
      if (!p1.top_prob && !p1.distribution) {
        throw ConfigError("ref-gap divergence needs probabilities (label-only access given)");
      }
      if (!p2.top_prob && !p2.distribution) {
        throw ConfigError("ref-gap divergence needs probabilities (label-only access given)");
      }
      return std::abs(detail::label_probability(p1, reference_label) -
                      detail::label_probability(p2, reference_label));
    case DivergenceMode::kL1Distribution:
      if (!p1.distribution || !p2.distribution) {
        throw ConfigError("l1-dist divergence needs full distributions");
      }
      if (p1.distribution->size() != p2.distribution->size()) {
        throw ConfigError("l1-dist divergence: oracles disagree on the class count");
      }
      return l1_distance(*p1.distribution, *p2.distribution);
    case DivergenceMode::kRegressionGap:
      if (!p1.value || !p2.value) throw ConfigError("regression divergence needs scalar outputs");
      return std::abs(*p1.value - *p2.value);
  }
  throw ConfigError("unknown divergence mode");
}

// divergence - c * distance
inline double fitness_from_terms(double divergence_term, double distance_term, double c) {
  if (c == 0.0) return divergence_term;
  return divergence_term - c * distance_term;
}

inline double fitness(const InputTensor& x, const InputTensor& x_prime, const Prediction& p1,
                      const Prediction& p2, const AttackConfig& cfg, int reference_label) {
  const double div = divergence(p1, p2, cfg.mode, reference_label);
  return fitness_from_terms(div, l2_distance(x_prime, x), cfg.c);
}

inline bool is_success(const Prediction& p1, const Prediction& p2, const AttackConfig& cfg) {
  if (p1.task != p2.task) throw ConfigError("predictions come from different task kinds");
  if (p1.task == TaskKind::kClassification) return p1.top_label != p2.top_label;
  if (!p1.value || !p2.value) throw ConfigError("regression predictions without values");
  return std::abs(*p1.value - *p2.value) >= cfg.regression_threshold;
}

// Checks that the mode can be evaluated with what the two oracles expose.
inline void check_compatible(const Oracle& o1, const Oracle& o2, const AttackConfig& cfg) {
  cfg.validate();
  if (o1.task() != o2.task()) {
    throw ConfigError("oracles '" + o1.id() + "' and '" + o2.id() + "' solve different tasks");
  }
  if (o1.input_shape() != o2.input_shape()) {
    throw ConfigError("oracles '" + o1.id() + "' and '" + o2.id() + "' take different input shapes");
  }
  const bool regression = o1.task() == TaskKind::kRegression;
  switch (cfg.mode) {
    case DivergenceMode::kRegressionGap:
      if (!regression) throw ConfigError("regression mode needs regression oracles");
      break;
    case DivergenceMode::kL1Distribution:
      if (regression) throw ConfigError("l1-dist mode needs classification oracles");
      if (o1.access_level() != AccessLevel::kFullDistribution ||
          o2.access_level() != AccessLevel::kFullDistribution) {
        throw ConfigError("l1-dist mode needs full-distribution access on both oracles");
      }
      break;
    case DivergenceMode::kReferenceLabelGap:
      if (regression) throw ConfigError("ref-gap mode needs classification oracles");
      if (o1.access_level() == AccessLevel::kLabelOnly ||
          o2.access_level() == AccessLevel::kLabelOnly) {
        throw ConfigError("ref-gap mode needs probabilities; label-only access is not enough");
      }
      break;
  }
}

// Per-iteration trace for callers that want to watch the search.
struct StepEvent {
  std::uint64_t iteration = 0;  // 0 is the seed evaluation
  bool queried = false;         // false when the epsilon cap rejected the candidate
  double score = 0.0;           // candidate fitness, valid when queried
  bool accepted = false;        // became the retained solution
  bool success = false;         // oracles disagree; the run ends here
  double incumbent_score = 0.0; // retained solution's fitness after this step
  double candidate_l2 = 0.0;
};

using StepObserver = std::function<void(const StepEvent&)>;

// Hill climbing for a difference-inducing input: starting from x, repeatedly
// re-randomise one pixel of the retained solution, keep the candidate only if
// its fitness strictly improves, and stop as soon as the two oracles disagree
// or the budget of max_iterations evaluations runs out. Both oracle counters
// are reset at the start.
inline AttackResult hill_climb(const InputTensor& x, Oracle& o1, Oracle& o2,
                               const AttackConfig& cfg, const StepObserver& observe = {}) {
  check_compatible(o1, o2, cfg);
  if (x.shape() != o1.input_shape()) {
    throw ConfigError("seed shape " + x.shape().to_string() + " does not match oracle input " +
                      o1.input_shape().to_string());
  }
  if (x.empty()) throw ConfigError("empty seed input");

  const auto start = std::chrono::steady_clock::now();
  o1.reset_query_count();
  o2.reset_query_count();
  Rng rng(cfg.rng_seed);

  std::uint64_t iteration = 0;
  auto query_both = [&](const InputTensor& in) {
    try {
      return std::pair{o1.query(in), o2.query(in)};
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw AttackError(iteration, e.what());
    }
  };

  AttackResult result;
  auto [seed1, seed2] = query_both(x);
  result.seed_prediction_1 = seed1;
  result.seed_prediction_2 = seed2;
  const int reference_label = seed1.top_label;

  auto finish = [&](AttackStatus status, const InputTensor& sol, const Prediction& p1,
                    const Prediction& p2, double score) {
    result.status = status;
    result.adversarial = sol;
    result.divergence = divergence(p1, p2, cfg.mode, reference_label);
    result.fitness = score;
    result.l2 = l2_distance(sol, x);
    result.final_prediction_1 = p1;
    result.final_prediction_2 = p2;
    result.queries_per_oracle = o1.query_count();
    result.iterations = iteration;
    result.elapsed = std::chrono::duration_cast<std::chrono::nanoseconds>(
        std::chrono::steady_clock::now() - start);
    return result;
  };

  double score = fitness(x, x, seed1, seed2, cfg, reference_label);
  if (observe) observe({0, true, score, true, is_success(seed1, seed2, cfg), score, 0.0});
  if (is_success(seed1, seed2, cfg)) {
    return finish(AttackStatus::kSuccess, x, seed1, seed2, score);
  }

  InputTensor sol = x;
  Prediction sol1 = seed1;
  Prediction sol2 = seed2;
  for (iteration = 1; iteration < cfg.max_iterations; ++iteration) {
    InputTensor cand = mutate(sol, rng);
    const double cand_l2 = l2_distance(cand, x);
    if (cfg.epsilon && cand_l2 > *cfg.epsilon) {
      if (observe) observe({iteration, false, 0.0, false, false, score, cand_l2});
      continue;
    }
    auto [p1, p2] = query_both(cand);
    const double new_score =
        fitness_from_terms(divergence(p1, p2, cfg.mode, reference_label), cand_l2, cfg.c);
    if (is_success(p1, p2, cfg)) {
      if (observe) observe({iteration, true, new_score, false, true, score, cand_l2});
      return finish(AttackStatus::kSuccess, cand, p1, p2, new_score);
    }
    const bool accepted = new_score > score;
    if (accepted) {
      sol = std::move(cand);
      sol1 = std::move(p1);
      sol2 = std::move(p2);
      score = new_score;
    }
    if (observe) observe({iteration, true, new_score, accepted, false, score, cand_l2});
  }
  iteration = cfg.max_iterations - 1;
  return finish(AttackStatus::kBudgetExhausted, sol, sol1, sol2, score);
}

}  // namespace diffattack
