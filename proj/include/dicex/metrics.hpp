#pragma once

// Post-hoc quality metrics of a counterfactual set.

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "dicex/cfgen.hpp"
#include "dicex/data.hpp"
#include "dicex/model.hpp"

namespace dicex {

inline constexpr double kDefaultSparsityTol = 1e-3;
inline constexpr int kDefaultRobustnessTrials = 10;

struct MetricsReport {
  double validity = 0.0;
  double proximity = 0.0;
  double sparsity = 0.0;
  double diversity = 0.0;
  double robustness = 0.0;  // mean Dice-Sorensen coefficient, higher is better
  double generation_time = 0.0;
};

inline double validity(const Matrix& cfs, const Predictor& model, int desired) {
  if (cfs.rows() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < cfs.rows(); ++i) hits += predict_class(model, cfs.row(i)) == desired ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(cfs.rows());
}

inline double validity(const CounterfactualSet& set, const Predictor& model, int desired) {
  return validity(set.cfs, model, desired);
}

// Seed of perturbation trial t; trial 0 uses `seed` itself so a single trial
// reproduces robustness_loss(cfs, seed, cfg, Hard).
inline std::uint64_t trial_seed(std::uint64_t seed, int trial) {
  return seed + static_cast<std::uint64_t>(trial) * 0x9E3779B97F4A7C15ULL;
}

// Mean over trials and candidates of Dice(bin(c), bin(clamp(c + delta))).
inline double robustness_eval(const Matrix& cfs, const CfConfig& cfg, int trials, std::uint64_t seed) {
  require(trials >= 1, ErrorCode::InvalidArgument, "trials must be >= 1");
  if (cfs.rows() == 0) return 1.0;
  double sum = 0.0;
  for (int t = 0; t < trials; ++t) sum += 1.0 - robustness_loss(cfs, trial_seed(seed, t), cfg, RobustnessMode::Hard);
  return sum / static_cast<double>(trials);
}

// Diversity is reported without jitter.
inline MetricsReport evaluate(const CounterfactualSet& set, const Predictor& model, const Layout& layout,
                              const CfConfig& cfg, int trials, std::uint64_t seed,
                              double sparsity_tol = kDefaultSparsityTol) {
  MetricsReport r;
  r.validity = validity(set.cfs, model, set.desired_class);
  r.proximity = proximity_loss(set.cfs, set.origin, cfg.p_norm, cfg.proximity_weights);
  r.sparsity = sparsity(set.cfs, set.origin, layout, sparsity_tol);
  r.diversity = diversity_score(set.cfs, cfg.diversity_distance, 0.0);
  r.robustness = robustness_eval(set.cfs, cfg, trials, seed);
  return r;
}

inline nlohmann::json to_json(const MetricsReport& r, bool with_time = true) {
  nlohmann::json j{{"validity", r.validity},
                   {"proximity", r.proximity},
                   {"sparsity", r.sparsity},
                   {"diversity", r.diversity},
                   {"robustness", r.robustness}};
  if (with_time) j["generation_time"] = r.generation_time;
  return j;
}

}  // namespace dicex
