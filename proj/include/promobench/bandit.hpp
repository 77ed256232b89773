#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "promobench/models.hpp"

namespace promobench::bandit {

enum class Algorithm { kNone, kTs, kUcb };

std::string algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& s);

struct BanditConfig {
  Algorithm algorithm = Algorithm::kNone;
  int n_mc_passes = 100;    // ucb only
  int confidence_rank = 5;  // ucb: k-th largest of n_mc_passes samples
  double dropout_p = 0.3;   // inference-time multi-head dropout probability
  uint64_t seed = 0;
  std::string model_name = "wide_deep";

  void validate() const;
};

// --- mask substream layout ---
// Selection for dataset row r uses seed derive_seed(config.seed, r); MC pass t
// within a selection uses derive_seed(selection_seed, t). Passes are therefore
// independent, and parallel evaluation reproduces the serial mask sequence.

// Thompson sampling: one stochastic pass (mc_inference), argmax of the sampled
// probability vector, ties to the lowest index. Requires a multi-head model.
int32_t ts_select(const models::Model& m, num::Workspace& ws, const models::ModelInput& input,
                  rng::Xoshiro256pp& rng);

// k-th largest of a sample set (k = 1 is the maximum).
double kth_largest(std::span<const double> values, int k);

// Argmax of per-action rank-k upper bounds over sampled values; ties to the
// lowest action index. samples_per_action[a] holds one value per MC pass.
int select_by_upper_bound(const std::vector<std::vector<double>>& samples_per_action, int rank);

// UCB: n_mc_passes stochastic passes re-run from the multi-head dropout node
// onward against a cached prefix activation; per action the upper bound is the
// confidence_rank-th largest sampled probability.
int32_t ucb_select(const models::Model& m, num::Workspace& ws, const models::ModelInput& input,
                   const BanditConfig& config, uint64_t selection_seed);

struct PolicyEval {
  double accuracy = 0;
  std::vector<int64_t> selection_histogram;  // slot i = times offer i+1 chosen
  int64_t n = 0;
};

// Fraction of rows where the selected offer equals the stored optimal offer.
// Algorithm kNone uses the greedy argmax path. The model's multi-head dropout
// probability is set to config.dropout_p for the duration of the evaluation.
PolicyEval evaluate_policy(models::Model& m, const synth::Dataset& ds,
                           const std::vector<int64_t>& idx, const BanditConfig& config,
                           int n_threads = 0);

}  // namespace promobench::bandit
