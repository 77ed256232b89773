#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "promobench/bandit.hpp"
#include "promobench/models.hpp"
#include "promobench/synthgen.hpp"

namespace promobench::harness {

struct SplitSpec {
  enum class Mode { kRandom, kSequential };
  Mode mode = Mode::kRandom;
  std::array<double, 3> fractions = {0.6, 0.2, 0.2};  // random mode
  uint64_t seed = 0;

  void validate() const;
};

std::string split_mode_name(SplitSpec::Mode m);
SplitSpec::Mode split_mode_from_name(const std::string& s);

struct Splits {
  std::vector<int64_t> train, valid, test;
};

// Disjoint, exhaustive index sets. Random mode permutes all indices under the
// split seed and cuts by the fractions. Sequential mode keeps the last 20% of
// positions as the test set (in order) and permutes only the first-80% block
// before cutting it 3:1 into train:valid.
Splits split(int64_t n_rows, const SplitSpec& spec);

struct TrainSpec {
  double lr = 1e-3;
  int64_t batch_size = 1024;
  int max_epochs = 200;
  int patience = 5;  // config default: 5 for wide/deep, 10 for wide&deep
  bool restore_best = true;
  uint64_t seed = 0;

  void validate() const;
};

// Monitor bookkeeping for early stopping: stop after `patience` consecutive
// epochs without a strict improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // Feeds one epoch's monitored value; returns true when training should stop.
  bool update(double value);

  bool last_improved() const { return last_improved_; }
  double best() const { return best_; }
  int best_index() const { return best_index_; }  // 0-based epoch of the best value

 private:
  int patience_;
  int fails_ = 0;
  int count_ = 0;
  int best_index_ = -1;
  double best_ = 0;
  bool has_best_ = false;
  bool last_improved_ = false;
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double train_loss = 0, train_acc = 0;
  double valid_loss = 0, valid_acc = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int epochs_trained = 0;
  int best_epoch = 0;  // 1-based
  double best_valid_loss = 0;
  double wall_seconds = 0;
};

// Minibatch Adam training with early stopping on validation loss. Minibatch
// order for epoch e (1-based) comes from a generator seeded with
// spec.seed ^ (e-1); the multi-head dropout mask stream is derived from
// derive_seed(spec.seed, kDropoutStream). Restores best-epoch weights when
// spec.restore_best is set. Throws TrainError on a non-finite loss with the
// model left at its last finite state.
TrainResult train(models::Model& m, const synth::Dataset& ds, const Splits& splits,
                  const TrainSpec& spec);

inline constexpr uint64_t kDropoutStream = 0xD0;

struct SplitEval {
  double accuracy = 0;
  double within_one = 0;  // fraction with |predicted - true| <= 1
  std::vector<int64_t> confusion;  // row-major n_offers x n_offers, true x predicted
  int64_t n = 0;
};

// Greedy evaluation over the given rows.
SplitEval evaluate(const models::Model& m, const synth::Dataset& ds,
                   const std::vector<int64_t>& idx);

// Same tally driven by an arbitrary per-row predictor (test stubs, baselines).
SplitEval evaluate_with(const synth::Dataset& ds, const std::vector<int64_t>& idx,
                        int64_t n_offers, const std::function<int32_t(const synth::Sample&)>& pick);

struct EvalReport {
  std::string model_name;
  std::string split_mode;
  SplitEval train, valid, test;
  int epochs_trained = 0;
  double wall_seconds = 0;
};

}  // namespace promobench::harness
