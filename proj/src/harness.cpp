#include "promobench/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace promobench::harness {

std::string split_mode_name(SplitSpec::Mode m) {
  return m == SplitSpec::Mode::kRandom ? "random" : "sequential";
}

SplitSpec::Mode split_mode_from_name(const std::string& s) {
  if (s == "random") return SplitSpec::Mode::kRandom;
  if (s == "sequential") return SplitSpec::Mode::kSequential;
  throw ConfigError("unknown split mode '" + s + "' (expected random | sequential)");
}

void SplitSpec::validate() const {
  std::vector<std::string> v;
  const double sum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(sum - 1.0) > 1e-9) {
    v.push_back("split.fractions: must sum to 1, got " + std::to_string(sum));
  }
  for (double f : fractions) {
    if (!(f > 0.0)) v.push_back("split.fractions: every fraction must be > 0");
  }
  if (!v.empty()) throw ConfigError(std::move(v));
}

namespace {

// Fisher-Yates under our generator; identical order on every platform.
void shuffle_indices(std::vector<int64_t>& idx, rng::Xoshiro256pp& rng) {
  for (int64_t i = static_cast<int64_t>(idx.size()) - 1; i > 0; --i) {
    const auto j = static_cast<int64_t>(rng.next() % static_cast<uint64_t>(i + 1));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
}

}  // namespace

Splits split(int64_t n_rows, const SplitSpec& spec) {
  spec.validate();
  if (n_rows <= 0) throw DataError("split: dataset is empty");
  Splits out;
  rng::Xoshiro256pp rng(spec.seed);

  if (spec.mode == SplitSpec::Mode::kRandom) {
    std::vector<int64_t> idx(static_cast<size_t>(n_rows));
    std::iota(idx.begin(), idx.end(), 0);
    shuffle_indices(idx, rng);
    const auto n_train = static_cast<int64_t>(std::floor(spec.fractions[0] * static_cast<double>(n_rows)));
    const auto n_valid = static_cast<int64_t>(std::floor(spec.fractions[1] * static_cast<double>(n_rows)));
    const int64_t n_test = n_rows - n_train - n_valid;
    if (n_train <= 0 || n_valid <= 0 || n_test <= 0) {
      throw DataError("split: a split would be empty for " + std::to_string(n_rows) + " rows");
    }
    out.train.assign(idx.begin(), idx.begin() + n_train);
    out.valid.assign(idx.begin() + n_train, idx.begin() + n_train + n_valid);
    out.test.assign(idx.begin() + n_train + n_valid, idx.end());
    return out;
  }

  // Sequential: last 20% of positions is the test set, kept in order; the
  // first 80% block is permuted and split 3:1 into train:valid.
  const auto n_head = static_cast<int64_t>(std::floor(0.8 * static_cast<double>(n_rows)));
  const int64_t n_test = n_rows - n_head;
  std::vector<int64_t> head(static_cast<size_t>(n_head));
  std::iota(head.begin(), head.end(), 0);
  shuffle_indices(head, rng);
  const int64_t n_train = (n_head * 3) / 4;
  const int64_t n_valid = n_head - n_train;
  if (n_train <= 0 || n_valid <= 0 || n_test <= 0) {
    throw DataError("split: a split would be empty for " + std::to_string(n_rows) + " rows");
  }
  out.train.assign(head.begin(), head.begin() + n_train);
  out.valid.assign(head.begin() + n_train, head.end());
  out.test.resize(static_cast<size_t>(n_test));
  std::iota(out.test.begin(), out.test.end(), n_head);
  return out;
}

void TrainSpec::validate() const {
  std::vector<std::string> v;
  if (!(lr > 0.0)) v.push_back("train.lr: must be > 0");
  if (batch_size <= 0) v.push_back("train.batch_size: must be positive");
  if (max_epochs <= 0) v.push_back("train.max_epochs: must be positive");
  if (patience <= 0) v.push_back("train.patience: must be positive");
  if (patience >= max_epochs) {
    v.push_back("train.patience: must be smaller than max_epochs (" + std::to_string(patience) +
                " vs " + std::to_string(max_epochs) + ")");
  }
  if (!v.empty()) throw ConfigError(std::move(v));
}

bool EarlyStopper::update(double value) {
  const int epoch = count_++;
  if (!has_best_ || value < best_) {
    best_ = value;
    best_index_ = epoch;
    has_best_ = true;
    fails_ = 0;
    last_improved_ = true;
    return false;
  }
  last_improved_ = false;
  fails_ += 1;
  return fails_ >= patience_;
}

namespace {

struct EvalPassResult {
  double loss = 0;
  int64_t hits = 0;
  int64_t n = 0;
};

// Off-mode loss/accuracy over an index list, batched.
EvalPassResult eval_pass(models::Model& m, const synth::Dataset& ds,
                         const std::vector<int64_t>& idx, int64_t batch_size,
                         num::Workspace& ws) {
  EvalPassResult r;
  r.n = static_cast<int64_t>(idx.size());
  std::vector<models::ModelInput> inputs;
  std::vector<int32_t> offers;
  double loss_sum = 0.0;
  for (int64_t lo = 0; lo < r.n; lo += batch_size) {
    const int64_t hi = std::min(r.n, lo + batch_size);
    inputs.clear();
    offers.clear();
    for (int64_t i = lo; i < hi; ++i) {
      const synth::Sample& s = ds.rows[static_cast<size_t>(idx[static_cast<size_t>(i)])];
      inputs.push_back(models::to_model_input(s));
      offers.push_back(s.offer);
    }
    bind_batch(m, ws, inputs, offers);
    forward(m.graph, ws, num::DropoutMode::kOff);
    loss_sum += ws.loss * static_cast<double>(hi - lo);
    const num::Tensor& probs = ws.out[static_cast<size_t>(m.loss)];
    for (int64_t b = 0; b < hi - lo; ++b) {
      if (num::argmax_row(probs, b) + 1 == offers[static_cast<size_t>(b)]) ++r.hits;
    }
  }
  r.loss = loss_sum / static_cast<double>(r.n);
  return r;
}

std::vector<num::Tensor> snapshot_params(const models::Model& m) {
  std::vector<num::Tensor> snap;
  snap.reserve(m.graph.params.size());
  for (const auto& p : m.graph.params) snap.push_back(p.value);
  return snap;
}

void restore_params(models::Model& m, const std::vector<num::Tensor>& snap) {
  for (size_t i = 0; i < snap.size(); ++i) m.graph.params[i].value = snap[i];
}

}  // namespace

TrainResult train(models::Model& m, const synth::Dataset& ds, const Splits& splits,
                  const TrainSpec& spec) {
  spec.validate();
  if (splits.train.empty()) throw DataError("train: empty training split");
  if (splits.valid.empty()) throw DataError("train: empty validation split");

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  EarlyStopper stopper(spec.patience);
  rng::Xoshiro256pp dropout_rng(rng::derive_seed(spec.seed, kDropoutStream));

  std::vector<int64_t> order = splits.train;
  std::vector<models::ModelInput> inputs;
  std::vector<int32_t> offers;
  num::Workspace ws;
  num::Workspace eval_ws;
  std::vector<num::Tensor> best_snapshot;
  const int64_t n_train = static_cast<int64_t>(order.size());

  for (int epoch = 1; epoch <= spec.max_epochs; ++epoch) {
    // per-epoch minibatch order: generator seeded with seed XOR (epoch-1)
    rng::Xoshiro256pp shuffle_rng(spec.seed ^ static_cast<uint64_t>(epoch - 1));
    shuffle_indices(order, shuffle_rng);

    double loss_sum = 0.0;
    int64_t hits = 0;
    for (int64_t lo = 0; lo < n_train; lo += spec.batch_size) {
      const int64_t hi = std::min(n_train, lo + spec.batch_size);
      inputs.clear();
      offers.clear();
      for (int64_t i = lo; i < hi; ++i) {
        const synth::Sample& s = ds.rows[static_cast<size_t>(order[static_cast<size_t>(i)])];
        inputs.push_back(models::to_model_input(s));
        offers.push_back(s.offer);
      }
      bind_batch(m, ws, inputs, offers);
      zero_grad(m.graph);
      forward(m.graph, ws, num::DropoutMode::kTrain, &dropout_rng);
      if (!std::isfinite(ws.loss)) {
        throw TrainError("non-finite training loss in '" + m.spec.name + "' at epoch " +
                         std::to_string(epoch));
      }
      loss_sum += ws.loss * static_cast<double>(hi - lo);
      const num::Tensor& probs = ws.out[static_cast<size_t>(m.loss)];
      for (int64_t b = 0; b < hi - lo; ++b) {
        if (num::argmax_row(probs, b) + 1 == offers[static_cast<size_t>(b)]) ++hits;
      }
      backward(m.graph, ws);
      adam_step(m.graph, spec.lr);
    }

    const EvalPassResult valid = eval_pass(m, ds, splits.valid, spec.batch_size, eval_ws);
    if (!std::isfinite(valid.loss)) {
      throw TrainError("non-finite validation loss in '" + m.spec.name + "' at epoch " +
                       std::to_string(epoch));
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(n_train);
    log.train_acc = static_cast<double>(hits) / static_cast<double>(n_train);
    log.valid_loss = valid.loss;
    log.valid_acc = static_cast<double>(valid.hits) / static_cast<double>(valid.n);
    result.log.push_back(log);
    result.epochs_trained = epoch;

    const bool stop = stopper.update(valid.loss);
    if (stopper.last_improved() && spec.restore_best) best_snapshot = snapshot_params(m);
    if (stop) break;
  }

  if (spec.restore_best && !best_snapshot.empty()) restore_params(m, best_snapshot);
  result.best_epoch = stopper.best_index() + 1;
  result.best_valid_loss = stopper.best();
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

SplitEval evaluate_with(const synth::Dataset& ds, const std::vector<int64_t>& idx,
                        int64_t n_offers,
                        const std::function<int32_t(const synth::Sample&)>& pick) {
  if (idx.empty()) throw DataError("evaluate: empty index list");
  SplitEval ev;
  ev.n = static_cast<int64_t>(idx.size());
  ev.confusion.assign(static_cast<size_t>(n_offers * n_offers), 0);
  int64_t hits = 0, within = 0;
  for (int64_t i : idx) {
    const synth::Sample& s = ds.rows[static_cast<size_t>(i)];
    const int32_t predicted = pick(s);
    if (predicted < 1 || predicted > n_offers) {
      throw DataError("evaluate: predicted offer " + std::to_string(predicted) + " out of range");
    }
    ev.confusion[static_cast<size_t>((s.offer - 1) * n_offers + (predicted - 1))] += 1;
    if (predicted == s.offer) ++hits;
    if (std::abs(predicted - s.offer) <= 1) ++within;
  }
  ev.accuracy = static_cast<double>(hits) / static_cast<double>(ev.n);
  ev.within_one = static_cast<double>(within) / static_cast<double>(ev.n);
  return ev;
}

SplitEval evaluate(const models::Model& m, const synth::Dataset& ds,
                   const std::vector<int64_t>& idx) {
  if (idx.empty()) throw DataError("evaluate: empty index list");
  const int64_t n_offers = m.spec.n_offers;
  const auto n = static_cast<int64_t>(idx.size());
  std::vector<int32_t> picks(static_cast<size_t>(n), 0);

  // batched greedy predictions; chunks are independent so results do not
  // depend on the thread count
  constexpr int64_t kEvalBatch = 2048;
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    num::Workspace ws;
    std::vector<models::ModelInput> inputs;
    for (int64_t blo = lo; blo < hi; blo += kEvalBatch) {
      const int64_t bhi = std::min(hi, blo + kEvalBatch);
      inputs.clear();
      for (int64_t i = blo; i < bhi; ++i) {
        inputs.push_back(
            models::to_model_input(ds.rows[static_cast<size_t>(idx[static_cast<size_t>(i)])]));
      }
      const num::Tensor probs = predict_proba(m, ws, inputs, num::DropoutMode::kOff);
      for (int64_t b = 0; b < bhi - blo; ++b) {
        picks[static_cast<size_t>(blo + b)] = static_cast<int32_t>(num::argmax_row(probs, b)) + 1;
      }
    }
  });

  int64_t cursor = 0;
  return evaluate_with(ds, idx, n_offers, [&](const synth::Sample&) {
    return picks[static_cast<size_t>(cursor++)];
  });
}

}  // namespace promobench::harness
