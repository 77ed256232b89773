#include "promobench/bandit.hpp"

#include <algorithm>
#include <cmath>

namespace promobench::bandit {

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kNone: return "none";
    case Algorithm::kTs: return "ts";
    case Algorithm::kUcb: return "ucb";
  }
  return "?";
}

Algorithm algorithm_from_name(const std::string& s) {
  if (s == "none") return Algorithm::kNone;
  if (s == "ts") return Algorithm::kTs;
  if (s == "ucb") return Algorithm::kUcb;
  throw ConfigError("unknown bandit algorithm '" + s + "' (expected none | ts | ucb)");
}

void BanditConfig::validate() const {
  std::vector<std::string> v;
  if (n_mc_passes <= 0) v.push_back("bandit: n_mc_passes must be positive");
  if (confidence_rank <= 0) v.push_back("bandit: confidence_rank must be positive");
  if (confidence_rank > n_mc_passes) {
    v.push_back("bandit: confidence_rank " + std::to_string(confidence_rank) +
                " exceeds n_mc_passes " + std::to_string(n_mc_passes));
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    v.push_back("bandit: dropout_p must lie in [0, 1)");
  }
  if (!v.empty()) throw ConfigError(std::move(v));
}

namespace {

void require_multihead(const models::Model& m) {
  if (!m.has_multihead()) {
    throw CapabilityError("model '" + m.spec.name +
                          "' has no multi-head dropout layer; TS/UCB selection needs one");
  }
}

int32_t argmax_offer(const num::Tensor& probs) {
  return static_cast<int32_t>(num::argmax_row(probs, 0)) + 1;
}

}  // namespace

int32_t ts_select(const models::Model& m, num::Workspace& ws, const models::ModelInput& input,
                  rng::Xoshiro256pp& rng) {
  require_multihead(m);
  const num::Tensor probs =
      predict_proba(m, ws, std::span(&input, 1), num::DropoutMode::kMcInference, &rng);
  return argmax_offer(probs);
}

double kth_largest(std::span<const double> values, int k) {
  if (k <= 0 || k > static_cast<int>(values.size())) {
    throw UsageError("kth_largest: rank " + std::to_string(k) + " outside sample count " +
                     std::to_string(values.size()));
  }
  std::vector<double> tmp(values.begin(), values.end());
  auto nth = tmp.begin() + (k - 1);
  std::nth_element(tmp.begin(), nth, tmp.end(), std::greater<double>());
  return *nth;
}

int select_by_upper_bound(const std::vector<std::vector<double>>& samples_per_action, int rank) {
  if (samples_per_action.empty()) throw UsageError("select_by_upper_bound: no actions");
  int best = 0;
  double best_bound = kth_largest(samples_per_action[0], rank);
  for (int a = 1; a < static_cast<int>(samples_per_action.size()); ++a) {
    const double bound = kth_largest(samples_per_action[static_cast<size_t>(a)], rank);
    if (bound > best_bound) {
      best = a;
      best_bound = bound;
    }
  }
  return best;
}

int32_t ucb_select(const models::Model& m, num::Workspace& ws, const models::ModelInput& input,
                   const BanditConfig& config, uint64_t selection_seed) {
  require_multihead(m);
  config.validate();

  // One deterministic pass up to the dropout node caches the prefix
  // activations; every MC pass re-runs only the dropout node onward.
  bind_batch(m, ws, std::span(&input, 1));
  if (m.mc_dropout > 0) {
    forward(m.graph, ws, num::DropoutMode::kOff, nullptr, 0, m.mc_dropout - 1);
  }

  const auto n_actions = static_cast<size_t>(m.spec.n_offers);
  std::vector<std::vector<double>> samples(n_actions);
  for (auto& s : samples) s.reserve(static_cast<size_t>(config.n_mc_passes));

  num::Tensor probs;
  for (int t = 0; t < config.n_mc_passes; ++t) {
    rng::Xoshiro256pp pass_rng(rng::derive_seed(selection_seed, static_cast<uint64_t>(t)));
    forward(m.graph, ws, num::DropoutMode::kMcInference, &pass_rng, m.mc_dropout, m.logits);
    softmax_rows(ws.out[static_cast<size_t>(m.logits)], probs);
    const double* p = probs.data();
    for (size_t a = 0; a < n_actions; ++a) samples[a].push_back(p[a]);
  }
  return static_cast<int32_t>(select_by_upper_bound(samples, config.confidence_rank)) + 1;
}

PolicyEval evaluate_policy(models::Model& m, const synth::Dataset& ds,
                           const std::vector<int64_t>& idx, const BanditConfig& config,
                           int n_threads) {
  config.validate();
  if (idx.empty()) throw DataError("evaluate_policy: empty split");
  if (config.algorithm != Algorithm::kNone) {
    require_multihead(m);
    set_mc_dropout_p(m, config.dropout_p);
  }

  const auto n = static_cast<int64_t>(idx.size());
  std::vector<int32_t> picks(static_cast<size_t>(n), 0);
  const models::Model& cm = m;

  parallel_for(
      n,
      [&](int64_t lo, int64_t hi) {
        num::Workspace ws;
        for (int64_t i = lo; i < hi; ++i) {
          const synth::Sample& row = ds.rows[static_cast<size_t>(idx[static_cast<size_t>(i)])];
          const models::ModelInput input = models::to_model_input(row);
          int32_t pick = 0;
          switch (config.algorithm) {
            case Algorithm::kNone:
              pick = predict_offer(cm, ws, input);
              break;
            case Algorithm::kTs: {
              // pass 0 of the row's selection stream, matching ucb's discipline
              const uint64_t sel = rng::derive_seed(config.seed, static_cast<uint64_t>(row.index));
              rng::Xoshiro256pp rng(rng::derive_seed(sel, 0));
              pick = ts_select(cm, ws, input, rng);
              break;
            }
            case Algorithm::kUcb: {
              const uint64_t sel = rng::derive_seed(config.seed, static_cast<uint64_t>(row.index));
              pick = ucb_select(cm, ws, input, config, sel);
              break;
            }
          }
          picks[static_cast<size_t>(i)] = pick;
        }
      },
      n_threads);

  PolicyEval ev;
  ev.n = n;
  ev.selection_histogram.assign(static_cast<size_t>(ds.spec.n_offers), 0);
  int64_t hits = 0;
  for (int64_t i = 0; i < n; ++i) {
    const synth::Sample& row = ds.rows[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    const int32_t pick = picks[static_cast<size_t>(i)];
    if (pick == row.offer) ++hits;
    ev.selection_histogram[static_cast<size_t>(pick - 1)] += 1;
  }
  ev.accuracy = static_cast<double>(hits) / static_cast<double>(n);
  return ev;
}

}  // namespace promobench::bandit
