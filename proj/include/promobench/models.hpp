#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "promobench/graph.hpp"
#include "promobench/synthgen.hpp"

namespace promobench::models {

enum class ModelKind { kWide, kDeep, kWideDeep };

std::string kind_name(ModelKind k);
ModelKind kind_from_name(const std::string& s);

// Architecture descriptor. n_customers / n_campaigns / n_offers come from the
// dataset recipe; the rest defaults to the full-scale study settings.
struct ModelSpec {
  std::string name = "model";
  ModelKind kind = ModelKind::kDeep;
  int deep_input_variant = 2;  // 1: embeddings, 2: features, 3: both, 4: features+hidden
  std::vector<int64_t> hidden_widths = {512, 256, 128};
  int64_t user_embed_dim = 16;
  int64_t campaign_embed_dim = 7;
  int64_t n_offers = 10;
  int64_t n_customers = 0;
  int64_t n_campaigns = 0;
  int64_t multihead_width = 128;      // wide&deep only
  double multihead_dropout_p = 0.3;   // wide&deep only

  void validate() const;
};

// One prediction request. hidden is consumed only by deep variant 4.
struct ModelInput {
  int64_t user_id = 0;
  int64_t campaign_id = 0;
  std::array<double, 4> known{};   // cust_f1, cust_f2, camp_f1, camp_f2
  std::array<double, 2> hidden{};  // cust_hidden, camp_hidden
};

ModelInput to_model_input(const synth::Sample& s);

// Flattened one-hot index for the wide path: user_id * n_campaigns + campaign_id.
// Bijective over the id grid; throws DataError on negative or out-of-range ids.
int64_t cross_index(int64_t user_id, int64_t campaign_id, int64_t n_campaigns);

// A built assembly: the graph plus the node ids the harness and bandit bind to.
struct Model {
  ModelSpec spec;
  num::Graph graph;
  int in_known = -1;
  int in_hidden = -1;
  int in_user = -1;
  int in_camp = -1;
  int in_cross = -1;
  int in_labels = -1;
  int logits = -1;
  int loss = -1;
  int mc_dropout = -1;  // -1 when the assembly has no multi-head dropout

  bool has_multihead() const { return mc_dropout >= 0; }
};

// Assembles the graph for the spec. Parameters are initialized in graph build
// order from init_rng (dense: Glorot uniform, embeddings: Normal(0, 0.05)).
Model build(const ModelSpec& spec, rng::Xoshiro256pp& init_rng);

// Closed-form trainable-parameter count for a spec; the built graph must match.
int64_t expected_parameter_count(const ModelSpec& spec);
int64_t parameter_count(const Model& m);

// Overrides the inference-time probability of the multi-head dropout node.
void set_mc_dropout_p(Model& m, double p);

// Fills the model's input nodes for a batch; labels (0-based classes) are
// bound only when bind_labels is true.
void bind_batch(const Model& m, num::Workspace& ws, std::span<const ModelInput> batch,
                std::span<const int32_t> offers_1based = {});

// Softmax probabilities for a batch. kOff is deterministic; kMcInference
// activates only the multi-head dropout. rng required for stochastic modes.
num::Tensor predict_proba(const Model& m, num::Workspace& ws, std::span<const ModelInput> batch,
                          num::DropoutMode mode, rng::Xoshiro256pp* rng = nullptr);

// Greedy argmax offer (1-based); ties break to the lowest offer index.
int32_t predict_offer(const Model& m, num::Workspace& ws, const ModelInput& input);

}  // namespace promobench::models
