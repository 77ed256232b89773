#include "promobench/models.hpp"

#include <algorithm>

namespace promobench::models {

std::string kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kWide: return "wide";
    case ModelKind::kDeep: return "deep";
    case ModelKind::kWideDeep: return "wide_deep";
  }
  return "?";
}

ModelKind kind_from_name(const std::string& s) {
  if (s == "wide") return ModelKind::kWide;
  if (s == "deep") return ModelKind::kDeep;
  if (s == "wide_deep") return ModelKind::kWideDeep;
  throw ConfigError("unknown model kind '" + s + "' (expected wide | deep | wide_deep)");
}

void ModelSpec::validate() const {
  std::vector<std::string> v;
  if (n_customers <= 0) v.push_back(name + ": n_customers must be positive");
  if (n_campaigns <= 0) v.push_back(name + ": n_campaigns must be positive");
  if (n_offers <= 0) v.push_back(name + ": n_offers must be positive");
  if (kind != ModelKind::kWide) {
    if (hidden_widths.empty()) v.push_back(name + ": hidden_widths must be nonempty");
    for (int64_t w : hidden_widths) {
      if (w <= 0) v.push_back(name + ": hidden width must be positive");
    }
  }
  if (kind == ModelKind::kDeep) {
    if (deep_input_variant < 1 || deep_input_variant > 4) {
      v.push_back(name + ": deep_input_variant must be in 1..4");
    }
    if ((deep_input_variant == 1 || deep_input_variant == 3) &&
        (user_embed_dim < 1 || campaign_embed_dim < 1)) {
      v.push_back(name + ": embedding dims must be >= 1");
    }
  }
  if (kind == ModelKind::kWideDeep) {
    if (multihead_width <= 0) v.push_back(name + ": multihead_width must be positive");
    if (!(multihead_dropout_p >= 0.0 && multihead_dropout_p < 1.0)) {
      v.push_back(name + ": multihead_dropout_p must lie in [0, 1)");
    }
  }
  if (!v.empty()) throw ConfigError(std::move(v));
}

ModelInput to_model_input(const synth::Sample& s) {
  ModelInput in;
  in.user_id = s.user_id;
  in.campaign_id = s.campaign_id;
  in.known = {s.cust_f1, s.cust_f2, s.camp_f1, s.camp_f2};
  in.hidden = {s.cust_hidden, s.camp_hidden};
  return in;
}

int64_t cross_index(int64_t user_id, int64_t campaign_id, int64_t n_campaigns) {
  if (user_id < 0 || campaign_id < 0 || campaign_id >= n_campaigns) {
    throw DataError("cross_index: id pair (" + std::to_string(user_id) + ", " +
                    std::to_string(campaign_id) + ") out of range for " +
                    std::to_string(n_campaigns) + " campaigns");
  }
  return user_id * n_campaigns + campaign_id;
}

namespace {

// Shared ReLU stack; returns the node id of the last hidden activation.
int build_hidden_stack(num::Graph& g, int input, int64_t input_width,
                       const std::vector<int64_t>& widths, rng::Xoshiro256pp& rng) {
  int x = input;
  int64_t in_w = input_width;
  for (size_t i = 0; i < widths.size(); ++i) {
    const int64_t out_w = widths[i];
    const std::string tag = "hidden" + std::to_string(i + 1);
    const int w = g.add_param(tag + "_w", num::glorot_uniform(in_w, out_w, rng));
    const int b = g.add_param(tag + "_b", num::Tensor::zeros({out_w}));
    x = g.add_relu(g.add_dense(x, w, b, tag));
    in_w = out_w;
  }
  return x;
}

}  // namespace

Model build(const ModelSpec& spec, rng::Xoshiro256pp& init_rng) {
  spec.validate();
  Model m;
  m.spec = spec;
  num::Graph& g = m.graph;
  const int64_t n_cross = spec.n_customers * spec.n_campaigns;

  switch (spec.kind) {
    case ModelKind::kWide: {
      // Pure memorization: the one-hot cross-product is never materialized;
      // the linear map is a row lookup in an (n_customers*n_campaigns) x
      // n_offers table, with no bias term.
      m.in_cross = g.add_int_input("cross_ids");
      const int table = g.add_param(
          "wide_table", num::glorot_uniform(n_cross, spec.n_offers, init_rng));
      m.logits = g.add_embedding(table, m.in_cross, "wide_lookup");
      break;
    }
    case ModelKind::kDeep: {
      std::vector<int> parts;
      int64_t width = 0;
      if (spec.deep_input_variant != 1) {
        m.in_known = g.add_input("known_features", 4);
        parts.push_back(m.in_known);
        width += 4;
      }
      if (spec.deep_input_variant == 4) {
        m.in_hidden = g.add_input("hidden_features", 2);
        parts.push_back(m.in_hidden);
        width += 2;
      }
      if (spec.deep_input_variant == 1 || spec.deep_input_variant == 3) {
        m.in_user = g.add_int_input("user_ids");
        m.in_camp = g.add_int_input("campaign_ids");
        const int ue = g.add_param("user_embedding",
                                   num::gaussian_init({spec.n_customers, spec.user_embed_dim},
                                                      0.05, init_rng));
        const int ce = g.add_param("campaign_embedding",
                                   num::gaussian_init({spec.n_campaigns, spec.campaign_embed_dim},
                                                      0.05, init_rng));
        parts.push_back(g.add_embedding(ue, m.in_user, "user_embed"));
        parts.push_back(g.add_embedding(ce, m.in_camp, "campaign_embed"));
        width += spec.user_embed_dim + spec.campaign_embed_dim;
      }
      const int input = parts.size() == 1 ? parts[0] : g.add_concat(parts);
      const int last = build_hidden_stack(g, input, width, spec.hidden_widths, init_rng);
      const int w = g.add_param("output_w", num::glorot_uniform(spec.hidden_widths.back(),
                                                                spec.n_offers, init_rng));
      const int b = g.add_param("output_b", num::Tensor::zeros({spec.n_offers}));
      m.logits = g.add_dense(last, w, b, "output");
      break;
    }
    case ModelKind::kWideDeep: {
      // Deep path on known features; the wide cross-product contribution
      // enters the output layer additively (one lookup row per pair), which is
      // the dense-over-concatenation map written without materializing the
      // one-hot block.
      m.in_known = g.add_input("known_features", 4);
      const int last =
          build_hidden_stack(g, m.in_known, 4, spec.hidden_widths, init_rng);
      const int mh_w = g.add_param("multihead_w", num::glorot_uniform(spec.hidden_widths.back(),
                                                                      spec.multihead_width,
                                                                      init_rng));
      const int mh_b = g.add_param("multihead_b", num::Tensor::zeros({spec.multihead_width}));
      const int mh = g.add_relu(g.add_dense(last, mh_w, mh_b, "multihead"));
      m.mc_dropout = g.add_dropout(mh, spec.multihead_dropout_p, /*mc_eligible=*/true);
      const int out_w = g.add_param(
          "output_w", num::glorot_uniform(spec.multihead_width, spec.n_offers, init_rng));
      const int out_b = g.add_param("output_b", num::Tensor::zeros({spec.n_offers}));
      const int deep_logits = g.add_dense(m.mc_dropout, out_w, out_b, "output");
      m.in_cross = g.add_int_input("cross_ids");
      const int table = g.add_param(
          "wide_table", num::glorot_uniform(n_cross, spec.n_offers, init_rng));
      const int wide_logits = g.add_embedding(table, m.in_cross, "wide_lookup");
      m.logits = g.add_add(deep_logits, wide_logits);
      break;
    }
  }

  m.in_labels = g.add_int_input("labels");
  m.loss = g.add_softmax_xent(m.logits, m.in_labels);
  return m;
}

int64_t expected_parameter_count(const ModelSpec& spec) {
  const int64_t n_cross = spec.n_customers * spec.n_campaigns;
  int64_t count = 0;
  auto stack = [&](int64_t input_width) {
    int64_t in_w = input_width;
    for (int64_t w : spec.hidden_widths) {
      count += in_w * w + w;
      in_w = w;
    }
    return in_w;
  };
  switch (spec.kind) {
    case ModelKind::kWide:
      return n_cross * spec.n_offers;
    case ModelKind::kDeep: {
      int64_t width = 0;
      if (spec.deep_input_variant != 1) width += 4;
      if (spec.deep_input_variant == 4) width += 2;
      if (spec.deep_input_variant == 1 || spec.deep_input_variant == 3) {
        width += spec.user_embed_dim + spec.campaign_embed_dim;
        count += spec.n_customers * spec.user_embed_dim + spec.n_campaigns * spec.campaign_embed_dim;
      }
      const int64_t last = stack(width);
      count += last * spec.n_offers + spec.n_offers;
      return count;
    }
    case ModelKind::kWideDeep: {
      const int64_t last = stack(4);
      count += last * spec.multihead_width + spec.multihead_width;
      count += spec.multihead_width * spec.n_offers + spec.n_offers;
      count += n_cross * spec.n_offers;
      return count;
    }
  }
  return 0;
}

int64_t parameter_count(const Model& m) {
  int64_t count = 0;
  for (const auto& p : m.graph.params) count += p.value.size();
  return count;
}

void set_mc_dropout_p(Model& m, double p) {
  if (!m.has_multihead()) {
    throw CapabilityError("model '" + m.spec.name + "' has no multi-head dropout layer");
  }
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout probability must lie in [0, 1), got " + std::to_string(p));
  }
  m.graph.nodes[static_cast<size_t>(m.mc_dropout)].p = p;
}

void bind_batch(const Model& m, num::Workspace& ws, std::span<const ModelInput> batch,
                std::span<const int32_t> offers_1based) {
  const auto n = static_cast<int64_t>(batch.size());
  const num::Graph& g = m.graph;
  if (ws.out.size() != g.nodes.size()) g.prepare(ws);

  if (m.in_known >= 0) {
    num::Tensor known({n, 4});
    double* d = known.data();
    for (int64_t i = 0; i < n; ++i) {
      for (int j = 0; j < 4; ++j) d[i * 4 + j] = batch[static_cast<size_t>(i)].known[static_cast<size_t>(j)];
    }
    g.set_input(ws, m.in_known, std::move(known));
  }
  if (m.in_hidden >= 0) {
    num::Tensor hidden({n, 2});
    double* d = hidden.data();
    for (int64_t i = 0; i < n; ++i) {
      d[i * 2] = batch[static_cast<size_t>(i)].hidden[0];
      d[i * 2 + 1] = batch[static_cast<size_t>(i)].hidden[1];
    }
    g.set_input(ws, m.in_hidden, std::move(hidden));
  }
  if (m.in_user >= 0) {
    std::vector<int64_t> ids(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) ids[static_cast<size_t>(i)] = batch[static_cast<size_t>(i)].user_id;
    g.set_int_input(ws, m.in_user, std::move(ids));
  }
  if (m.in_camp >= 0) {
    std::vector<int64_t> ids(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) ids[static_cast<size_t>(i)] = batch[static_cast<size_t>(i)].campaign_id;
    g.set_int_input(ws, m.in_camp, std::move(ids));
  }
  if (m.in_cross >= 0) {
    std::vector<int64_t> ids(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      ids[static_cast<size_t>(i)] = cross_index(batch[static_cast<size_t>(i)].user_id,
                                                batch[static_cast<size_t>(i)].campaign_id,
                                                m.spec.n_campaigns);
    }
    g.set_int_input(ws, m.in_cross, std::move(ids));
  }
  if (!offers_1based.empty()) {
    if (static_cast<int64_t>(offers_1based.size()) != n) {
      throw ShapeError("bind_batch: label count does not match batch size");
    }
    std::vector<int64_t> labels(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      // offers are 1-based externally, class indices 0-based inside the graph
      labels[static_cast<size_t>(i)] = offers_1based[static_cast<size_t>(i)] - 1;
    }
    g.set_int_input(ws, m.in_labels, std::move(labels));
  }
  ws.batch = n;
}

num::Tensor predict_proba(const Model& m, num::Workspace& ws, std::span<const ModelInput> batch,
                          num::DropoutMode mode, rng::Xoshiro256pp* rng) {
  if (batch.empty()) throw UsageError("predict_proba: empty batch");
  bind_batch(m, ws, batch);
  forward(m.graph, ws, mode, rng, 0, m.logits);
  num::Tensor probs;
  softmax_rows(ws.out[static_cast<size_t>(m.logits)], probs);
  return probs;
}

int32_t predict_offer(const Model& m, num::Workspace& ws, const ModelInput& input) {
  const num::Tensor probs = predict_proba(m, ws, std::span(&input, 1), num::DropoutMode::kOff);
  return static_cast<int32_t>(argmax_row(probs, 0)) + 1;
}

}  // namespace promobench::models
