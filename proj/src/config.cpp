#include "promobench/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace promobench::cfg {

using nlohmann::json;

namespace {

// Accumulating schema walker: records unknown keys, missing required keys and
// type mismatches instead of stopping at the first problem.
struct Checker {
  std::vector<std::string> violations;

  void unknown_keys(const json& obj, const std::string& ctx,
                    const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (!allowed.count(it.key())) {
        violations.push_back(ctx + ": unknown key '" + it.key() + "'");
      }
    }
  }

  bool require(const json& obj, const std::string& ctx, const std::string& key) {
    if (!obj.contains(key)) {
      violations.push_back(ctx + ": missing required key '" + key + "'");
      return false;
    }
    return true;
  }

  template <typename T>
  bool fetch(const json& obj, const std::string& ctx, const std::string& key, T& out) {
    if (!obj.contains(key)) return false;
    try {
      out = obj.at(key).get<T>();
      return true;
    } catch (const json::exception&) {
      violations.push_back(ctx + "." + key + ": wrong type");
      return false;
    }
  }

  bool fetch_pair(const json& obj, const std::string& ctx, const std::string& key,
                  std::array<double, 2>& out) {
    if (!obj.contains(key)) return false;
    const json& v = obj.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      violations.push_back(ctx + "." + key + ": expected an array of two numbers");
      return false;
    }
    out = {v[0].get<double>(), v[1].get<double>()};
    return true;
  }
};

const std::set<std::string> kGenKeys = {
    "n_samples",        "n_customers",        "n_campaigns",
    "known_mean_range", "customer_sd_caps",   "customer_hidden_mean_range",
    "customer_hidden_sd_cap", "campaign_sd_caps", "campaign_hidden_mean_range",
    "campaign_hidden_sd_cap", "n_offers",     "seed"};

synth::GenSpec parse_gen(const json& obj, Checker& ck, uint64_t global_seed) {
  synth::GenSpec g;
  const std::string ctx = "gen";
  ck.unknown_keys(obj, ctx, kGenKeys);
  for (const char* key : {"n_samples", "n_customers", "n_campaigns"}) ck.require(obj, ctx, key);
  ck.fetch(obj, ctx, "n_samples", g.n_samples);
  ck.fetch(obj, ctx, "n_customers", g.n_customers);
  ck.fetch(obj, ctx, "n_campaigns", g.n_campaigns);
  ck.fetch_pair(obj, ctx, "known_mean_range", g.known_mean_range);
  ck.fetch_pair(obj, ctx, "customer_sd_caps", g.customer_sd_caps);
  ck.fetch_pair(obj, ctx, "customer_hidden_mean_range", g.customer_hidden_mean_range);
  ck.fetch(obj, ctx, "customer_hidden_sd_cap", g.customer_hidden_sd_cap);
  ck.fetch_pair(obj, ctx, "campaign_sd_caps", g.campaign_sd_caps);
  ck.fetch_pair(obj, ctx, "campaign_hidden_mean_range", g.campaign_hidden_mean_range);
  ck.fetch(obj, ctx, "campaign_hidden_sd_cap", g.campaign_hidden_sd_cap);
  ck.fetch(obj, ctx, "n_offers", g.n_offers);
  if (!ck.fetch(obj, ctx, "seed", g.seed)) g.seed = rng::component_seed(global_seed, "gen");
  return g;
}

const std::set<std::string> kSplitKeys = {"mode", "fractions", "seed"};

harness::SplitSpec parse_split(const json& obj, Checker& ck, uint64_t global_seed) {
  harness::SplitSpec s;
  const std::string ctx = "split";
  ck.unknown_keys(obj, ctx, kSplitKeys);
  std::string mode = "random";
  ck.fetch(obj, ctx, "mode", mode);
  try {
    s.mode = harness::split_mode_from_name(mode);
  } catch (const ConfigError& e) {
    ck.violations.push_back(ctx + ".mode: " + e.what());
  }
  if (obj.contains("fractions")) {
    const json& f = obj.at("fractions");
    if (!f.is_array() || f.size() != 3) {
      ck.violations.push_back(ctx + ".fractions: expected an array of three numbers");
    } else {
      for (int i = 0; i < 3; ++i) s.fractions[static_cast<size_t>(i)] = f[static_cast<size_t>(i)].get<double>();
    }
  }
  if (!ck.fetch(obj, ctx, "seed", s.seed)) s.seed = rng::component_seed(global_seed, "split");
  return s;
}

const std::set<std::string> kTrainKeys = {"lr",       "batch_size",  "max_epochs",
                                          "patience", "restore_best", "seed"};

// Overlays a train block onto defaults; patience stays unset (-1) unless given.
void apply_train_block(const json& obj, Checker& ck, const std::string& ctx,
                       harness::TrainSpec& t, int& patience) {
  ck.unknown_keys(obj, ctx, kTrainKeys);
  ck.fetch(obj, ctx, "lr", t.lr);
  ck.fetch(obj, ctx, "batch_size", t.batch_size);
  ck.fetch(obj, ctx, "max_epochs", t.max_epochs);
  int p = -1;
  if (ck.fetch(obj, ctx, "patience", p)) patience = p;
  ck.fetch(obj, ctx, "restore_best", t.restore_best);
  ck.fetch(obj, ctx, "seed", t.seed);
}

// n_offers / n_customers / n_campaigns are normally resolved from the gen
// block, but config echoes carry them explicitly, so they parse back too.
const std::set<std::string> kModelKeys = {
    "name",           "kind",          "deep_input_variant", "hidden_widths",
    "user_embed_dim", "campaign_embed_dim", "multihead_width", "multihead_dropout_p",
    "split_mode",     "train",         "n_offers",           "n_customers",
    "n_campaigns"};

const std::set<std::string> kBanditKeys = {"algorithm", "n_mc_passes", "confidence_rank",
                                           "dropout_p", "seed",        "model"};

const std::set<std::string> kAblationKeys = {"model", "customer_sd_caps",
                                             "customer_hidden_sd_cap"};

const std::set<std::string> kTopKeys = {"global_seed", "output_dir", "gen",    "split",
                                        "train",       "models",     "bandit", "ablation"};

}  // namespace

ExperimentConfig parse_config_json(const json& root, const std::string& source_name) {
  Checker ck;
  if (!root.is_object()) {
    throw ConfigError(source_name + ": top level must be a JSON object");
  }
  ck.unknown_keys(root, source_name, kTopKeys);
  for (const char* key : {"global_seed", "output_dir", "gen", "split", "models"}) {
    ck.require(root, source_name, key);
  }

  ExperimentConfig cfg;
  ck.fetch(root, source_name, "global_seed", cfg.global_seed);
  std::string out_dir;
  ck.fetch(root, source_name, "output_dir", out_dir);
  cfg.output_dir = out_dir;

  if (root.contains("gen") && root.at("gen").is_object()) {
    cfg.gen = parse_gen(root.at("gen"), ck, cfg.global_seed);
  } else if (root.contains("gen")) {
    ck.violations.push_back("gen: must be an object");
  }
  if (root.contains("split") && root.at("split").is_object()) {
    cfg.split = parse_split(root.at("split"), ck, cfg.global_seed);
  } else if (root.contains("split")) {
    ck.violations.push_back("split: must be an object");
  }

  harness::TrainSpec train_defaults;
  int default_patience = -1;
  if (root.contains("train")) {
    if (root.at("train").is_object()) {
      apply_train_block(root.at("train"), ck, "train", train_defaults, default_patience);
    } else {
      ck.violations.push_back("train: must be an object");
    }
  }

  std::set<std::string> model_names;
  if (root.contains("models")) {
    const json& models = root.at("models");
    if (!models.is_array() || models.empty()) {
      ck.violations.push_back("models: must be a nonempty array");
    } else {
      for (size_t i = 0; i < models.size(); ++i) {
        const json& mj = models[i];
        const std::string ctx = "models[" + std::to_string(i) + "]";
        if (!mj.is_object()) {
          ck.violations.push_back(ctx + ": must be an object");
          continue;
        }
        ck.unknown_keys(mj, ctx, kModelKeys);
        ModelEntry entry;
        entry.spec.n_offers = cfg.gen.n_offers;
        entry.spec.n_customers = cfg.gen.n_customers;
        entry.spec.n_campaigns = cfg.gen.n_campaigns;
        ck.fetch(mj, ctx, "n_offers", entry.spec.n_offers);
        ck.fetch(mj, ctx, "n_customers", entry.spec.n_customers);
        ck.fetch(mj, ctx, "n_campaigns", entry.spec.n_campaigns);
        if (ck.require(mj, ctx, "name")) ck.fetch(mj, ctx, "name", entry.spec.name);
        std::string kind;
        if (ck.require(mj, ctx, "kind") && ck.fetch(mj, ctx, "kind", kind)) {
          try {
            entry.spec.kind = models::kind_from_name(kind);
          } catch (const ConfigError& e) {
            ck.violations.push_back(ctx + ".kind: " + e.what());
          }
        }
        ck.fetch(mj, ctx, "deep_input_variant", entry.spec.deep_input_variant);
        ck.fetch(mj, ctx, "hidden_widths", entry.spec.hidden_widths);
        ck.fetch(mj, ctx, "user_embed_dim", entry.spec.user_embed_dim);
        ck.fetch(mj, ctx, "campaign_embed_dim", entry.spec.campaign_embed_dim);
        ck.fetch(mj, ctx, "multihead_width", entry.spec.multihead_width);
        ck.fetch(mj, ctx, "multihead_dropout_p", entry.spec.multihead_dropout_p);
        std::string split_mode;
        if (ck.fetch(mj, ctx, "split_mode", split_mode)) {
          try {
            entry.split_mode = harness::split_mode_from_name(split_mode);
          } catch (const ConfigError& e) {
            ck.violations.push_back(ctx + ".split_mode: " + e.what());
          }
        }
        entry.train = train_defaults;
        int patience = default_patience;
        if (mj.contains("train")) {
          if (mj.at("train").is_object()) {
            apply_train_block(mj.at("train"), ck, ctx + ".train", entry.train, patience);
          } else {
            ck.violations.push_back(ctx + ".train: must be an object");
          }
        }
        // patience default depends on the architecture: 10 for wide&deep, 5 otherwise
        entry.train.patience =
            patience > 0 ? patience : (entry.spec.kind == models::ModelKind::kWideDeep ? 10 : 5);
        if (entry.train.seed == 0) {
          entry.train.seed = rng::component_seed(cfg.global_seed, "train/" + entry.spec.name);
        }
        if (!model_names.insert(entry.spec.name).second) {
          ck.violations.push_back(ctx + ": duplicate model name '" + entry.spec.name + "'");
        }
        cfg.models.push_back(std::move(entry));
      }
    }
  }

  if (root.contains("bandit")) {
    const json& bandits = root.at("bandit");
    if (!bandits.is_array()) {
      ck.violations.push_back("bandit: must be an array");
    } else {
      for (size_t i = 0; i < bandits.size(); ++i) {
        const json& bj = bandits[i];
        const std::string ctx = "bandit[" + std::to_string(i) + "]";
        if (!bj.is_object()) {
          ck.violations.push_back(ctx + ": must be an object");
          continue;
        }
        ck.unknown_keys(bj, ctx, kBanditKeys);
        bandit::BanditConfig bc;
        std::string algo;
        if (ck.require(bj, ctx, "algorithm") && ck.fetch(bj, ctx, "algorithm", algo)) {
          try {
            bc.algorithm = bandit::algorithm_from_name(algo);
          } catch (const ConfigError& e) {
            ck.violations.push_back(ctx + ".algorithm: " + e.what());
          }
        }
        ck.fetch(bj, ctx, "n_mc_passes", bc.n_mc_passes);
        ck.fetch(bj, ctx, "confidence_rank", bc.confidence_rank);
        ck.fetch(bj, ctx, "dropout_p", bc.dropout_p);
        ck.fetch(bj, ctx, "model", bc.model_name);
        if (!ck.fetch(bj, ctx, "seed", bc.seed)) {
          bc.seed = rng::component_seed(cfg.global_seed, "bandit/" + algorithm_name(bc.algorithm));
        }
        if (!model_names.count(bc.model_name)) {
          ck.violations.push_back(ctx + ": model '" + bc.model_name + "' is not configured");
        }
        cfg.bandits.push_back(std::move(bc));
      }
    }
  }

  if (root.contains("ablation")) {
    const json& aj = root.at("ablation");
    if (!aj.is_object()) {
      ck.violations.push_back("ablation: must be an object");
    } else {
      ck.unknown_keys(aj, "ablation", kAblationKeys);
      AblationSpec ab;
      if (ck.require(aj, "ablation", "model")) ck.fetch(aj, "ablation", "model", ab.model_name);
      ck.fetch_pair(aj, "ablation", "customer_sd_caps", ab.customer_sd_caps);
      ck.fetch(aj, "ablation", "customer_hidden_sd_cap", ab.customer_hidden_sd_cap);
      if (!ab.model_name.empty() && !model_names.count(ab.model_name)) {
        ck.violations.push_back("ablation: model '" + ab.model_name + "' is not configured");
      }
      cfg.ablation = ab;
    }
  }

  if (!ck.violations.empty()) throw ConfigError(std::move(ck.violations));

  // Semantic validation after the schema walk, still collecting everything.
  std::vector<std::string> semantic;
  auto collect = [&semantic](const std::function<void()>& f) {
    try {
      f();
    } catch (const ConfigError& e) {
      for (const auto& msg : e.violations()) semantic.push_back(msg);
    }
  };
  collect([&] { cfg.gen.validate(); });
  collect([&] { cfg.split.validate(); });
  for (const auto& entry : cfg.models) {
    collect([&] { entry.spec.validate(); });
    collect([&] { entry.train.validate(); });
  }
  for (const auto& bc : cfg.bandits) collect([&] { bc.validate(); });
  if (cfg.ablation) {
    if (!(cfg.ablation->customer_sd_caps[0] > 0) || !(cfg.ablation->customer_sd_caps[1] > 0) ||
        !(cfg.ablation->customer_hidden_sd_cap > 0)) {
      semantic.push_back("ablation: sd caps must be > 0");
    }
  }
  if (!semantic.empty()) throw ConfigError(std::move(semantic));

  // Canonical echo of the resolved configuration (sorted keys, single line).
  json echo;
  echo["global_seed"] = cfg.global_seed;
  echo["output_dir"] = cfg.output_dir.string();
  echo["gen"] = gen_spec_json(cfg.gen);
  echo["split"] = split_spec_json(cfg.split);
  echo["models"] = json::array();
  for (const auto& entry : cfg.models) {
    json mj = model_spec_json(entry.spec);
    mj["split_mode"] = harness::split_mode_name(entry.split_mode);
    mj["train"] = {{"lr", entry.train.lr},
                   {"batch_size", entry.train.batch_size},
                   {"max_epochs", entry.train.max_epochs},
                   {"patience", entry.train.patience},
                   {"restore_best", entry.train.restore_best},
                   {"seed", entry.train.seed}};
    echo["models"].push_back(std::move(mj));
  }
  echo["bandit"] = json::array();
  for (const auto& bc : cfg.bandits) {
    echo["bandit"].push_back({{"algorithm", algorithm_name(bc.algorithm)},
                              {"n_mc_passes", bc.n_mc_passes},
                              {"confidence_rank", bc.confidence_rank},
                              {"dropout_p", bc.dropout_p},
                              {"seed", bc.seed},
                              {"model", bc.model_name}});
  }
  if (cfg.ablation) {
    echo["ablation"] = {{"model", cfg.ablation->model_name},
                        {"customer_sd_caps", cfg.ablation->customer_sd_caps},
                        {"customer_hidden_sd_cap", cfg.ablation->customer_hidden_sd_cap}};
  }
  cfg.echo = std::move(echo);
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open config file " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  // An empty (or whitespace-only) file reports the full set of required keys
  // rather than a bare JSON parse error.
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    return parse_config_json(json::object(), file.filename().string());
  }
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ": invalid JSON: " + e.what());
  }
  return parse_config_json(root, file.filename().string());
}

std::string echo_line(const ExperimentConfig& config) { return config.echo.dump(); }

json gen_spec_json(const synth::GenSpec& g) {
  return json{{"n_samples", g.n_samples},
              {"n_customers", g.n_customers},
              {"n_campaigns", g.n_campaigns},
              {"known_mean_range", g.known_mean_range},
              {"customer_sd_caps", g.customer_sd_caps},
              {"customer_hidden_mean_range", g.customer_hidden_mean_range},
              {"customer_hidden_sd_cap", g.customer_hidden_sd_cap},
              {"campaign_sd_caps", g.campaign_sd_caps},
              {"campaign_hidden_mean_range", g.campaign_hidden_mean_range},
              {"campaign_hidden_sd_cap", g.campaign_hidden_sd_cap},
              {"n_offers", g.n_offers},
              {"seed", g.seed}};
}

synth::GenSpec gen_spec_from_json(const json& j) {
  synth::GenSpec g;
  g.n_samples = j.at("n_samples").get<int64_t>();
  g.n_customers = j.at("n_customers").get<int64_t>();
  g.n_campaigns = j.at("n_campaigns").get<int64_t>();
  g.known_mean_range = j.at("known_mean_range").get<std::array<double, 2>>();
  g.customer_sd_caps = j.at("customer_sd_caps").get<std::array<double, 2>>();
  g.customer_hidden_mean_range = j.at("customer_hidden_mean_range").get<std::array<double, 2>>();
  g.customer_hidden_sd_cap = j.at("customer_hidden_sd_cap").get<double>();
  g.campaign_sd_caps = j.at("campaign_sd_caps").get<std::array<double, 2>>();
  g.campaign_hidden_mean_range = j.at("campaign_hidden_mean_range").get<std::array<double, 2>>();
  g.campaign_hidden_sd_cap = j.at("campaign_hidden_sd_cap").get<double>();
  g.n_offers = j.at("n_offers").get<int64_t>();
  g.seed = j.at("seed").get<uint64_t>();
  return g;
}

json model_spec_json(const models::ModelSpec& m) {
  json j{{"name", m.name},
         {"kind", models::kind_name(m.kind)},
         {"hidden_widths", m.hidden_widths},
         {"n_offers", m.n_offers},
         {"n_customers", m.n_customers},
         {"n_campaigns", m.n_campaigns}};
  if (m.kind == models::ModelKind::kDeep) {
    j["deep_input_variant"] = m.deep_input_variant;
    j["user_embed_dim"] = m.user_embed_dim;
    j["campaign_embed_dim"] = m.campaign_embed_dim;
  }
  if (m.kind == models::ModelKind::kWideDeep) {
    j["multihead_width"] = m.multihead_width;
    j["multihead_dropout_p"] = m.multihead_dropout_p;
  }
  return j;
}

models::ModelSpec model_spec_from_json(const json& j) {
  models::ModelSpec m;
  m.name = j.at("name").get<std::string>();
  m.kind = models::kind_from_name(j.at("kind").get<std::string>());
  m.hidden_widths = j.at("hidden_widths").get<std::vector<int64_t>>();
  m.n_offers = j.at("n_offers").get<int64_t>();
  m.n_customers = j.at("n_customers").get<int64_t>();
  m.n_campaigns = j.at("n_campaigns").get<int64_t>();
  if (j.contains("deep_input_variant")) m.deep_input_variant = j.at("deep_input_variant").get<int>();
  if (j.contains("user_embed_dim")) m.user_embed_dim = j.at("user_embed_dim").get<int64_t>();
  if (j.contains("campaign_embed_dim")) {
    m.campaign_embed_dim = j.at("campaign_embed_dim").get<int64_t>();
  }
  if (j.contains("multihead_width")) m.multihead_width = j.at("multihead_width").get<int64_t>();
  if (j.contains("multihead_dropout_p")) {
    m.multihead_dropout_p = j.at("multihead_dropout_p").get<double>();
  }
  return m;
}

json split_spec_json(const harness::SplitSpec& s) {
  return json{{"mode", harness::split_mode_name(s.mode)},
              {"fractions", s.fractions},
              {"seed", s.seed}};
}

harness::SplitSpec split_spec_from_json(const json& j) {
  harness::SplitSpec s;
  s.mode = harness::split_mode_from_name(j.at("mode").get<std::string>());
  s.fractions = j.at("fractions").get<std::array<double, 3>>();
  s.seed = j.at("seed").get<uint64_t>();
  return s;
}

}  // namespace promobench::cfg
