#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "promobench/bandit.hpp"
#include "promobench/harness.hpp"
#include "promobench/models.hpp"
#include "promobench/synthgen.hpp"

namespace promobench::cfg {

// One model to train: a resolved architecture spec, the split mode it trains
// under, and its fully resolved training settings.
struct ModelEntry {
  models::ModelSpec spec;
  harness::SplitSpec::Mode split_mode = harness::SplitSpec::Mode::kRandom;
  harness::TrainSpec train;
};

// Reduced-variance rerun of one configured model on a regenerated dataset.
struct AblationSpec {
  std::string model_name;
  std::array<double, 2> customer_sd_caps = {0.05, 0.1};
  double customer_hidden_sd_cap = 0.05;
};

struct ExperimentConfig {
  uint64_t global_seed = 0;
  std::filesystem::path output_dir;
  synth::GenSpec gen;
  harness::SplitSpec split;
  std::vector<ModelEntry> models;
  std::vector<bandit::BanditConfig> bandits;
  std::optional<AblationSpec> ablation;
  nlohmann::json echo;  // canonical echo of the resolved config
};

// Parses and validates a config file (JSON). Unknown keys are rejected and
// every violation is collected before a ConfigError is thrown.
//
// Seed derivation for seeds not set explicitly (see rng::component_seed):
//   gen            sub-seed of "gen"            split   sub-seed of "split"
//   ablation gen   sub-seed of "gen/ablation"   model M training  "train/M"
//   model M init   sub-seed of "init/M"         bandit A          "bandit/A"
//   random baseline                             "baseline"
ExperimentConfig parse_config(const std::filesystem::path& file);
ExperimentConfig parse_config_json(const nlohmann::json& root, const std::string& source_name);

// Canonical single-line JSON echo embedded in output artifacts.
std::string echo_line(const ExperimentConfig& config);

nlohmann::json gen_spec_json(const synth::GenSpec& g);
synth::GenSpec gen_spec_from_json(const nlohmann::json& j);
nlohmann::json model_spec_json(const models::ModelSpec& m);
models::ModelSpec model_spec_from_json(const nlohmann::json& j);
nlohmann::json split_spec_json(const harness::SplitSpec& s);
harness::SplitSpec split_spec_from_json(const nlohmann::json& j);

}  // namespace promobench::cfg
