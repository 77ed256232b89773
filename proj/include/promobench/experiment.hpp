#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "promobench/config.hpp"
#include "promobench/harness.hpp"

namespace promobench::harness {

struct BanditRow {
  std::string algorithm;
  std::string model_name;
  int n_mc_passes = 0;
  int confidence_rank = 0;
  double dropout_p = 0;
  double train_acc = 0, valid_acc = 0, test_acc = 0;
};

struct ExperimentResult {
  synth::GenSummary gen_summary;
  std::vector<EvalReport> model_reports;  // "random" baseline first, then configured models
  std::vector<BanditRow> bandit_rows;
  // Default-variance vs reduced-variance rerun of the ablation model.
  std::optional<std::pair<EvalReport, EvalReport>> ablation;
  std::filesystem::path run_dir;
};

// Full study pipeline: regenerates the dataset, trains every configured model,
// evaluates greedy and bandit policies, and writes datasets, checkpoints,
// training logs, report CSVs and a markdown summary under run_dir. Reruns with
// identical config overwrite every deterministic artifact with identical bytes
// (summary.md carries wall-clock timings and is excluded from that guarantee).
ExperimentResult run_experiment(const cfg::ExperimentConfig& config,
                                const std::filesystem::path& run_dir, int n_threads = 0,
                                bool quiet = false);

// Renders reports/summary.md from the report CSVs in an existing run directory.
void render_summary(const std::filesystem::path& run_dir);

}  // namespace promobench::harness
