// promobench — synthetic promo-offer benchmark: dataset generation, wide/deep
// model training, and MC-dropout bandit evaluation. See README.md for the
// config schema and file formats.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "promobench/checkpoint.hpp"
#include "promobench/config.hpp"
#include "promobench/experiment.hpp"
#include "promobench/synthgen.hpp"

namespace fs = std::filesystem;
using namespace promobench;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitTrain = 3;

struct SplitResolution {
  synth::Dataset dataset;
  harness::Splits splits;
  cfg::ExperimentConfig config;
};

// Loads a dataset directory and recomputes the splits from a config echo.
SplitResolution resolve_from_echo(const fs::path& data_dir, const nlohmann::json& echo) {
  SplitResolution r;
  r.dataset = synth::load_dataset(synth::dataset_file(data_dir));
  r.config = cfg::parse_config_json(echo, "config echo");
  r.dataset.spec = r.config.gen;
  return r;
}

int cmd_gen(const fs::path& config_file, const fs::path& out_dir, int threads) {
  const cfg::ExperimentConfig config = cfg::parse_config(config_file);
  const synth::GenSummary summary = synth::generate(config.gen, out_dir, threads);
  std::cout << "generated " << summary.n_rows << " rows into " << out_dir.string() << "\n";
  std::cout << "per-customer occurrences: min " << summary.customer_min_count << ", max "
            << summary.customer_max_count << "\n";
  std::cout << "offer histogram:";
  for (size_t i = 0; i < summary.offer_histogram.size(); ++i) {
    std::cout << ' ' << (i + 1) << ':' << summary.offer_histogram[i];
  }
  std::cout << std::endl;
  return kExitOk;
}

int cmd_verify(const fs::path& data_dir) {
  synth::Dataset ds = synth::load_dataset(synth::dataset_file(data_dir));
  synth::GenSpec sidecar_spec = ds.spec;
  const fs::path profiles = synth::profiles_file(data_dir);
  if (fs::exists(profiles)) {
    synth::load_profiles(profiles, &sidecar_spec);
    ds.spec = sidecar_spec;
  }
  const synth::VerifyResult r = synth::verify_dataset(ds);
  if (r.mismatches == 0) {
    std::cout << "verify: " << r.rows_checked << " rows, all labels consistent" << std::endl;
    return kExitOk;
  }
  std::cerr << "verify: " << r.mismatches << " of " << r.rows_checked
            << " rows disagree with recomputed labels" << std::endl;
  for (const auto& msg : r.first_mismatches) std::cerr << "  " << msg << std::endl;
  return kExitData;
}

int cmd_train(const fs::path& config_file, const fs::path& data_dir, const std::string& model_name,
              const fs::path& out_dir) {
  const cfg::ExperimentConfig config = cfg::parse_config(config_file);
  const cfg::ModelEntry* entry = nullptr;
  for (const auto& e : config.models) {
    if (e.spec.name == model_name) entry = &e;
  }
  if (entry == nullptr) {
    throw ConfigError("model '" + model_name + "' is not configured; available models: " + [&] {
      std::string names;
      for (const auto& e : config.models) names += (names.empty() ? "" : ", ") + e.spec.name;
      return names;
    }());
  }

  synth::Dataset ds = synth::load_dataset(synth::dataset_file(data_dir));
  ds.spec = config.gen;
  harness::SplitSpec split_spec = config.split;
  split_spec.mode = entry->split_mode;
  const harness::Splits splits = harness::split(static_cast<int64_t>(ds.rows.size()), split_spec);

  rng::Xoshiro256pp init_rng(rng::component_seed(config.global_seed, "init/" + entry->spec.name));
  models::Model model = models::build(entry->spec, init_rng);
  fs::create_directories(out_dir);
  const fs::path ckpt_file = out_dir / (entry->spec.name + ".ckpt");

  harness::TrainResult tr;
  try {
    tr = harness::train(model, ds, splits, entry->train);
  } catch (const TrainError&) {
    ckpt::save(model, ckpt_file, config.echo, rng::Xoshiro256pp(entry->train.seed).state());
    std::cerr << "training aborted; last state checkpointed to " << ckpt_file.string()
              << std::endl;
    throw;
  }
  ckpt::save(model, ckpt_file, config.echo, rng::Xoshiro256pp(entry->train.seed).state());

  std::ofstream log(out_dir / (entry->spec.name + "_training_log.csv"));
  log << "# config: " << cfg::echo_line(config) << "\n";
  log << "epoch,train_loss,train_acc,valid_loss,valid_acc\n";
  for (const auto& e : tr.log) {
    log << e.epoch << ',' << synth::format_real(e.train_loss) << ','
        << synth::format_real(e.train_acc) << ',' << synth::format_real(e.valid_loss) << ','
        << synth::format_real(e.valid_acc) << '\n';
  }
  std::cout << "trained " << entry->spec.name << " for " << tr.epochs_trained
            << " epochs (best epoch " << tr.best_epoch << ", valid loss "
            << synth::format_real(tr.best_valid_loss) << "); checkpoint at " << ckpt_file.string()
            << std::endl;
  return kExitOk;
}

void print_split_eval(const std::string& name, const harness::SplitEval& ev) {
  std::cout << "  " << name << ": accuracy " << synth::format_real(ev.accuracy) << ", within-1 "
            << synth::format_real(ev.within_one) << " over " << ev.n << " rows" << std::endl;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& data_dir) {
  ckpt::LoadedCheckpoint loaded = ckpt::load(checkpoint);
  SplitResolution r = resolve_from_echo(data_dir, loaded.config_echo);
  harness::SplitSpec split_spec = r.config.split;
  for (const auto& e : r.config.models) {
    if (e.spec.name == loaded.model.spec.name) split_spec.mode = e.split_mode;
  }
  r.splits = harness::split(static_cast<int64_t>(r.dataset.rows.size()), split_spec);

  std::cout << "model " << loaded.model.spec.name << " ("
            << models::kind_name(loaded.model.spec.kind) << ", "
            << harness::split_mode_name(split_spec.mode) << " split)" << std::endl;
  print_split_eval("train", harness::evaluate(loaded.model, r.dataset, r.splits.train));
  print_split_eval("valid", harness::evaluate(loaded.model, r.dataset, r.splits.valid));
  print_split_eval("test", harness::evaluate(loaded.model, r.dataset, r.splits.test));
  return kExitOk;
}

int cmd_bandit_eval(const fs::path& checkpoint, const fs::path& data_dir, const std::string& algo,
                    int passes, int rank, double dropout_p, uint64_t seed, bool seed_set) {
  ckpt::LoadedCheckpoint loaded = ckpt::load(checkpoint);
  SplitResolution r = resolve_from_echo(data_dir, loaded.config_echo);
  harness::SplitSpec split_spec = r.config.split;
  for (const auto& e : r.config.models) {
    if (e.spec.name == loaded.model.spec.name) split_spec.mode = e.split_mode;
  }
  r.splits = harness::split(static_cast<int64_t>(r.dataset.rows.size()), split_spec);

  bandit::BanditConfig bc;
  bc.algorithm = bandit::algorithm_from_name(algo);
  bc.n_mc_passes = passes;
  bc.confidence_rank = rank;
  bc.dropout_p = dropout_p;
  bc.model_name = loaded.model.spec.name;
  bc.seed = seed_set ? seed
                     : rng::component_seed(r.config.global_seed, "bandit/" + algo);
  bc.validate();

  std::cout << "bandit " << algo << " on " << loaded.model.spec.name << " (passes " << passes
            << ", rank " << rank << ", dropout_p " << synth::format_real(dropout_p) << ", seed "
            << bc.seed << ")" << std::endl;
  const char* names[3] = {"train", "valid", "test"};
  const std::vector<int64_t>* lists[3] = {&r.splits.train, &r.splits.valid, &r.splits.test};
  for (int i = 0; i < 3; ++i) {
    const bandit::PolicyEval ev = bandit::evaluate_policy(loaded.model, r.dataset, *lists[i], bc);
    std::cout << "  " << names[i] << ": accuracy " << synth::format_real(ev.accuracy) << " over "
              << ev.n << " rows" << std::endl;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"promobench: synthetic promo-offer prediction benchmark"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0 = hardware concurrency)");

  std::string config_file, data_dir, out_dir, model_name, checkpoint, run_dir;
  std::string algo = "none";
  int passes = 100, rank = 5;
  double dropout_p = 0.3;
  uint64_t seed = 0;

  auto* gen = app.add_subcommand("gen", "generate a dataset from a config");
  gen->add_option("--config", config_file, "experiment config file")->required();
  gen->add_option("--out", out_dir, "output dataset directory")->required();

  auto* train = app.add_subcommand("train", "train one configured model");
  train->add_option("--config", config_file, "experiment config file")->required();
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--model", model_name, "configured model name")->required();
  train->add_option("--out", out_dir, "output directory for checkpoint + log")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on all splits");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();

  auto* bandit_eval = app.add_subcommand("bandit-eval", "evaluate a bandit policy");
  bandit_eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  bandit_eval->add_option("--data", data_dir, "dataset directory")->required();
  bandit_eval->add_option("--algo", algo, "none | ts | ucb")->required();
  bandit_eval->add_option("--passes", passes, "MC passes (ucb)");
  bandit_eval->add_option("--rank", rank, "confidence rank (ucb)");
  bandit_eval->add_option("--dropout-p", dropout_p, "inference dropout probability");
  auto* seed_opt = bandit_eval->add_option("--seed", seed, "mask stream seed");

  auto* report = app.add_subcommand("report", "render summary.md for a run directory");
  report->add_option("--run", run_dir, "run directory")->required();

  auto* verify = app.add_subcommand("verify", "recompute labels and compare to stored offers");
  verify->add_option("--data", data_dir, "dataset directory")->required();

  auto* run = app.add_subcommand("run", "run the full experiment for a config");
  run->add_option("--config", config_file, "experiment config file")->required();
  run->add_option("--out", out_dir, "run directory (default: config output_dir)");

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) set_default_thread_count(threads);

  try {
    if (gen->parsed()) return cmd_gen(config_file, out_dir, threads);
    if (verify->parsed()) return cmd_verify(data_dir);
    if (train->parsed()) return cmd_train(config_file, data_dir, model_name, out_dir);
    if (eval->parsed()) return cmd_eval(checkpoint, data_dir);
    if (bandit_eval->parsed()) {
      return cmd_bandit_eval(checkpoint, data_dir, algo, passes, rank, dropout_p, seed,
                             seed_opt->count() > 0);
    }
    if (report->parsed()) {
      harness::render_summary(run_dir);
      std::cout << "wrote " << (fs::path(run_dir) / "reports" / "summary.md").string()
                << std::endl;
      return kExitOk;
    }
    if (run->parsed()) {
      const cfg::ExperimentConfig config = cfg::parse_config(config_file);
      const fs::path dir = out_dir.empty() ? config.output_dir : fs::path(out_dir);
      harness::run_experiment(config, dir, threads);
      std::cout << "experiment complete; reports under " << (dir / "reports").string()
                << std::endl;
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const CapabilityError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << std::endl;
    return kExitData;
  } catch (const TrainError& e) {
    std::cerr << "training error: " << e.what() << std::endl;
    return kExitTrain;
  } catch (const ShapeError& e) {
    std::cerr << "numeric error: " << e.what() << std::endl;
    return kExitTrain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitTrain;
  }
  return kExitConfig;
}
