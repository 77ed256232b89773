#include "promobench/experiment.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "promobench/checkpoint.hpp"

namespace promobench::harness {

namespace {

using synth::format_real;

std::string acc_str(double x) { return format_real(x); }

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + file.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw DataError("write failure on " + file.string());
}

std::string confusion_csv(const SplitEval& ev, int64_t n_offers, const std::string& echo) {
  std::ostringstream os;
  os << "# config: " << echo << '\n';
  os << "true_offer";
  for (int64_t c = 1; c <= n_offers; ++c) os << ",pred_" << c;
  os << '\n';
  for (int64_t r = 0; r < n_offers; ++r) {
    os << (r + 1);
    for (int64_t c = 0; c < n_offers; ++c) {
      os << ',' << ev.confusion[static_cast<size_t>(r * n_offers + c)];
    }
    os << '\n';
  }
  return os.str();
}

std::string training_log_csv(const TrainResult& tr, const std::string& echo) {
  std::ostringstream os;
  os << "# config: " << echo << '\n';
  os << "epoch,train_loss,train_acc,valid_loss,valid_acc\n";
  for (const auto& e : tr.log) {
    os << e.epoch << ',' << format_real(e.train_loss) << ',' << format_real(e.train_acc) << ','
       << format_real(e.valid_loss) << ',' << format_real(e.valid_acc) << '\n';
  }
  return os.str();
}

std::string table_row(const EvalReport& r) {
  std::ostringstream os;
  os << r.model_name << ',' << r.split_mode << ',' << acc_str(r.train.accuracy) << ','
     << acc_str(r.valid.accuracy) << ',' << acc_str(r.test.accuracy) << ','
     << acc_str(r.test.within_one) << ',' << r.epochs_trained << '\n';
  return os.str();
}

constexpr const char* kTableHeader =
    "model,split_mode,train_acc,valid_acc,test_acc,test_within_one,epochs_trained\n";

double pct(double x) { return 100.0 * x; }

std::string pct_str(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", pct(x));
  return buf;
}

// Reads a report CSV back as rows of fields, skipping '#' comment lines.
std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open report file " + file.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

void render_summary(const std::filesystem::path& run_dir) {
  const auto reports = run_dir / "reports";
  std::ostringstream md;
  md << "# promobench run summary\n\n";

  const auto table1 = reports / "table1_models.csv";
  if (std::filesystem::exists(table1)) {
    md << "## Model accuracy (random split)\n\n";
    md << "| Model | Split | Train % | Valid % | Test % | Test within-1 % | Epochs |\n";
    md << "|---|---|---|---|---|---|---|\n";
    for (const auto& row : read_csv_rows(table1)) {
      if (row.size() < 7 || row[0] == "model") continue;
      md << "| " << row[0] << " | " << row[1] << " | " << pct_str(std::stod(row[2])) << " | "
         << pct_str(std::stod(row[3])) << " | " << pct_str(std::stod(row[4])) << " | "
         << pct_str(std::stod(row[5])) << " | " << row[6] << " |\n";
    }
    md << '\n';
  }

  const auto table2 = reports / "table2_sequential.csv";
  if (std::filesystem::exists(table2)) {
    md << "## Sequential split (held-out campaigns)\n\n";
    md << "| Model | Split | Train % | Valid % | Test % | Test within-1 % | Epochs |\n";
    md << "|---|---|---|---|---|---|---|\n";
    for (const auto& row : read_csv_rows(table2)) {
      if (row.size() < 7 || row[0] == "model") continue;
      md << "| " << row[0] << " | " << row[1] << " | " << pct_str(std::stod(row[2])) << " | "
         << pct_str(std::stod(row[3])) << " | " << pct_str(std::stod(row[4])) << " | "
         << pct_str(std::stod(row[5])) << " | " << row[6] << " |\n";
    }
    md << '\n';
  }

  const auto table3 = reports / "table3_bandit.csv";
  if (std::filesystem::exists(table3)) {
    md << "## Bandit action selection\n\n";
    md << "| Algorithm | Model | Passes | Rank | Dropout p | Train % | Valid % | Test % |\n";
    md << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& row : read_csv_rows(table3)) {
      if (row.size() < 8 || row[0] == "algorithm") continue;
      md << "| " << row[0] << " | " << row[1] << " | " << row[2] << " | " << row[3] << " | "
         << row[4] << " | " << pct_str(std::stod(row[5])) << " | " << pct_str(std::stod(row[6]))
         << " | " << pct_str(std::stod(row[7])) << " |\n";
    }
    md << '\n';
  }

  const auto ablation = reports / "ablation.csv";
  if (std::filesystem::exists(ablation)) {
    md << "## Reduced-variance ablation\n\n";
    md << "| Run | Model | Test % |\n|---|---|---|\n";
    for (const auto& row : read_csv_rows(ablation)) {
      if (row.size() < 3 || row[0] == "run") continue;
      md << "| " << row[0] << " | " << row[1] << " | " << pct_str(std::stod(row[2])) << " |\n";
    }
    md << '\n';
  }

  const auto timings = reports / "timings.csv";
  if (std::filesystem::exists(timings)) {
    md << "## Wall-clock timings\n\n| Stage | Seconds |\n|---|---|\n";
    for (const auto& row : read_csv_rows(timings)) {
      if (row.size() < 2 || row[0] == "stage") continue;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.1f", std::stod(row[1]));
      md << "| " << row[0] << " | " << buf << " |\n";
    }
    md << '\n';
  }

  write_text(reports / "summary.md", md.str());
}

ExperimentResult run_experiment(const cfg::ExperimentConfig& config,
                                const std::filesystem::path& run_dir, int n_threads,
                                bool quiet) {
  ExperimentResult result;
  result.run_dir = run_dir;
  const std::string echo = cfg::echo_line(config);
  auto info = [&](const std::string& msg) {
    if (!quiet) std::cout << "[promobench] " << msg << std::endl;
  };

  std::filesystem::create_directories(run_dir);
  std::filesystem::create_directories(run_dir / "reports");
  std::filesystem::create_directories(run_dir / "checkpoints");
  std::filesystem::create_directories(run_dir / "logs");
  write_text(run_dir / "config_echo.json", echo + "\n");

  std::vector<std::pair<std::string, double>> timings;
  auto timed = [&](const std::string& stage, const std::function<void()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    timings.emplace_back(
        stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  };

  // --- dataset ---
  const auto data_dir = run_dir / "dataset";
  timed("generate", [&] {
    info("generating dataset (" + std::to_string(config.gen.n_samples) + " rows)");
    result.gen_summary = synth::generate(config.gen, data_dir, n_threads);
  });
  synth::Dataset ds;
  timed("load", [&] {
    ds = synth::load_dataset(synth::dataset_file(data_dir));
    ds.spec = config.gen;
  });

  const int64_t n_rows = static_cast<int64_t>(ds.rows.size());
  harness::SplitSpec random_split = config.split;
  random_split.mode = SplitSpec::Mode::kRandom;
  harness::SplitSpec sequential_split = config.split;
  sequential_split.mode = SplitSpec::Mode::kSequential;
  const Splits random_splits = split(n_rows, random_split);
  const Splits sequential_splits = split(n_rows, sequential_split);
  auto splits_for = [&](SplitSpec::Mode mode) -> const Splits& {
    return mode == SplitSpec::Mode::kRandom ? random_splits : sequential_splits;
  };

  // --- random baseline ---
  {
    const uint64_t seed = rng::component_seed(config.global_seed, "baseline");
    EvalReport baseline;
    baseline.model_name = "random";
    baseline.split_mode = split_mode_name(config.split.mode);
    const Splits& sp = splits_for(config.split.mode);
    int slot = 0;
    for (const auto* idx : {&sp.train, &sp.valid, &sp.test}) {
      rng::Xoshiro256pp rng(rng::derive_seed(seed, static_cast<uint64_t>(slot)));
      SplitEval ev = evaluate_with(ds, *idx, config.gen.n_offers, [&](const synth::Sample&) {
        return static_cast<int32_t>(rng.next() % static_cast<uint64_t>(config.gen.n_offers)) + 1;
      });
      (slot == 0 ? baseline.train : slot == 1 ? baseline.valid : baseline.test) = ev;
      ++slot;
    }
    result.model_reports.push_back(std::move(baseline));
  }

  // --- configured models ---
  std::map<std::string, models::Model> trained;
  for (const auto& entry : config.models) {
    info("training " + entry.spec.name);
    rng::Xoshiro256pp init_rng(rng::component_seed(config.global_seed, "init/" + entry.spec.name));
    models::Model model = models::build(entry.spec, init_rng);
    const Splits& sp = splits_for(entry.split_mode);
    TrainResult tr;
    try {
      timed("train/" + entry.spec.name, [&] { tr = train(model, ds, sp, entry.train); });
    } catch (const TrainError&) {
      // preserve the last finite state for post-mortem before propagating
      ckpt::save(model, run_dir / "checkpoints" / (entry.spec.name + ".ckpt"), config.echo,
                 rng::Xoshiro256pp(entry.train.seed).state());
      throw;
    }
    write_text(run_dir / "logs" / (entry.spec.name + "_training_log.csv"),
               training_log_csv(tr, echo));
    ckpt::save(model, run_dir / "checkpoints" / (entry.spec.name + ".ckpt"), config.echo,
               rng::Xoshiro256pp(entry.train.seed).state());

    EvalReport report;
    report.model_name = entry.spec.name;
    report.split_mode = split_mode_name(entry.split_mode);
    report.epochs_trained = tr.epochs_trained;
    report.wall_seconds = tr.wall_seconds;
    timed("evaluate/" + entry.spec.name, [&] {
      report.train = evaluate(model, ds, sp.train);
      report.valid = evaluate(model, ds, sp.valid);
      report.test = evaluate(model, ds, sp.test);
    });
    info("  " + entry.spec.name + " test acc " + pct_str(report.test.accuracy) + "% after " +
         std::to_string(tr.epochs_trained) + " epochs");
    write_text(run_dir / "reports" / ("confusion_" + entry.spec.name + ".csv"),
               confusion_csv(report.test, config.gen.n_offers, echo));
    result.model_reports.push_back(report);
    trained.emplace(entry.spec.name, std::move(model));
  }

  // --- bandit policies ---
  for (const auto& bc : config.bandits) {
    info("bandit " + bandit::algorithm_name(bc.algorithm) + " on " + bc.model_name);
    auto it = trained.find(bc.model_name);
    if (it == trained.end()) throw ConfigError("bandit model '" + bc.model_name + "' not trained");
    models::Model& model = it->second;
    const SplitSpec::Mode mode = [&] {
      for (const auto& entry : config.models) {
        if (entry.spec.name == bc.model_name) return entry.split_mode;
      }
      return config.split.mode;
    }();
    const Splits& sp = splits_for(mode);
    BanditRow row;
    row.algorithm = bandit::algorithm_name(bc.algorithm);
    row.model_name = bc.model_name;
    row.n_mc_passes = bc.n_mc_passes;
    row.confidence_rank = bc.confidence_rank;
    row.dropout_p = bc.dropout_p;
    timed("bandit/" + row.algorithm, [&] {
      row.train_acc = bandit::evaluate_policy(model, ds, sp.train, bc, n_threads).accuracy;
      row.valid_acc = bandit::evaluate_policy(model, ds, sp.valid, bc, n_threads).accuracy;
      row.test_acc = bandit::evaluate_policy(model, ds, sp.test, bc, n_threads).accuracy;
    });
    info("  " + row.algorithm + " test acc " + pct_str(row.test_acc) + "%");
    result.bandit_rows.push_back(std::move(row));
  }

  // --- reduced-variance ablation ---
  if (config.ablation) {
    const auto& ab = *config.ablation;
    info("ablation rerun of " + ab.model_name + " with reduced customer variance");
    synth::GenSpec ab_gen = config.gen;
    ab_gen.customer_sd_caps = ab.customer_sd_caps;
    ab_gen.customer_hidden_sd_cap = ab.customer_hidden_sd_cap;
    ab_gen.seed = rng::component_seed(config.global_seed, "gen/ablation");
    const auto ab_dir = run_dir / "ablation_dataset";
    timed("ablation/generate", [&] { synth::generate(ab_gen, ab_dir, n_threads); });
    synth::Dataset ab_ds = synth::load_dataset(synth::dataset_file(ab_dir));
    ab_ds.spec = ab_gen;

    const cfg::ModelEntry* entry = nullptr;
    for (const auto& e : config.models) {
      if (e.spec.name == ab.model_name) entry = &e;
    }
    if (entry == nullptr) throw ConfigError("ablation model '" + ab.model_name + "' not found");

    models::ModelSpec ab_spec = entry->spec;
    ab_spec.name = entry->spec.name + "_lowvar";
    rng::Xoshiro256pp init_rng(rng::component_seed(config.global_seed, "init/" + ab_spec.name));
    models::Model model = models::build(ab_spec, init_rng);
    TrainSpec ab_train = entry->train;
    ab_train.seed = rng::component_seed(config.global_seed, "train/" + ab_spec.name);
    const Splits ab_splits = split(static_cast<int64_t>(ab_ds.rows.size()),
                                   entry->split_mode == SplitSpec::Mode::kRandom
                                       ? random_split
                                       : sequential_split);
    TrainResult tr;
    timed("ablation/train", [&] { tr = train(model, ab_ds, ab_splits, ab_train); });
    write_text(run_dir / "logs" / (ab_spec.name + "_training_log.csv"), training_log_csv(tr, echo));
    ckpt::save(model, run_dir / "checkpoints" / (ab_spec.name + ".ckpt"), config.echo,
               rng::Xoshiro256pp(ab_train.seed).state());

    EvalReport ab_report;
    ab_report.model_name = ab_spec.name;
    ab_report.split_mode = split_mode_name(entry->split_mode);
    ab_report.epochs_trained = tr.epochs_trained;
    ab_report.wall_seconds = tr.wall_seconds;
    ab_report.train = evaluate(model, ab_ds, ab_splits.train);
    ab_report.valid = evaluate(model, ab_ds, ab_splits.valid);
    ab_report.test = evaluate(model, ab_ds, ab_splits.test);
    info("  " + ab_spec.name + " test acc " + pct_str(ab_report.test.accuracy) + "%");

    const EvalReport* base = nullptr;
    for (const auto& r : result.model_reports) {
      if (r.model_name == ab.model_name) base = &r;
    }
    result.ablation = std::make_pair(*base, ab_report);
  }

  // --- report files ---
  {
    std::ostringstream t1, t2;
    t1 << "# config: " << echo << '\n' << kTableHeader;
    t2 << "# config: " << echo << '\n' << kTableHeader;
    bool any_sequential = false;
    for (const auto& r : result.model_reports) {
      if (r.split_mode == "sequential" && r.model_name != "random") {
        t2 << table_row(r);
        any_sequential = true;
      } else {
        t1 << table_row(r);
      }
    }
    write_text(run_dir / "reports" / "table1_models.csv", t1.str());
    if (any_sequential) write_text(run_dir / "reports" / "table2_sequential.csv", t2.str());

    if (!result.bandit_rows.empty()) {
      std::ostringstream t3;
      t3 << "# config: " << echo << '\n'
         << "algorithm,model,n_mc_passes,confidence_rank,dropout_p,train_acc,valid_acc,test_acc\n";
      for (const auto& b : result.bandit_rows) {
        t3 << b.algorithm << ',' << b.model_name << ',' << b.n_mc_passes << ','
           << b.confidence_rank << ',' << format_real(b.dropout_p) << ',' << acc_str(b.train_acc)
           << ',' << acc_str(b.valid_acc) << ',' << acc_str(b.test_acc) << '\n';
      }
      write_text(run_dir / "reports" / "table3_bandit.csv", t3.str());
    }

    if (result.ablation) {
      std::ostringstream ta;
      ta << "# config: " << echo << '\n' << "run,model,test_acc\n";
      ta << "default_variance," << result.ablation->first.model_name << ','
         << acc_str(result.ablation->first.test.accuracy) << '\n';
      ta << "reduced_variance," << result.ablation->second.model_name << ','
         << acc_str(result.ablation->second.test.accuracy) << '\n';
      write_text(run_dir / "reports" / "ablation.csv", ta.str());
    }

    std::ostringstream gs;
    gs << "# config: " << echo << '\n' << "metric,value\n";
    gs << "n_rows," << result.gen_summary.n_rows << '\n';
    gs << "customer_min_count," << result.gen_summary.customer_min_count << '\n';
    gs << "customer_max_count," << result.gen_summary.customer_max_count << '\n';
    for (size_t i = 0; i < result.gen_summary.offer_histogram.size(); ++i) {
      gs << "offer_" << (i + 1) << "_count," << result.gen_summary.offer_histogram[i] << '\n';
    }
    write_text(run_dir / "reports" / "gen_summary.csv", gs.str());

    // timings are wall-clock and intentionally live outside the
    // byte-reproducible artifact set
    std::ostringstream tt;
    tt << "stage,seconds\n";
    for (const auto& [stage, secs] : timings) tt << stage << ',' << format_real(secs) << '\n';
    write_text(run_dir / "reports" / "timings.csv", tt.str());
  }
  render_summary(run_dir);
  return result;
}

}  // namespace promobench::harness
