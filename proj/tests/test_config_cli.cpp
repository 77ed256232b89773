#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "promobench/config.hpp"

using namespace promobench;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigDir = PROMOBENCH_CONFIG_DIR;
const std::string kExe = PROMOBENCH_EXE_PATH;

fs::path temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("promobench_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& text) {
  const fs::path file = dir / name;
  std::ofstream out(file);
  out << text;
  return file;
}

// Small but complete config used by the CLI round trips.
std::string small_config_text(uint64_t seed = 4321) {
  return R"({
  "global_seed": )" + std::to_string(seed) + R"(,
  "output_dir": "run_out",
  "gen": { "n_samples": 2000, "n_customers": 20, "n_campaigns": 10 },
  "split": { "mode": "random" },
  "train": { "batch_size": 256, "max_epochs": 3, "patience": 2 },
  "models": [
    { "name": "deep_v2", "kind": "deep", "deep_input_variant": 2, "hidden_widths": [8, 6] }
  ]
})";
}

int run_cli(const std::string& args, const fs::path& capture = {}) {
  std::string cmd = kExe + " " + args;
  if (!capture.empty()) cmd += " > " + capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("shipped paper_scale config parses to the study defaults") {
  const cfg::ExperimentConfig c = cfg::parse_config(kConfigDir / "paper_scale.json");
  CHECK(c.gen.n_samples == 10'000'000);
  CHECK(c.gen.n_customers == 1000);
  CHECK(c.gen.n_campaigns == 100);
  CHECK(c.gen.known_mean_range == std::array<double, 2>{-0.5, 0.5});
  CHECK(c.gen.customer_sd_caps == std::array<double, 2>{0.2, 0.3});
  CHECK(c.gen.customer_hidden_mean_range == std::array<double, 2>{-0.2, 0.2});
  CHECK(c.gen.customer_hidden_sd_cap == 0.1);
  CHECK(c.gen.campaign_sd_caps == std::array<double, 2>{0.1, 0.05});
  CHECK(c.gen.campaign_hidden_mean_range == std::array<double, 2>{-0.15, 0.15});
  CHECK(c.gen.campaign_hidden_sd_cap == 0.05);
  CHECK(c.gen.n_offers == 10);
  CHECK(c.split.fractions == std::array<double, 3>{0.6, 0.2, 0.2});

  bool found_v3 = false, found_wd = false, found_wide = false;
  for (const auto& m : c.models) {
    if (m.spec.name == "deep_v3") {
      found_v3 = true;
      CHECK(m.spec.hidden_widths == std::vector<int64_t>{512, 256, 128});
      CHECK(m.spec.user_embed_dim == 16);
      CHECK(m.spec.campaign_embed_dim == 7);
      CHECK(m.train.patience == 5);
      CHECK(m.train.lr == 0.001);
    }
    if (m.spec.name == "wide_deep") {
      found_wd = true;
      CHECK(m.spec.multihead_width == 128);
      CHECK(m.spec.multihead_dropout_p == 0.3);
      CHECK(m.train.patience == 10);
    }
    if (m.spec.name == "wide") {
      found_wide = true;
      CHECK(m.train.patience == 5);
      CHECK(models::expected_parameter_count(m.spec) == 1'000'000);
    }
  }
  CHECK(found_v3);
  CHECK(found_wd);
  CHECK(found_wide);

  bool found_ucb = false;
  for (const auto& b : c.bandits) {
    if (b.algorithm == bandit::Algorithm::kUcb) {
      found_ucb = true;
      CHECK(b.n_mc_passes == 100);
      CHECK(b.confidence_rank == 5);
      CHECK(b.dropout_p == 0.3);
    }
  }
  CHECK(found_ucb);
  REQUIRE(c.ablation.has_value());
  CHECK(c.ablation->customer_sd_caps == std::array<double, 2>{0.05, 0.1});
  CHECK(c.ablation->customer_hidden_sd_cap == 0.05);
}

TEST_CASE("shipped desk config parses and matches the desk recipe") {
  const cfg::ExperimentConfig c = cfg::parse_config(kConfigDir / "desk.json");
  CHECK(c.gen.n_samples == 400000);
  CHECK(c.gen.n_customers == 200);
  CHECK(c.gen.n_campaigns == 20);
  CHECK(c.models.size() == 8);
  int sequential = 0;
  for (const auto& m : c.models) {
    if (m.split_mode == harness::SplitSpec::Mode::kSequential) ++sequential;
  }
  CHECK(sequential == 2);
}

TEST_CASE("an empty config file lists every missing required key") {
  const auto dir = temp_dir("empty");
  const auto file = write_config(dir, "empty.json", "  \n");
  try {
    cfg::parse_config(file);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::set<std::string> missing;
    for (const auto& v : e.violations()) {
      for (const char* key : {"global_seed", "output_dir", "gen", "split", "models"}) {
        if (v.find(std::string("'") + key + "'") != std::string::npos) missing.insert(key);
      }
    }
    CHECK(missing.size() == 5);
  }
  fs::remove_all(dir);
}

TEST_CASE("unknown keys are rejected for typo protection") {
  const auto dir = temp_dir("typo");
  std::string text = small_config_text();
  text.replace(text.find("\"split\""), 7, "\"splt\"");
  const auto file = write_config(dir, "typo.json", text);
  try {
    cfg::parse_config(file);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    bool unknown = false, missing = false;
    for (const auto& v : e.violations()) {
      unknown |= v.find("unknown key 'splt'") != std::string::npos;
      missing |= v.find("missing required key 'split'") != std::string::npos;
    }
    CHECK(unknown);
    CHECK(missing);
  }
  fs::remove_all(dir);
}

TEST_CASE("a non-dividing campaign count yields one precise violation") {
  const auto dir = temp_dir("divide");
  std::string text = small_config_text();
  text.replace(text.find("\"n_campaigns\": 10"), 17, "\"n_campaigns\": 7");
  const auto file = write_config(dir, "divide.json", text);
  try {
    cfg::parse_config(file);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    REQUIRE(e.violations().size() == 1);
    CHECK(e.violations()[0].find("does not divide") != std::string::npos);
    CHECK(e.violations()[0].find("7") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("sub-seeds derive from the global seed when not set") {
  const auto dir = temp_dir("seeds");
  const auto file = write_config(dir, "cfg.json", small_config_text(555));
  const cfg::ExperimentConfig c = cfg::parse_config(file);
  CHECK(c.gen.seed == rng::component_seed(555, "gen"));
  CHECK(c.split.seed == rng::component_seed(555, "split"));
  CHECK(c.models[0].train.seed == rng::component_seed(555, "train/deep_v2"));
  fs::remove_all(dir);
}

TEST_CASE("cli: gen then verify exits 0 and reruns are byte-identical") {
  const auto dir = temp_dir("genverify");
  const auto file = write_config(dir, "cfg.json", small_config_text());
  const auto data = dir / "data";
  REQUIRE(run_cli("gen --config " + file.string() + " --out " + data.string(),
                  dir / "gen.log") == 0);
  CHECK(run_cli("verify --data " + data.string(), dir / "verify.log") == 0);
  const std::string first = slurp(data / "dataset.csv");
  REQUIRE(run_cli("gen --config " + file.string() + " --out " + data.string(),
                  dir / "gen2.log") == 0);
  CHECK(slurp(data / "dataset.csv") == first);
  fs::remove_all(dir);
}

TEST_CASE("cli: verify fails with exit 2 on a corrupted label") {
  const auto dir = temp_dir("corrupt");
  const auto file = write_config(dir, "cfg.json", small_config_text());
  const auto data = dir / "data";
  REQUIRE(run_cli("gen --config " + file.string() + " --out " + data.string(),
                  dir / "gen.log") == 0);
  // rewrite the last row's offer to a different valid value
  std::string csv = slurp(data / "dataset.csv");
  while (!csv.empty() && csv.back() == '\n') csv.pop_back();
  const auto pos = csv.find_last_of(',');
  const std::string offer = csv.substr(pos + 1);
  csv = csv.substr(0, pos + 1) + (offer == "2" ? "3" : "2") + "\n";
  std::ofstream(data / "dataset.csv", std::ios::binary | std::ios::trunc) << csv;
  CHECK(run_cli("verify --data " + data.string(), dir / "verify.log") == 2);
  fs::remove_all(dir);
}

TEST_CASE("cli: train on a missing dataset path exits 2 with a clear error") {
  const auto dir = temp_dir("missing");
  const auto file = write_config(dir, "cfg.json", small_config_text());
  const auto out = dir / "out.log";
  CHECK(run_cli("train --config " + file.string() + " --data " + (dir / "nope").string() +
                    " --model deep_v2 --out " + (dir / "ckpt").string(),
                out) == 2);
  const std::string log = slurp(out);
  CHECK(log.find("data error") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("cli: empty config exits 1 listing required keys") {
  const auto dir = temp_dir("emptycli");
  const auto file = write_config(dir, "empty.json", "");
  const auto out = dir / "out.log";
  CHECK(run_cli("gen --config " + file.string() + " --out " + (dir / "d").string(), out) == 1);
  const std::string log = slurp(out);
  for (const char* key : {"global_seed", "output_dir", "gen", "split", "models"}) {
    CHECK(log.find(key) != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("cli: train, eval and bandit-eval round-trip a checkpoint") {
  const auto dir = temp_dir("trainroundtrip");
  // wide&deep so bandit-eval has a multihead; tiny sizes keep it fast
  const std::string text = R"({
  "global_seed": 777,
  "output_dir": "unused",
  "gen": { "n_samples": 3000, "n_customers": 15, "n_campaigns": 6 },
  "split": { "mode": "random" },
  "train": { "batch_size": 256, "max_epochs": 4, "patience": 2 },
  "models": [
    { "name": "wd", "kind": "wide_deep", "hidden_widths": [8, 6], "multihead_width": 6 }
  ]
})";
  const auto file = write_config(dir, "cfg.json", text);
  const auto data = dir / "data";
  const auto ckpt_dir = dir / "ckpt";
  REQUIRE(run_cli("gen --config " + file.string() + " --out " + data.string(),
                  dir / "gen.log") == 0);
  REQUIRE(run_cli("train --config " + file.string() + " --data " + data.string() +
                      " --model wd --out " + ckpt_dir.string(),
                  dir / "train.log") == 0);
  CHECK(fs::exists(ckpt_dir / "wd.ckpt"));
  CHECK(fs::exists(ckpt_dir / "wd_training_log.csv"));
  CHECK(run_cli("eval --checkpoint " + (ckpt_dir / "wd.ckpt").string() + " --data " +
                    data.string(),
                dir / "eval.log") == 0);
  const std::string eval_log = slurp(dir / "eval.log");
  CHECK(eval_log.find("test: accuracy") != std::string::npos);
  CHECK(run_cli("bandit-eval --checkpoint " + (ckpt_dir / "wd.ckpt").string() + " --data " +
                    data.string() + " --algo ucb --passes 20 --rank 2 --seed 9",
                dir / "bandit.log") == 0);
  const std::string bandit_log = slurp(dir / "bandit.log");
  CHECK(bandit_log.find("bandit ucb") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("cli: bandit-eval on a model without a multihead exits 1") {
  const auto dir = temp_dir("nomultihead");
  const auto file = write_config(dir, "cfg.json", small_config_text());
  const auto data = dir / "data";
  const auto ckpt_dir = dir / "ckpt";
  REQUIRE(run_cli("gen --config " + file.string() + " --out " + data.string(),
                  dir / "gen.log") == 0);
  REQUIRE(run_cli("train --config " + file.string() + " --data " + data.string() +
                      " --model deep_v2 --out " + ckpt_dir.string(),
                  dir / "train.log") == 0);
  CHECK(run_cli("bandit-eval --checkpoint " + (ckpt_dir / "deep_v2.ckpt").string() + " --data " +
                    data.string() + " --algo ts",
                dir / "bandit.log") == 1);
  fs::remove_all(dir);
}
