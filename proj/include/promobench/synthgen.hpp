#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "promobench/common.hpp"
#include "promobench/rng.hpp"

namespace promobench::synth {

// Dataset recipe. Defaults are the full-scale study; desk runs shrink
// n_samples / n_customers / n_campaigns through the config file.
struct GenSpec {
  int64_t n_samples = 10'000'000;
  int64_t n_customers = 1000;
  int64_t n_campaigns = 100;  // must divide n_samples
  std::array<double, 2> known_mean_range = {-0.5, 0.5};
  std::array<double, 2> customer_sd_caps = {0.2, 0.3};
  std::array<double, 2> customer_hidden_mean_range = {-0.2, 0.2};
  double customer_hidden_sd_cap = 0.1;
  std::array<double, 2> campaign_sd_caps = {0.1, 0.05};
  std::array<double, 2> campaign_hidden_mean_range = {-0.15, 0.15};
  double campaign_hidden_sd_cap = 0.05;
  int64_t n_offers = 10;
  uint64_t seed = 0;

  void validate() const;  // throws ConfigError listing every offending field
};

// Fixed per-entity means and standard deviations; the ID -> (means, sds)
// tables realize the deterministic part of each entity's feature law.
struct EntityProfile {
  int64_t id = 0;
  double mean_f1 = 0, mean_f2 = 0, mean_hidden = 0;
  double sd_f1 = 0, sd_f2 = 0, sd_hidden = 0;
  double relative_frequency = 0;  // customers only; normalized over the table
};

struct ProfileTables {
  std::vector<EntityProfile> customers;
  std::vector<EntityProfile> campaigns;
};

// One labeled interaction row. Feature values are stored exactly as they
// round-trip through the CSV serialization, so the label is always
// recomputable from the stored values.
struct Sample {
  int64_t index = 0;
  int32_t user_id = 0;
  int32_t campaign_id = 0;
  double cust_f1 = 0, cust_f2 = 0, cust_hidden = 0;
  double camp_f1 = 0, camp_f2 = 0, camp_hidden = 0;
  int32_t offer = 0;  // 1..n_offers
};

struct Dataset {
  GenSpec spec;
  std::vector<Sample> rows;
};

struct GenSummary {
  int64_t n_rows = 0;
  std::vector<int64_t> offer_histogram;  // slot i = count of offer i+1
  int64_t customer_min_count = 0;
  int64_t customer_max_count = 0;
};

// --- substream layout (documented so alternate implementations agree) ---
// profile table stream: derive_seed(spec.seed, kProfileStream)
// row i stream:         derive_seed(derive_seed(spec.seed, kRowStream), i)
inline constexpr uint64_t kProfileStream = 1;
inline constexpr uint64_t kRowStream = 2;

// Uniformly samples all profile fields from the configured intervals; customer
// relative frequencies are drawn from (0,1) and normalized to sum to 1.
ProfileTables sample_profiles(const GenSpec& spec, rng::Xoshiro256pp& rng);

// Draws the six per-sample feature values from Normal(mean, sd) per profile.
// Order: customer f1, f2, hidden, then campaign f1, f2, hidden.
void draw_sample_features(const EntityProfile& customer, const EntityProfile& campaign,
                          rng::Xoshiro256pp& rng, std::array<double, 3>& c, std::array<double, 3>& p);

// Ground-truth label: 1 when the vectors are parallel (angle < 1e-9 rad),
// otherwise ceil(n_offers/pi * angle), with the cosine clamped to [-1, 1],
// a ceil of 0 mapped to 1, and the result capped at n_offers.
// Throws DataError when either magnitude is <= 1e-12 (the generator redraws).
int optimal_offer(const std::array<double, 3>& c, const std::array<double, 3>& p, int64_t n_offers);

inline constexpr double kDegenerateMagnitude = 1e-12;
inline constexpr double kParallelAngle = 1e-9;

// Serialization rule for reals in all CSV artifacts: 9 significant digits,
// shortest form ("%.9g"). round_real is the value that survives a round trip.
std::string format_real(double x);
double round_real(double x);

// Generates dataset.csv + profiles.csv under out_dir. Campaigns occupy
// contiguous index blocks of size n_samples/n_campaigns; customers are drawn
// i.i.d. per row from the normalized frequency distribution. Row content
// depends only on (seed, row index, profiles), so parallel and serial runs
// emit identical bytes.
GenSummary generate(const GenSpec& spec, const std::filesystem::path& out_dir, int n_threads = 0);

Dataset load_dataset(const std::filesystem::path& dataset_csv);
ProfileTables load_profiles(const std::filesystem::path& profiles_csv, GenSpec* spec_out = nullptr);

// Recomputes every row's label from its stored features.
struct VerifyResult {
  int64_t rows_checked = 0;
  int64_t mismatches = 0;
  std::vector<std::string> first_mismatches;  // at most 10 messages
};
VerifyResult verify_dataset(const Dataset& ds);

std::filesystem::path dataset_file(const std::filesystem::path& dir);
std::filesystem::path profiles_file(const std::filesystem::path& dir);

}  // namespace promobench::synth
