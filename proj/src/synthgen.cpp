#include "promobench/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string_view>

namespace promobench::synth {

namespace {

constexpr const char* kDatasetHeader =
    "index,user_id,campaign_id,cust_f1,cust_f2,cust_hidden,camp_f1,camp_f2,camp_hidden,offer";

void check_interval(const std::array<double, 2>& iv, const char* field,
                    std::vector<std::string>& out) {
  if (!(iv[0] < iv[1])) {
    out.push_back(std::string(field) + ": empty interval [" + format_real(iv[0]) + ", " +
                  format_real(iv[1]) + ")");
  }
}

void check_cap(double cap, const char* field, std::vector<std::string>& out) {
  if (!(cap > 0.0)) out.push_back(std::string(field) + ": sd cap must be > 0");
}

}  // namespace

void GenSpec::validate() const {
  std::vector<std::string> v;
  if (n_samples <= 0) v.push_back("n_samples: must be positive");
  if (n_customers <= 0) v.push_back("n_customers: must be positive");
  if (n_campaigns <= 0) v.push_back("n_campaigns: must be positive");
  if (n_offers <= 0) v.push_back("n_offers: must be positive");
  if (n_campaigns > 0 && n_samples > 0 && n_samples % n_campaigns != 0) {
    v.push_back("n_campaigns: " + std::to_string(n_campaigns) + " does not divide n_samples " +
                std::to_string(n_samples));
  }
  check_interval(known_mean_range, "known_mean_range", v);
  check_interval(customer_hidden_mean_range, "customer_hidden_mean_range", v);
  check_interval(campaign_hidden_mean_range, "campaign_hidden_mean_range", v);
  check_cap(customer_sd_caps[0], "customer_sd_caps[0]", v);
  check_cap(customer_sd_caps[1], "customer_sd_caps[1]", v);
  check_cap(customer_hidden_sd_cap, "customer_hidden_sd_cap", v);
  check_cap(campaign_sd_caps[0], "campaign_sd_caps[0]", v);
  check_cap(campaign_sd_caps[1], "campaign_sd_caps[1]", v);
  check_cap(campaign_hidden_sd_cap, "campaign_hidden_sd_cap", v);
  if (!v.empty()) throw ConfigError(std::move(v));
}

std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return buf;
}

double round_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return std::strtod(buf, nullptr);
}

ProfileTables sample_profiles(const GenSpec& spec, rng::Xoshiro256pp& rng) {
  spec.validate();
  ProfileTables t;
  t.customers.reserve(static_cast<size_t>(spec.n_customers));
  double freq_sum = 0.0;
  for (int64_t i = 0; i < spec.n_customers; ++i) {
    EntityProfile p;
    p.id = i;
    p.mean_f1 = rng.uniform_open(spec.known_mean_range[0], spec.known_mean_range[1]);
    p.mean_f2 = rng.uniform_open(spec.known_mean_range[0], spec.known_mean_range[1]);
    p.mean_hidden =
        rng.uniform_open(spec.customer_hidden_mean_range[0], spec.customer_hidden_mean_range[1]);
    p.sd_f1 = rng.uniform_open(0.0, spec.customer_sd_caps[0]);
    p.sd_f2 = rng.uniform_open(0.0, spec.customer_sd_caps[1]);
    p.sd_hidden = rng.uniform_open(0.0, spec.customer_hidden_sd_cap);
    p.relative_frequency = rng.uniform_open(0.0, 1.0);
    freq_sum += p.relative_frequency;
    t.customers.push_back(p);
  }
  for (auto& c : t.customers) c.relative_frequency /= freq_sum;

  t.campaigns.reserve(static_cast<size_t>(spec.n_campaigns));
  for (int64_t i = 0; i < spec.n_campaigns; ++i) {
    EntityProfile p;
    p.id = i;
    p.mean_f1 = rng.uniform_open(spec.known_mean_range[0], spec.known_mean_range[1]);
    p.mean_f2 = rng.uniform_open(spec.known_mean_range[0], spec.known_mean_range[1]);
    p.mean_hidden =
        rng.uniform_open(spec.campaign_hidden_mean_range[0], spec.campaign_hidden_mean_range[1]);
    p.sd_f1 = rng.uniform_open(0.0, spec.campaign_sd_caps[0]);
    p.sd_f2 = rng.uniform_open(0.0, spec.campaign_sd_caps[1]);
    p.sd_hidden = rng.uniform_open(0.0, spec.campaign_hidden_sd_cap);
    t.campaigns.push_back(p);
  }
  return t;
}

void draw_sample_features(const EntityProfile& customer, const EntityProfile& campaign,
                          rng::Xoshiro256pp& rng, std::array<double, 3>& c,
                          std::array<double, 3>& p) {
  c[0] = rng.gaussian(customer.mean_f1, customer.sd_f1);
  c[1] = rng.gaussian(customer.mean_f2, customer.sd_f2);
  c[2] = rng.gaussian(customer.mean_hidden, customer.sd_hidden);
  p[0] = rng.gaussian(campaign.mean_f1, campaign.sd_f1);
  p[1] = rng.gaussian(campaign.mean_f2, campaign.sd_f2);
  p[2] = rng.gaussian(campaign.mean_hidden, campaign.sd_hidden);
}

int optimal_offer(const std::array<double, 3>& c, const std::array<double, 3>& p,
                  int64_t n_offers) {
  const double nc = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
  const double np = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
  if (nc <= kDegenerateMagnitude || np <= kDegenerateMagnitude) {
    throw DataError("optimal_offer: vector magnitude below " + format_real(kDegenerateMagnitude));
  }
  double cosang = (c[0] * p[0] + c[1] * p[1] + c[2] * p[2]) / (nc * np);
  cosang = std::clamp(cosang, -1.0, 1.0);
  const double angle = std::acos(cosang);
  if (angle < kParallelAngle) return 1;
  auto offer =
      static_cast<int64_t>(std::ceil(static_cast<double>(n_offers) * angle / std::numbers::pi));
  if (offer < 1) offer = 1;
  if (offer > n_offers) offer = n_offers;
  return static_cast<int>(offer);
}

namespace {

struct RowDraw {
  int32_t customer;
  std::array<double, 3> c;
  std::array<double, 3> p;
  int offer;
};

// Per-row feature draw: redraws on a (measure-zero) degenerate vector, and
// labels from the CSV-rounded values so the stored label is recomputable
// exactly from the stored text.
RowDraw draw_row(const GenSpec& spec, const ProfileTables& profiles,
                 const std::vector<double>& customer_cdf, int64_t campaign, uint64_t row_seed) {
  rng::Xoshiro256pp rng(row_seed);
  RowDraw out;
  const double u = rng.uniform01();
  const auto it = std::upper_bound(customer_cdf.begin(), customer_cdf.end(), u);
  out.customer = static_cast<int32_t>(
      std::min<int64_t>(it - customer_cdf.begin(), spec.n_customers - 1));
  const EntityProfile& cust = profiles.customers[static_cast<size_t>(out.customer)];
  const EntityProfile& camp = profiles.campaigns[static_cast<size_t>(campaign)];
  for (;;) {
    draw_sample_features(cust, camp, rng, out.c, out.p);
    for (auto& x : out.c) x = round_real(x);
    for (auto& x : out.p) x = round_real(x);
    const double nc = std::sqrt(out.c[0] * out.c[0] + out.c[1] * out.c[1] + out.c[2] * out.c[2]);
    const double np = std::sqrt(out.p[0] * out.p[0] + out.p[1] * out.p[1] + out.p[2] * out.p[2]);
    if (nc > kDegenerateMagnitude && np > kDegenerateMagnitude) break;
  }
  out.offer = optimal_offer(out.c, out.p, spec.n_offers);
  return out;
}

void append_row(std::string& buf, int64_t index, const RowDraw& row, int64_t campaign) {
  buf += std::to_string(index);
  buf += ',';
  buf += std::to_string(row.customer);
  buf += ',';
  buf += std::to_string(campaign);
  for (const double x : row.c) {
    buf += ',';
    buf += format_real(x);
  }
  for (const double x : row.p) {
    buf += ',';
    buf += format_real(x);
  }
  buf += ',';
  buf += std::to_string(row.offer);
  buf += '\n';
}

struct RangeStats {
  std::vector<int64_t> offers;
  std::vector<int64_t> customers;
};

}  // namespace

std::filesystem::path dataset_file(const std::filesystem::path& dir) { return dir / "dataset.csv"; }
std::filesystem::path profiles_file(const std::filesystem::path& dir) {
  return dir / "profiles.csv";
}

GenSummary generate(const GenSpec& spec, const std::filesystem::path& out_dir, int n_threads) {
  spec.validate();
  std::filesystem::create_directories(out_dir);

  rng::Xoshiro256pp profile_rng(rng::derive_seed(spec.seed, kProfileStream));
  const ProfileTables profiles = sample_profiles(spec, profile_rng);

  std::vector<double> cdf(static_cast<size_t>(spec.n_customers));
  double acc = 0.0;
  for (int64_t i = 0; i < spec.n_customers; ++i) {
    acc += profiles.customers[static_cast<size_t>(i)].relative_frequency;
    cdf[static_cast<size_t>(i)] = acc;
  }

  const int64_t block = spec.n_samples / spec.n_campaigns;
  const uint64_t row_base = rng::derive_seed(spec.seed, kRowStream);

  // Emit in fixed-size slices so memory stays bounded at full scale while the
  // byte stream stays independent of slice boundaries and thread count.
  constexpr int64_t kSliceRows = 1 << 20;
  const int workers = n_threads > 0 ? n_threads : default_thread_count();

  std::ofstream out(dataset_file(out_dir), std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + dataset_file(out_dir).string() + " for writing");
  out << kDatasetHeader << '\n';

  GenSummary summary;
  summary.n_rows = spec.n_samples;
  summary.offer_histogram.assign(static_cast<size_t>(spec.n_offers), 0);
  std::vector<int64_t> customer_counts(static_cast<size_t>(spec.n_customers), 0);

  for (int64_t slice_lo = 0; slice_lo < spec.n_samples; slice_lo += kSliceRows) {
    const int64_t slice_n = std::min(kSliceRows, spec.n_samples - slice_lo);
    const int64_t per = (slice_n + workers - 1) / workers;
    std::vector<std::string> bufs(static_cast<size_t>(workers));
    std::vector<RangeStats> stats(static_cast<size_t>(workers));

    parallel_for(
        static_cast<int64_t>(workers),
        [&](int64_t wlo, int64_t whi) {
          for (int64_t w = wlo; w < whi; ++w) {
            const int64_t lo = slice_lo + w * per;
            const int64_t hi = std::min(spec.n_samples, std::min(lo + per, slice_lo + slice_n));
            auto& buf = bufs[static_cast<size_t>(w)];
            auto& st = stats[static_cast<size_t>(w)];
            st.offers.assign(static_cast<size_t>(spec.n_offers), 0);
            st.customers.assign(static_cast<size_t>(spec.n_customers), 0);
            if (lo >= hi) continue;
            buf.reserve(static_cast<size_t>(hi - lo) * 96);
            for (int64_t i = lo; i < hi; ++i) {
              const int64_t campaign = i / block;
              const RowDraw row = draw_row(spec, profiles, cdf, campaign,
                                           rng::derive_seed(row_base, static_cast<uint64_t>(i)));
              append_row(buf, i, row, campaign);
              st.offers[static_cast<size_t>(row.offer - 1)] += 1;
              st.customers[static_cast<size_t>(row.customer)] += 1;
            }
          }
        },
        workers);

    for (int w = 0; w < workers; ++w) {
      out << bufs[static_cast<size_t>(w)];
      for (int64_t o = 0; o < spec.n_offers; ++o) {
        summary.offer_histogram[static_cast<size_t>(o)] += stats[static_cast<size_t>(w)].offers[static_cast<size_t>(o)];
      }
      for (int64_t c = 0; c < spec.n_customers; ++c) {
        customer_counts[static_cast<size_t>(c)] += stats[static_cast<size_t>(w)].customers[static_cast<size_t>(c)];
      }
    }
    if (!out) {
      throw DataError("write failure while generating " + dataset_file(out_dir).string() +
                      " (partial output left in place)");
    }
  }
  out.close();
  if (!out) throw DataError("close failure on " + dataset_file(out_dir).string());

  summary.customer_min_count = *std::min_element(customer_counts.begin(), customer_counts.end());
  summary.customer_max_count = *std::max_element(customer_counts.begin(), customer_counts.end());

  // Sidecar: seed + full spec echo, then one row per profile.
  std::ofstream prof(profiles_file(out_dir), std::ios::binary | std::ios::trunc);
  if (!prof) throw DataError("cannot open " + profiles_file(out_dir).string() + " for writing");
  prof << "# genspec: n_samples=" << spec.n_samples << " n_customers=" << spec.n_customers
       << " n_campaigns=" << spec.n_campaigns << " known_mean_range=["
       << format_real(spec.known_mean_range[0]) << ',' << format_real(spec.known_mean_range[1])
       << "] customer_sd_caps=[" << format_real(spec.customer_sd_caps[0]) << ','
       << format_real(spec.customer_sd_caps[1]) << "] customer_hidden_mean_range=["
       << format_real(spec.customer_hidden_mean_range[0]) << ','
       << format_real(spec.customer_hidden_mean_range[1]) << "] customer_hidden_sd_cap="
       << format_real(spec.customer_hidden_sd_cap) << " campaign_sd_caps=["
       << format_real(spec.campaign_sd_caps[0]) << ',' << format_real(spec.campaign_sd_caps[1])
       << "] campaign_hidden_mean_range=[" << format_real(spec.campaign_hidden_mean_range[0])
       << ',' << format_real(spec.campaign_hidden_mean_range[1]) << "] campaign_hidden_sd_cap="
       << format_real(spec.campaign_hidden_sd_cap) << " n_offers=" << spec.n_offers
       << " seed=" << spec.seed << '\n';
  prof << "entity,id,mean_f1,mean_f2,mean_hidden,sd_f1,sd_f2,sd_hidden,relative_frequency\n";
  for (const auto& c : profiles.customers) {
    prof << "customer," << c.id << ',' << format_real(c.mean_f1) << ',' << format_real(c.mean_f2)
         << ',' << format_real(c.mean_hidden) << ',' << format_real(c.sd_f1) << ','
         << format_real(c.sd_f2) << ',' << format_real(c.sd_hidden) << ','
         << format_real(c.relative_frequency) << '\n';
  }
  for (const auto& c : profiles.campaigns) {
    prof << "campaign," << c.id << ',' << format_real(c.mean_f1) << ',' << format_real(c.mean_f2)
         << ',' << format_real(c.mean_hidden) << ',' << format_real(c.sd_f1) << ','
         << format_real(c.sd_f2) << ',' << format_real(c.sd_hidden) << ",0\n";
  }
  prof.close();
  if (!prof) throw DataError("write failure on " + profiles_file(out_dir).string());
  return summary;
}

namespace {

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  size_t start = 0;
  for (size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      fields.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return fields;
}

double parse_real(std::string_view f, const char* what, int64_t line_no) {
  char* end = nullptr;
  std::string tmp(f);
  const double v = std::strtod(tmp.c_str(), &end);
  if (end == tmp.c_str() || *end != '\0') {
    throw DataError(std::string("bad ") + what + " at dataset line " + std::to_string(line_no) +
                    ": '" + tmp + "'");
  }
  return v;
}

int64_t parse_int(std::string_view f, const char* what, int64_t line_no) {
  char* end = nullptr;
  std::string tmp(f);
  const long long v = std::strtoll(tmp.c_str(), &end, 10);
  if (end == tmp.c_str() || *end != '\0') {
    throw DataError(std::string("bad ") + what + " at dataset line " + std::to_string(line_no) +
                    ": '" + tmp + "'");
  }
  return v;
}

// Reads the "# genspec: key=value ..." sidecar echo back into a GenSpec.
void parse_genspec_echo(const std::string& line, GenSpec& spec) {
  auto find_scalar = [&](const char* key) -> std::optional<std::string> {
    const std::string needle = std::string(key) + "=";
    const auto pos = line.find(needle);
    if (pos == std::string::npos) return std::nullopt;
    const size_t start = pos + needle.size();
    size_t end = line.find(' ', start);
    if (end == std::string::npos) end = line.size();
    return line.substr(start, end - start);
  };
  auto get_i = [&](const char* key, int64_t& out) {
    if (auto s = find_scalar(key)) out = std::strtoll(s->c_str(), nullptr, 10);
  };
  auto get_u = [&](const char* key, uint64_t& out) {
    if (auto s = find_scalar(key)) out = std::strtoull(s->c_str(), nullptr, 10);
  };
  auto get_d = [&](const char* key, double& out) {
    if (auto s = find_scalar(key)) out = std::strtod(s->c_str(), nullptr);
  };
  auto get_pair = [&](const char* key, std::array<double, 2>& out) {
    if (auto s = find_scalar(key)) {
      double a = 0, b = 0;
      if (std::sscanf(s->c_str(), "[%lf,%lf]", &a, &b) == 2) out = {a, b};
    }
  };
  get_i("n_samples", spec.n_samples);
  get_i("n_customers", spec.n_customers);
  get_i("n_campaigns", spec.n_campaigns);
  get_pair("known_mean_range", spec.known_mean_range);
  get_pair("customer_sd_caps", spec.customer_sd_caps);
  get_pair("customer_hidden_mean_range", spec.customer_hidden_mean_range);
  get_d("customer_hidden_sd_cap", spec.customer_hidden_sd_cap);
  get_pair("campaign_sd_caps", spec.campaign_sd_caps);
  get_pair("campaign_hidden_mean_range", spec.campaign_hidden_mean_range);
  get_d("campaign_hidden_sd_cap", spec.campaign_hidden_sd_cap);
  get_i("n_offers", spec.n_offers);
  get_u("seed", spec.seed);
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dataset_csv) {
  std::ifstream in(dataset_csv, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file " + dataset_csv.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty dataset file " + dataset_csv.string());
  if (line != kDatasetHeader) {
    throw DataError("unexpected dataset header in " + dataset_csv.string() + ": '" + line + "'");
  }
  Dataset ds;
  int64_t line_no = 1;
  int64_t max_user = -1, max_campaign = -1;
  int32_t max_offer = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 10) {
      throw DataError("expected 10 fields at dataset line " + std::to_string(line_no) + ", got " +
                      std::to_string(f.size()));
    }
    Sample s;
    s.index = parse_int(f[0], "index", line_no);
    s.user_id = static_cast<int32_t>(parse_int(f[1], "user_id", line_no));
    s.campaign_id = static_cast<int32_t>(parse_int(f[2], "campaign_id", line_no));
    s.cust_f1 = parse_real(f[3], "cust_f1", line_no);
    s.cust_f2 = parse_real(f[4], "cust_f2", line_no);
    s.cust_hidden = parse_real(f[5], "cust_hidden", line_no);
    s.camp_f1 = parse_real(f[6], "camp_f1", line_no);
    s.camp_f2 = parse_real(f[7], "camp_f2", line_no);
    s.camp_hidden = parse_real(f[8], "camp_hidden", line_no);
    s.offer = static_cast<int32_t>(parse_int(f[9], "offer", line_no));
    if (s.user_id < 0 || s.campaign_id < 0 || s.offer < 1) {
      throw DataError("out-of-range ids/offer at dataset line " + std::to_string(line_no));
    }
    max_user = std::max<int64_t>(max_user, s.user_id);
    max_campaign = std::max<int64_t>(max_campaign, s.campaign_id);
    max_offer = std::max(max_offer, s.offer);
    ds.rows.push_back(s);
  }
  if (ds.rows.empty()) throw DataError("dataset has no rows: " + dataset_csv.string());
  ds.spec.n_samples = static_cast<int64_t>(ds.rows.size());
  ds.spec.n_customers = max_user + 1;
  ds.spec.n_campaigns = max_campaign + 1;
  ds.spec.n_offers = std::max<int64_t>(10, max_offer);
  ds.spec.seed = 0;
  return ds;
}

ProfileTables load_profiles(const std::filesystem::path& profiles_csv, GenSpec* spec_out) {
  std::ifstream in(profiles_csv, std::ios::binary);
  if (!in) throw DataError("cannot open profiles file " + profiles_csv.string());
  ProfileTables t;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (spec_out != nullptr && line.rfind("# genspec: ", 0) == 0) {
        parse_genspec_echo(line, *spec_out);
      }
      continue;
    }
    if (line.rfind("entity,", 0) == 0) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 9) {
      throw DataError("expected 9 fields at profiles line " + std::to_string(line_no));
    }
    EntityProfile p;
    p.id = parse_int(f[1], "id", line_no);
    p.mean_f1 = parse_real(f[2], "mean_f1", line_no);
    p.mean_f2 = parse_real(f[3], "mean_f2", line_no);
    p.mean_hidden = parse_real(f[4], "mean_hidden", line_no);
    p.sd_f1 = parse_real(f[5], "sd_f1", line_no);
    p.sd_f2 = parse_real(f[6], "sd_f2", line_no);
    p.sd_hidden = parse_real(f[7], "sd_hidden", line_no);
    p.relative_frequency = parse_real(f[8], "relative_frequency", line_no);
    if (f[0] == "customer") {
      t.customers.push_back(p);
    } else if (f[0] == "campaign") {
      t.campaigns.push_back(p);
    } else {
      throw DataError("unknown entity kind at profiles line " + std::to_string(line_no));
    }
  }
  return t;
}

VerifyResult verify_dataset(const Dataset& ds) {
  VerifyResult r;
  r.rows_checked = static_cast<int64_t>(ds.rows.size());
  for (const Sample& s : ds.rows) {
    const std::array<double, 3> c = {s.cust_f1, s.cust_f2, s.cust_hidden};
    const std::array<double, 3> p = {s.camp_f1, s.camp_f2, s.camp_hidden};
    const int expected = optimal_offer(c, p, ds.spec.n_offers);
    if (expected != s.offer) {
      r.mismatches += 1;
      if (r.first_mismatches.size() < 10) {
        r.first_mismatches.push_back("row " + std::to_string(s.index) + ": stored offer " +
                                     std::to_string(s.offer) + ", recomputed " +
                                     std::to_string(expected));
      }
    }
  }
  return r;
}

}  // namespace promobench::synth
