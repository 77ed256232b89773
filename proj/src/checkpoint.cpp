#include "promobench/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "promobench/config.hpp"

namespace promobench::ckpt {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'P', 'R', 'O', 'M', 'O', 'B', 'C', 'K'};

template <typename T>
void write_le(std::ofstream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    auto* bytes = reinterpret_cast<unsigned char*>(&value);
    std::reverse(bytes, bytes + sizeof(T));
  }
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big) {
    auto* bytes = reinterpret_cast<unsigned char*>(&value);
    std::reverse(bytes, bytes + sizeof(T));
  }
  return value;
}

void write_doubles_le(std::ofstream& out, const double* data, int64_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), count * static_cast<int64_t>(sizeof(double)));
  } else {
    for (int64_t i = 0; i < count; ++i) write_le(out, data[i]);
  }
}

void read_doubles_le(std::ifstream& in, double* data, int64_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(data), count * static_cast<int64_t>(sizeof(double)));
    if (!in) throw DataError("checkpoint truncated while reading parameter values");
  } else {
    for (int64_t i = 0; i < count; ++i) data[i] = read_le<double>(in);
  }
}

}  // namespace

void save(const models::Model& m, const std::filesystem::path& file,
          const json& config_echo, const std::array<uint64_t, 4>& rng_state) {
  json header;
  header["format_version"] = kCheckpointVersion;
  header["model"] = cfg::model_spec_json(m.spec);
  header["config_echo"] = config_echo;
  // 64-bit words as decimal strings: JSON numbers above 2^53 lose precision
  header["rng_state"] = json::array();
  for (uint64_t w : rng_state) header["rng_state"].push_back(std::to_string(w));
  header["params"] = json::array();
  for (const auto& p : m.graph.params) {
    header["params"].push_back({{"name", p.name}, {"shape", p.value.shape()}});
  }
  const std::string header_text = header.dump();

  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint file " + file.string() + " for writing");
  out.write(kMagic, sizeof(kMagic));
  write_le<uint32_t>(out, kCheckpointVersion);
  write_le<uint64_t>(out, header_text.size());
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const auto& p : m.graph.params) {
    write_doubles_le(out, p.value.data(), p.value.size());
  }
  out.close();
  if (!out) throw DataError("write failure on checkpoint " + file.string());
}

LoadedCheckpoint load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint file " + file.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a promobench checkpoint: " + file.string());
  }
  const auto version = read_le<uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = read_le<uint64_t>(in);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError("checkpoint truncated in header");
  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw DataError(std::string("bad checkpoint header JSON: ") + e.what());
  }

  LoadedCheckpoint out;
  const models::ModelSpec spec = cfg::model_spec_from_json(header.at("model"));
  // Rebuild the graph skeleton, then overwrite every parameter tensor.
  rng::Xoshiro256pp scratch_rng(0);
  out.model = models::build(spec, scratch_rng);
  out.config_echo = header.value("config_echo", json::object());
  if (header.contains("rng_state")) {
    const auto& arr = header.at("rng_state");
    for (size_t i = 0; i < 4 && i < arr.size(); ++i) {
      out.rng_state[i] = std::strtoull(arr[i].get<std::string>().c_str(), nullptr, 10);
    }
  }

  const auto& params = header.at("params");
  if (params.size() != out.model.graph.params.size()) {
    throw DataError("checkpoint parameter count mismatch: header has " +
                    std::to_string(params.size()) + ", spec builds " +
                    std::to_string(out.model.graph.params.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = out.model.graph.params[i];
    const std::string name = params[i].at("name").get<std::string>();
    const auto shape = params[i].at("shape").get<std::vector<int64_t>>();
    if (name != p.name || shape != p.value.shape()) {
      throw DataError("checkpoint parameter '" + name + "' does not match built graph slot '" +
                      p.name + "'");
    }
    read_doubles_le(in, p.value.data(), p.value.size());
  }
  return out;
}

}  // namespace promobench::ckpt
