#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "promobench/models.hpp"

namespace promobench::ckpt {

// Checkpoint layout (version 1):
//   bytes 0..7   magic "PROMOBCK"
//   bytes 8..11  format version, little-endian uint32
//   bytes 12..19 header length H, little-endian uint64
//   H bytes      UTF-8 JSON header: {"format_version", "model" (ModelSpec),
//                "config_echo", "rng_state" (array of decimal strings),
//                "params": [{"name", "shape"}...]}
//   then per params[] entry, in order: flat little-endian IEEE-754 doubles.
inline constexpr uint32_t kCheckpointVersion = 1;

void save(const models::Model& m, const std::filesystem::path& file,
          const nlohmann::json& config_echo, const std::array<uint64_t, 4>& rng_state);

struct LoadedCheckpoint {
  models::Model model;
  nlohmann::json config_echo;
  std::array<uint64_t, 4> rng_state{};
};

LoadedCheckpoint load(const std::filesystem::path& file);

}  // namespace promobench::ckpt
