#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

namespace promobench::rng {

// splitmix64 finalizer (Steele, Lea & Flood). Used both as the seed expander
// for xoshiro and as the hash behind the seed-derivation rules below.
constexpr uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Canonical substream rule: fold one 64-bit word into a base seed.
// Chains left to right, e.g. derive_seed(derive_seed(seed, tag), index).
// Alternate implementations must use the same rule to reproduce our streams.
constexpr uint64_t derive_seed(uint64_t base, uint64_t word) { return mix64(mix64(base) ^ word); }

constexpr uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<uint8_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

// Sub-seed for a named component: derive_seed(global_seed, fnv1a64(name)).
constexpr uint64_t component_seed(uint64_t global_seed, std::string_view name) {
  return derive_seed(global_seed, fnv1a64(name));
}

// xoshiro256++ 1.0 (Blackman & Vigna, public domain reference implementation),
// seeded from one 64-bit value by four successive splitmix64 outputs.
class Xoshiro256pp {
 public:
  explicit Xoshiro256pp(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& w : s_) {
      sm += 0x9e3779b97f4a7c15ULL;
      uint64_t z = sm;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      w = z ^ (z >> 31);
    }
  }

  uint64_t next() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform on the open interval (lo, hi); rejects the u == 0 lattice point.
  double uniform_open(double lo, double hi) {
    double u;
    do {
      u = uniform01();
    } while (u == 0.0);
    return lo + u * (hi - lo);
  }

  // Marsaglia polar method; the spare deviate is discarded so one call
  // consumes a self-contained, reproducible slice of the stream.
  double gaussian(double mean, double sd) {
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    return mean + sd * (u * std::sqrt(-2.0 * std::log(s) / s));
  }

  std::array<uint64_t, 4> state() const { return {s_[0], s_[1], s_[2], s_[3]}; }
  void set_state(const std::array<uint64_t, 4>& st) {
    for (int i = 0; i < 4; ++i) s_[i] = st[i];
  }

 private:
  static constexpr uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

}  // namespace promobench::rng
