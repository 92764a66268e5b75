// SPDX-License-Identifier: Apache-2.0
//
// Deterministic random number generation. Every consumer (data generation,
// parameter init, reparameterization draws, probes) gets its own stream
// derived from a single top-level seed, so runs are reproducible bit for bit.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace dsr {

// 64-bit mix used to derive per-consumer seeds from (root seed, tag).
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t hash_tag(std::string_view tag) {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// Seeded generator with explicit normal/uniform draws. Box-Muller is used for
// normals (with the usual spare cache) so the stream does not depend on the
// standard library's unspecified normal_distribution algorithm.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(splitmix64(seed)) {}

  // Independent stream for a named consumer of the same root seed.
  static Rng child(uint64_t root_seed, std::string_view tag) {
    return Rng(splitmix64(root_seed ^ hash_tag(tag)));
  }

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>(gen_() % static_cast<uint64_t>(n));
  }

  // Standard normal draw.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dsr
