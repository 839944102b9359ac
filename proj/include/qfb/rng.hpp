#pragma once

// Reproducible random streams.
//
// Each trajectory owns a std::mt19937_64 (whose output sequence is fixed by
// the C++ standard) seeded with
//
//   seed(master, i) = splitmix64(master + 0x9E3779B97F4A7C15 * (i + 1))
//
// Uniform variates are the top 53 bits scaled by 2^-53, so they lie in
// [0, 1) and do not depend on the standard library's distribution classes.

#include <cstdint>
#include <random>

namespace qfb {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) {
  return splitmix64(master_seed + 0x9E3779B97F4A7C15ULL * (index + 1));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace qfb
