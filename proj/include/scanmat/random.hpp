#pragma once

#include <cstdint>
#include <cstring>

namespace scanmat {

// Deterministic, platform-independent generators. All randomness in the
// toolkit flows from one base seed through named sub-seeds so partial
// regeneration of a dataset is stable.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Mixes a seed with a stream tag; used to derive independent sub-seeds.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL + tag * 0xd1b54a32d192ed03ULL);
  splitmix64(s);
  return splitmix64(s);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed ^ 0x853c49e6748fea9bULL) {
    next_u64();
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) {
    return n == 0 ? 0 : next_u64() % n;
  }

 private:
  std::uint64_t state_;
};

// Stateless lattice hash for procedural noise; stable across platforms.
inline double hash_to_unit(std::uint64_t seed, std::int64_t x, std::int64_t y,
                           std::uint64_t tag = 0) {
  std::uint64_t s = seed;
  s = derive_seed(s, static_cast<std::uint64_t>(x) * 0x2545f4914f6cdd1dULL + 0x9e3779b9ULL);
  s = derive_seed(s, static_cast<std::uint64_t>(y) * 0x9e3779b97f4a7c15ULL + 0x85ebca6bULL);
  s = derive_seed(s, tag);
  return static_cast<double>(s >> 11) * 0x1.0p-53;
}

}  // namespace scanmat
