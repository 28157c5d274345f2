#pragma once

#include <cstdint>
#include <random>

namespace sketchtd {

// splitmix64 mixing step. Used to derive decorrelated seeds, not as the
// generator itself.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Named sub-streams of a run seed. Components that must not share randomness
// (environment dynamics, policy tie-breaks, sketch sampling, ...) each draw
// from their own stream so adding draws to one never perturbs another.
enum class Stream : std::uint64_t {
  env = 1,
  policy = 2,
  sketch = 3,
  features = 4,
  ground_truth = 5,
  probe = 6,
};

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  return splitmix64(splitmix64(base) ^ splitmix64(tag));
}

inline std::uint64_t derive_seed(std::uint64_t base, Stream stream, std::uint64_t index = 0) {
  return derive_seed(derive_seed(base, static_cast<std::uint64_t>(stream)), index);
}

inline std::mt19937_64 make_rng(std::uint64_t base, Stream stream, std::uint64_t index = 0) {
  return std::mt19937_64(derive_seed(base, stream, index));
}

}  // namespace sketchtd
