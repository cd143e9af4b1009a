#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace semiprice {

//! Label hashing for reproducible stream derivation: FNV-1a over the label
//! bytes, then a splitmix64 finalizer so labels differing in one character
//! land far apart in seed space.
inline std::uint64_t hash_label(std::string_view label) noexcept {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : label) {
    h ^= c;
    h *= 1099511628211ull;
  }
  h += 0x9e3779b97f4a7c15ull;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
  return h ^ (h >> 31);
}

//! Deterministic random stream.  Every consumer of randomness gets its own
//! stream derived from (seed, label) so that adding a draw in one component
//! never shifts the sequence seen by another.  Uniforms use the top 53 bits
//! of the raw engine output, which is platform independent, unlike
//! std::uniform_real_distribution.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : base_(seed), engine_(seed) {}

  //! Child stream; independent of draws already made on this one.
  RngStream derive(std::string_view label) const {
    return RngStream(base_ ^ hash_label(label));
  }

  //! Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  //! Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t raw() { return engine_(); }

 private:
  std::uint64_t base_;
  std::mt19937_64 engine_;
};

//! Stream for a named component under a base seed.
inline RngStream make_stream(std::uint64_t seed, std::string_view label) {
  return RngStream(seed ^ hash_label(label));
}

}  // namespace semiprice
