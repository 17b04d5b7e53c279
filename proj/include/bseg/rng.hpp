#pragma once

#include <cstdint>
#include <string_view>

namespace bseg {

// Counter-based random stream keyed by (seed, purpose tag). Two streams with
// different tags never share state, so adding a consumer never shifts the
// draws any existing consumer sees. The generator is a SplitMix64 finalizer
// applied to key + counter, which is platform independent.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view tag);

  // Child stream for a sub-purpose; independent of this stream's counter.
  Rng fork(std::string_view tag) const;

  std::uint64_t next_u64();
  // Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller (no cached second draw).
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t key() const { return key_; }

 private:
  explicit Rng(std::uint64_t key) : key_(key) {}
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_tag(std::string_view tag);

}  // namespace bseg
