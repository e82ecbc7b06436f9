#pragma once

#include <cstdint>
#include <string_view>

namespace uamp {

/// Counter-based pseudo-random generator. Every draw is a pure function of
/// (seed, stream, counter), so streams are reproducible bit-for-bit across
/// platforms and independent child generators can be derived by label
/// without consuming draws from the parent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  /// Child generator with an independent stream. Does not advance *this.
  Rng split(std::uint64_t label) const;
  Rng split(std::string_view label) const;

  std::uint64_t next_u64();

  /// Uniform on (0, 1].
  double uniform();

  /// Standard normal via Box-Muller (two uniforms per draw, no caching).
  double normal();

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace uamp
