#include "uamp/rng.hpp"

#include <cmath>
#include <numbers>

namespace uamp {

namespace {

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Rng Rng::split(std::uint64_t label) const {
  return Rng(seed_, mix64(stream_ ^ mix64(label ^ 0xa5a5a5a5a5a5a5a5ULL)));
}

Rng Rng::split(std::string_view label) const { return split(fnv1a(label)); }

std::uint64_t Rng::next_u64() {
  return mix64(mix64(mix64(seed_) ^ stream_) ^ counter_++);
}

double Rng::uniform() {
  // (0, 1]: never returns 0, which keeps log() finite in Box-Muller.
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double Rng::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace uamp
