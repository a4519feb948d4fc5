#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace hyperop {

/// Engine used for every simulation run. Seeded once per run from derive_seed.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a master seed and a key path,
/// e.g. (regime, beta index, q index, rep). The chain is
///   h0 = splitmix64(master);  h_{i+1} = splitmix64(h_i ^ splitmix64(key_i + 1))
/// so every run is a pure function of (master, key path), independent of
/// which worker executes it.
constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 1));
  return h;
}

inline Rng make_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return Rng(seq);
}

/// Bernoulli draw; p <= 0 never succeeds, p >= 1 always does. Consumes one draw.
template <class URBG>
bool bernoulli(URBG& rng, double p) {
  const double u = std::generate_canonical<double, 53>(rng);
  return u < p;
}

template <class URBG>
std::size_t uniform_index(URBG& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace hyperop
