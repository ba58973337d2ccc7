#pragma once

// Seed derivation. Every random draw in the engine comes from a generator
// seeded by derive_seed(master, {stream, ...counters}), so no generator state
// ever needs to be persisted and any stream can be pinned from a test.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace epoet {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

// Named sub-streams.
enum class Stream : std::uint64_t {
  genome_init = 1,
  genome_mutation,
  bowl,
  terrain,
  policy_init,
  es_noise,
  es_rollout,
  evaluation,
  transfer,
  crossover_coin,
  crossover_eval,
  reshape,
  pata_ec,
  sac_init,
  sac_update,
  sac_env,
  sac_action,
  injection,
  suite,
};

constexpr std::uint64_t derive_seed(std::uint64_t base, Stream stream,
                                    std::initializer_list<std::uint64_t> path = {}) {
  std::uint64_t h = derive_seed(base, {static_cast<std::uint64_t>(stream)});
  for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double gaussian(Rng& rng, double mean = 0.0, double stdev = 1.0) {
  return std::normal_distribution<double>(mean, stdev)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace epoet
