#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace crosscog {

// splitmix64 finalizer; also used as the seed-derivation mixer.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix64(mix64(base) ^ 0xD6E8FEB86659FD93ull ^ stream);
}

// FNV-1a over bytes; stable across platforms, used wherever a string
// must map to a reproducible seed (concept names, cache keys aside).
inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t seed = 0xCBF29CE484222325ull) {
  std::uint64_t h = seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

inline std::mt19937_64 make_rng(std::uint64_t base, std::uint64_t stream) {
  return std::mt19937_64(derive_seed(base, stream));
}

// Fisher-Yates with raw engine draws; std::shuffle's draw sequence is
// implementation-defined, this one is pinned.
template <class T>
void seeded_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i)
    std::swap(items[i - 1], items[rng() % i]);
}

}  // namespace crosscog
