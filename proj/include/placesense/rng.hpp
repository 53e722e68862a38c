#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace placesense {

// splitmix64; used both as a bit mixer and to expand seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic sub-seed derivation. Every module draws its randomness from
// the single run seed through labels like "synthworld.person/17" or
// "learner.shuffle/romantic", so any stage can be reproduced in isolation.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ root;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;  // FNV-1a step
    h = splitmix64(h);
  }
  return splitmix64(h);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                                 std::uint64_t index) {
  return splitmix64(derive_seed(root, label) ^ splitmix64(index + 0x51ed2701ULL));
}

inline std::mt19937_64 make_rng(std::uint64_t root, std::string_view label) {
  return std::mt19937_64(derive_seed(root, label));
}

inline std::mt19937_64 make_rng(std::uint64_t root, std::string_view label,
                                std::uint64_t index) {
  return std::mt19937_64(derive_seed(root, label, index));
}

}  // namespace placesense
