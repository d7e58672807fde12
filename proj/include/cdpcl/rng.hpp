#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cdpcl {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Stream seed from an ordered tuple of identifiers.
constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243F6A8885A308D3ull;
  for (auto p : parts) h = mix64(h ^ mix64(p));
  return h;
}

constexpr std::uint64_t hash_string(const char* s) {
  std::uint64_t h = 1469598103934665603ull;
  for (; *s; ++s) h = (h ^ static_cast<unsigned char>(*s)) * 1099511628211ull;
  return h;
}

using Rng = std::mt19937_64;

}  // namespace cdpcl
