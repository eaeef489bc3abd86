#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tenc {

using Rng = std::mt19937_64;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

// One root seed expanded into independent named streams (init, shuffle,
// dropout, synth, ...). The same (seed, name, index) always yields the same
// generator state.
class SeedTree {
 public:
  explicit SeedTree(std::uint64_t root) : root_(root) {}

  std::uint64_t root() const noexcept { return root_; }

  std::uint64_t derive(std::string_view name, std::uint64_t index = 0) const {
    return detail::splitmix64(detail::splitmix64(root_ ^ detail::fnv1a(name)) + index);
  }

  Rng stream(std::string_view name, std::uint64_t index = 0) const {
    return Rng(derive(name, index));
  }

  SeedTree child(std::string_view name, std::uint64_t index = 0) const {
    return SeedTree(derive(name, index));
  }

 private:
  std::uint64_t root_;
};

// Uniform double in [0, 1) from the top 53 bits; independent of the
// standard library's distribution implementations.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace tenc
