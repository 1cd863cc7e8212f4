#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

// Deterministic random sampling. <random> distributions are
// implementation-defined, so everything that influences search results
// goes through this splitmix64-based engine instead.
namespace spp::rng {

struct Engine {
  std::uint64_t state = 0;

  explicit Engine(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
};

/// Order-sensitive seed combinator; use to derive per-call streams from
/// (run seed, generation, candidate index, ...).
inline std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  Engine e(h);
  return e.next();
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix(mix(a, b), c);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                         std::uint64_t d) {
  return mix(mix(a, b, c), d);
}

/// Unbiased uniform draw from [0, n). n must be > 0.
inline std::size_t below(Engine& e, std::size_t n) {
  const std::uint64_t bound = n;
  const std::uint64_t reject = (0ull - bound) % bound;  // 2^64 mod n
  for (;;) {
    std::uint64_t r = e.next();
    if (r >= reject) return static_cast<std::size_t>(r % bound);
  }
}

/// k distinct indices from [0, n) in draw order (partial Fisher-Yates).
inline std::vector<std::size_t> sample_indices(Engine& e, std::size_t n,
                                               std::size_t k) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  if (k > n) k = n;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + below(e, n - i);
    std::swap(v[i], v[j]);
  }
  v.resize(k);
  return v;
}

template <class T>
void shuffle(Engine& e, std::vector<T>& v) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = below(e, i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace spp::rng
