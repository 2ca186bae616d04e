#pragma once

// Deterministic, language-portable random streams.
//
// Every random decision in the library draws from an Rng stream derived from
// (master_seed, domain_tag, round, entity_id).  The derivation and the
// generator are fixed so that any implementation can reproduce the exact
// draws; see docs/rng-streams.md for the constants and test vectors.
//
// Generator: xoshiro256++ (Blackman/Vigna), state seeded by four successive
// splitmix64 outputs.  All integer outputs are bit-portable; floating-point
// helpers that call libm (log, cos) are bit-stable per platform/libm.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string_view>
#include <vector>

namespace fedstas {

constexpr std::uint64_t kSeedChainInit = 0x243F6A8885A308D3ull;  // pi fraction

// splitmix64 finalizer (Stafford mix13 variant used by splitmix64).
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// FNV-1a over the tag bytes; keeps domain tags readable at call sites.
constexpr std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

// Stream key: absorb master seed, tag, round and entity through mix64.
constexpr std::uint64_t derive_seed(std::uint64_t master_seed,
                                    std::string_view domain_tag,
                                    std::uint64_t round,
                                    std::uint64_t entity_id) {
  std::uint64_t h = kSeedChainInit;
  h = mix64(h ^ master_seed);
  h = mix64(h ^ hash_tag(domain_tag));
  h = mix64(h ^ round);
  h = mix64(h ^ entity_id);
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    // Canonical splitmix64 expansion of the 64-bit seed into xoshiro state.
    std::uint64_t sm = seed;
    for (auto& word : state_) {
      sm += 0x9E3779B97F4A7C15ull;
      word = mix64(sm);
    }
  }

  // xoshiro256++
  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1), 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Lemire's multiply-with-rejection.
  std::uint64_t next_below(std::uint64_t n) {
    std::uint64_t x = next_u64();
    unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        x = next_u64();
        m = static_cast<unsigned __int128>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Standard normal, Box-Muller, cosine branch only (one value per pair of
  // uniforms; no cached spare, so stream position is a pure function of the
  // number of calls).
  double next_normal() {
    double u1 = next_double();
    while (u1 == 0.0) u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Gamma(shape, 1). Marsaglia-Tsang for shape >= 1, boost via U^(1/a) below.
  double next_gamma(double shape) {
    if (shape < 1.0) {
      double u = next_double();
      while (u == 0.0) u = next_double();
      return next_gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = next_normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = next_double();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Dirichlet(alpha * 1_n) proportions.  For very small alpha the gamma draws
  // can all underflow to zero; the limit distribution puts the whole mass on
  // one uniformly chosen coordinate, which is what the fallback does.
  std::vector<double> next_dirichlet(double alpha, std::size_t n) {
    std::vector<double> g(n);
    double sum = 0.0;
    for (auto& v : g) {
      v = next_gamma(alpha);
      sum += v;
    }
    if (sum <= 0.0 || !std::isfinite(sum)) {
      std::vector<double> onehot(n, 0.0);
      onehot[static_cast<std::size_t>(next_below(n))] = 1.0;
      return onehot;
    }
    for (auto& v : g) v /= sum;
    return g;
  }

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // k distinct values from {0, ..., n-1}, order as drawn.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(next_below(n - i));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::array<std::uint64_t, 4> state_{};
};

inline Rng rng_stream(std::uint64_t master_seed, std::string_view domain_tag,
                      std::uint64_t round, std::uint64_t entity_id) {
  return Rng(derive_seed(master_seed, domain_tag, round, entity_id));
}

}  // namespace fedstas
