#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace casbench {

// Stateless counter-based randomness. Every draw is a pure function of a key
// and a tuple of counters, so work can be split across threads in any order
// and still reproduce the same numbers.

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Folds counters into a key. Order matters: derive(k, {a, b}) != derive(k, {b, a}).
constexpr std::uint64_t derive_key(std::uint64_t key,
                                   std::initializer_list<std::uint64_t> counters) noexcept {
  std::uint64_t h = splitmix64(key ^ 0x6A09E667F3BCC908ULL);
  for (std::uint64_t c : counters) h = splitmix64(h ^ splitmix64(c + 0x3C6EF372FE94F82BULL));
  return h;
}

// FNV-1a, used to turn identifiers and texts into counters.
constexpr std::uint64_t hash_text(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Uniform double in [0, 1) with 53 random bits.
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double keyed_uniform(std::uint64_t key,
                            std::initializer_list<std::uint64_t> counters) noexcept {
  return to_unit(derive_key(key, counters));
}

// Sequential stream over a derived key; use when an algorithm needs an
// unknown number of draws (rejection samplers).
class KeyedStream {
 public:
  using result_type = std::uint64_t;

  explicit KeyedStream(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept { return splitmix64(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }
  double uniform() noexcept { return to_unit((*this)()); }
  double normal() noexcept;
  // Gamma(shape, 1) by Marsaglia-Tsang, with the shape < 1 boost.
  double gamma(double shape) noexcept;
  double beta(double alpha, double beta) noexcept;

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace casbench
