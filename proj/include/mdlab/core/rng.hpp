#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mdlab {

// Seeded generator with platform-independent derived distributions.
// std::mt19937_64 output is fixed by the standard; the std distributions are
// not, so integer and real draws are implemented here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n). n must be > 0.
  std::uint64_t uniform_below(std::uint64_t n);

  // Uniform in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Combine two seeds/labels into a new 64-bit seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// FNV-1a over bytes; used to turn labels into seed material.
std::uint64_t hash_label(std::string_view label);

// Stateless uniform in [0, 1) keyed on (seed, a, b).
double hash_unit(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

}  // namespace mdlab
