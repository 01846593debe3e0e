#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string_view>

#include <gmpxx.h>

namespace privrec {

// Byte source for all cryptographic randomness. Also usable as a
// UniformRandomBitGenerator (std::shuffle etc).
class RandomSource {
 public:
  using result_type = std::uint64_t;
  virtual ~RandomSource() = default;

  virtual void fill(std::span<std::uint8_t> out) = 0;

  result_type operator()();
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  // Uniform in [0, bound); bound > 0.
  std::uint64_t below(std::uint64_t bound);
  // Uniform in [lo, hi].
  std::uint64_t between(std::uint64_t lo, std::uint64_t hi);
  // Uniform with exactly `bits` random bits (value < 2^bits).
  mpz_class bits(unsigned bits);
  mpz_class below(const mpz_class& bound);
};

// OpenSSL RAND_bytes.
class SystemRandom final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t> out) override;
};

// SHA-256 in counter mode over (seed, label). Deterministic; test and bench use only.
class SeededRandom final : public RandomSource {
 public:
  explicit SeededRandom(std::uint64_t seed, std::string_view label = {});
  void fill(std::span<std::uint8_t> out) override;

 private:
  void refill();
  std::uint8_t key_[32];
  std::uint64_t counter_ = 0;
  std::uint8_t block_[32];
  std::size_t used_ = 32;
};

// Seeded when a seed is given, system randomness otherwise.
std::unique_ptr<RandomSource> make_random(std::optional<std::uint64_t> seed, std::string_view label = {});

}  // namespace privrec
