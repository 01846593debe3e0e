#include "privrec/random.hpp"

#include <cstring>
#include <stdexcept>
#include <vector>

#include <openssl/evp.h>
#include <openssl/rand.h>

namespace privrec {

namespace {

void sha256(const std::uint8_t* data, std::size_t len, std::uint8_t out[32]) {
  unsigned int n = 0;
  if (EVP_Digest(data, len, out, &n, EVP_sha256(), nullptr) != 1 || n != 32)
    throw std::runtime_error("SHA-256 failed");
}

}  // namespace

RandomSource::result_type RandomSource::operator()() {
  std::uint8_t b[8];
  fill(b);
  std::uint64_t v = 0;
  for (auto x : b) v = (v << 8) | x;
  return v;
}

std::uint64_t RandomSource::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("below(0)");
  const std::uint64_t limit = max() - max() % bound;
  std::uint64_t v;
  do v = (*this)(); while (v >= limit && limit != 0);
  return v % bound;
}

std::uint64_t RandomSource::between(std::uint64_t lo, std::uint64_t hi) {
  if (lo > hi) throw std::invalid_argument("between: empty range");
  if (lo == 0 && hi == max()) return (*this)();
  return lo + below(hi - lo + 1);
}

mpz_class RandomSource::bits(unsigned nbits) {
  mpz_class r;
  if (nbits == 0) return r;
  std::vector<std::uint8_t> buf((nbits + 7) / 8);
  fill(buf);
  if (nbits % 8) buf[0] &= static_cast<std::uint8_t>((1u << (nbits % 8)) - 1);
  mpz_import(r.get_mpz_t(), buf.size(), 1, 1, 1, 0, buf.data());
  return r;
}

mpz_class RandomSource::below(const mpz_class& bound) {
  if (bound <= 0) throw std::invalid_argument("below: non-positive bound");
  const unsigned nbits = static_cast<unsigned>(mpz_sizeinbase(bound.get_mpz_t(), 2));
  mpz_class r;
  do r = bits(nbits); while (r >= bound);
  return r;
}

void SystemRandom::fill(std::span<std::uint8_t> out) {
  if (out.empty()) return;
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) throw std::runtime_error("RAND_bytes failed");
}

SeededRandom::SeededRandom(std::uint64_t seed, std::string_view label) {
  std::vector<std::uint8_t> in(8 + label.size());
  for (int i = 0; i < 8; ++i) in[i] = static_cast<std::uint8_t>(seed >> (56 - 8 * i));
  std::memcpy(in.data() + 8, label.data(), label.size());
  sha256(in.data(), in.size(), key_);
}

void SeededRandom::refill() {
  std::uint8_t in[40];
  std::memcpy(in, key_, 32);
  for (int i = 0; i < 8; ++i) in[32 + i] = static_cast<std::uint8_t>(counter_ >> (56 - 8 * i));
  ++counter_;
  sha256(in, sizeof in, block_);
  used_ = 0;
}

void SeededRandom::fill(std::span<std::uint8_t> out) {
  std::size_t i = 0;
  while (i < out.size()) {
    if (used_ == 32) refill();
    std::size_t n = std::min(out.size() - i, 32 - used_);
    std::memcpy(out.data() + i, block_ + used_, n);
    used_ += n;
    i += n;
  }
}

std::unique_ptr<RandomSource> make_random(std::optional<std::uint64_t> seed, std::string_view label) {
  if (seed) return std::make_unique<SeededRandom>(*seed, label);
  return std::make_unique<SystemRandom>();
}

}  // namespace privrec
