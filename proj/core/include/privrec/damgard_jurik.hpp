#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <gmpxx.h>

#include "privrec/bytes.hpp"
#include "privrec/montgomery.hpp"
#include "privrec/random.hpp"

namespace privrec {

std::size_t byte_len(const mpz_class& x);
// Big-endian, zero-padded on the left to len bytes.
void write_mpz_fixed(ByteWriter& w, const mpz_class& x, std::size_t len);
mpz_class read_mpz(std::span<const std::uint8_t> b);

// Damgard-Jurik over n = pq. Layer s has plaintexts mod n^s and ciphertexts
// mod n^(s+1). Randomness follows the DJN variant: h_s^x with h_s = h^(n^s)
// and x a random ceil(bits/2)-bit exponent.
class DjPublicKey {
 public:
  static constexpr unsigned kMaxLayer = 8;

  DjPublicKey() = default;
  DjPublicKey(mpz_class n, mpz_class h, unsigned max_layer);

  bool valid() const { return st_ != nullptr; }
  const mpz_class& n() const;
  const mpz_class& h() const;
  unsigned max_layer() const;
  unsigned modulus_bits() const;
  unsigned randomness_bits() const { return (modulus_bits() + 1) / 2; }

  // n^j for j <= max_layer + 1
  const mpz_class& n_pow(unsigned j) const;
  const mpz_class& plaintext_modulus(unsigned s) const { return n_pow(s); }
  const mpz_class& ciphertext_modulus(unsigned s) const { return n_pow(s + 1); }
  // h^(n^s) mod n^(s+1)
  const mpz_class& h_layer(unsigned s) const;
  std::size_t ciphertext_bytes(unsigned s) const;
  // Largest block (in bytes) that always fits the layer-1 plaintext space.
  std::size_t block_bytes() const { return (modulus_bits() - 1) / 8; }

  void write(ByteWriter& w) const;
  static DjPublicKey read(ByteReader& r);

  friend bool operator==(const DjPublicKey& a, const DjPublicKey& b);

 private:
  struct State;
  void check_layer(unsigned s) const;
  std::shared_ptr<const State> st_;
};

struct Ciphertext {
  unsigned layer = 1;
  mpz_class value;

  friend bool operator==(const Ciphertext& a, const Ciphertext& b) {
    return a.layer == b.layer && a.value == b.value;
  }
};

class DjSecretKey {
 public:
  DjSecretKey() = default;
  DjSecretKey(DjPublicKey pk, mpz_class p, mpz_class q);

  const DjPublicKey& public_key() const { return pk_; }
  mpz_class decrypt(const Ciphertext& c) const;
  const mpz_class& p() const { return p_; }
  const mpz_class& q() const { return q_; }

 private:
  DjPublicKey pk_;
  mpz_class p_, q_, lambda_;
  std::vector<mpz_class> lambda_inv_;  // lambda^-1 mod n^s, index s
  std::vector<std::vector<mpz_class>> inv_fact_;  // [j][k] = (k!)^-1 mod n^j
};

struct DjKeyPair {
  DjPublicKey pk;
  DjSecretKey sk;
};

DjKeyPair dj_keygen(unsigned bits, unsigned max_layer, RandomSource& rng);

// (1+n)^m mod n^(s+1) by the binomial expansion.
mpz_class dj_generator_pow(const DjPublicKey& pk, const mpz_class& m, unsigned s);

Ciphertext dj_encrypt(const DjPublicKey& pk, const mpz_class& m, unsigned s, RandomSource& rng);
// Explicit randomness exponent x (tests).
Ciphertext dj_encrypt_with(const DjPublicKey& pk, const mpz_class& m, unsigned s, const mpz_class& x);
Ciphertext dj_add(const DjPublicKey& pk, const Ciphertext& a, const Ciphertext& b);
Ciphertext dj_scalar_mul(const DjPublicKey& pk, const Ciphertext& c, const mpz_class& a);
Ciphertext dj_rerandomize(const DjPublicKey& pk, const Ciphertext& c, RandomSource& rng);

// Fixed-width encoding: u16 layer, then the value zero-padded to the byte
// length of n^(s+1).
void write_ciphertext(ByteWriter& w, const DjPublicKey& pk, const Ciphertext& c);
Ciphertext read_ciphertext(ByteReader& r, const DjPublicKey& pk);

// Encryption with per-layer fixed-base tables for h_s; built lazily, safe to
// share between threads. The key owner can pass the secret key to work modulo
// p^(s+1) and q^(s+1) separately.
class DjEncryptor {
 public:
  explicit DjEncryptor(DjPublicKey pk, unsigned window = 10);
  explicit DjEncryptor(const DjSecretKey& sk, unsigned window = 10);

  const DjPublicKey& public_key() const { return pk_; }
  Ciphertext encrypt(const mpz_class& m, unsigned s, RandomSource& rng) const;
  Ciphertext zero(unsigned s, RandomSource& rng) const { return encrypt(0, s, rng); }
  Ciphertext rerandomize(const Ciphertext& c, RandomSource& rng) const;
  // Arithmetic context for the layer-s ciphertext modulus.
  const MontgomeryContext& context(unsigned s) const;

 private:
  struct Layer {
    std::once_flag once;
    std::shared_ptr<const MontgomeryContext> ctx;
    std::unique_ptr<FixedBasePow> hpow;
    // CRT path
    mpz_class P, Q, q_inv;  // p^(s+1), q^(s+1), Q^-1 mod P
    std::unique_ptr<FixedBasePow> hpow_p, hpow_q;
  };
  Layer& layer(unsigned s) const;
  mpz_class random_factor(const Layer& L, RandomSource& rng) const;

  DjPublicKey pk_;
  mpz_class p_, q_;  // zero unless built from the secret key
  unsigned window_;
  mutable std::array<Layer, DjPublicKey::kMaxLayer + 1> layers_;
};

}  // namespace privrec
