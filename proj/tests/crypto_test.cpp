#include <gtest/gtest.h>

#include "privrec/damgard_jurik.hpp"
#include "privrec/montgomery.hpp"
#include "privrec/random.hpp"

namespace privrec {
namespace {

class DamgardJurik : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SeededRandom rng(1, "dj-test");
    keys_ = new DjKeyPair(dj_keygen(512, 3, rng));
  }
  static void TearDownTestSuite() { delete keys_; }
  const DjPublicKey& pk() const { return keys_->pk; }
  const DjSecretKey& sk() const { return keys_->sk; }
  SeededRandom rng_{2, "dj-ops"};
  static DjKeyPair* keys_;
};
DjKeyPair* DamgardJurik::keys_ = nullptr;

TEST_F(DamgardJurik, KeyShape) {
  EXPECT_EQ(pk().modulus_bits(), 512u);
  EXPECT_EQ(sk().p() * sk().q(), pk().n());
  EXPECT_EQ(pk().n_pow(3), pk().n() * pk().n() * pk().n());
  EXPECT_EQ(pk().block_bytes(), 63u);
  EXPECT_THROW(pk().n_pow(5), std::out_of_range);
}

TEST_F(DamgardJurik, RoundTripEveryLayer) {
  for (unsigned s = 1; s <= 3; ++s)
    for (int i = 0; i < 1000 / 3; ++i) {
      mpz_class m = rng_.below(pk().plaintext_modulus(s));
      auto c = dj_encrypt(pk(), m, s, rng_);
      ASSERT_EQ(sk().decrypt(c), m);
      EXPECT_LE(mpz_sizeinbase(c.value.get_mpz_t(), 2), (s + 1) * 512u);
    }
}

TEST_F(DamgardJurik, Randomized) {
  auto a = dj_encrypt(pk(), 42, 1, rng_);
  auto b = dj_encrypt(pk(), 42, 1, rng_);
  EXPECT_NE(a.value, b.value);
  EXPECT_EQ(sk().decrypt(a), sk().decrypt(b));
  auto r = dj_rerandomize(pk(), a, rng_);
  EXPECT_NE(r.value, a.value);
  EXPECT_EQ(sk().decrypt(r), 42);
}

TEST_F(DamgardJurik, Homomorphism) {
  auto c2 = dj_encrypt(pk(), 2, 1, rng_);
  auto c3 = dj_encrypt(pk(), 3, 1, rng_);
  EXPECT_EQ(sk().decrypt(dj_add(pk(), c2, c3)), 5);
  auto c5 = dj_encrypt(pk(), 5, 1, rng_);
  EXPECT_EQ(sk().decrypt(dj_scalar_mul(pk(), c5, 3)), 15);
  EXPECT_EQ(sk().decrypt(dj_scalar_mul(pk(), c5, 0)), 0);
  // wraps modulo n^s
  auto big = dj_encrypt(pk(), pk().n() - 1, 1, rng_);
  EXPECT_EQ(sk().decrypt(dj_add(pk(), big, c2)), 1);
  EXPECT_THROW(dj_add(pk(), c2, dj_encrypt(pk(), 1, 2, rng_)), std::invalid_argument);

  for (int i = 0; i < 50; ++i) {
    mpz_class m1 = rng_.below(pk().n_pow(2)), m2 = rng_.below(pk().n_pow(2)), a = rng_.below(pk().n_pow(2));
    auto e1 = dj_encrypt(pk(), m1, 2, rng_), e2 = dj_encrypt(pk(), m2, 2, rng_);
    EXPECT_EQ(sk().decrypt(dj_add(pk(), e1, e2)), mpz_class((m1 + m2) % pk().n_pow(2)));
    EXPECT_EQ(sk().decrypt(dj_scalar_mul(pk(), e1, a)), mpz_class((m1 * a) % pk().n_pow(2)));
  }
}

TEST_F(DamgardJurik, GeneratorPowerMatchesPowm) {
  for (unsigned s = 1; s <= 3; ++s) {
    mpz_class m = rng_.below(pk().plaintext_modulus(s)), want;
    mpz_class g = pk().n() + 1;
    mpz_powm(want.get_mpz_t(), g.get_mpz_t(), m.get_mpz_t(), pk().ciphertext_modulus(s).get_mpz_t());
    EXPECT_EQ(dj_generator_pow(pk(), m, s), want);
  }
}

TEST_F(DamgardJurik, ExplicitRandomness) {
  // E(m; x) = (1+n)^m * h_s^x mod n^(s+1)
  mpz_class x = 12345, hx;
  mpz_powm(hx.get_mpz_t(), pk().h_layer(1).get_mpz_t(), x.get_mpz_t(), pk().ciphertext_modulus(1).get_mpz_t());
  auto c = dj_encrypt_with(pk(), 77, 1, x);
  EXPECT_EQ(c.value, mpz_class(dj_generator_pow(pk(), 77, 1) * hx % pk().ciphertext_modulus(1)));
  EXPECT_EQ(sk().decrypt(c), 77);
}

TEST_F(DamgardJurik, EncryptorPaths) {
  DjEncryptor pub(pk());
  DjEncryptor crt(sk());
  for (unsigned s = 1; s <= 3; ++s)
    for (int i = 0; i < 20; ++i) {
      mpz_class m = rng_.below(pk().plaintext_modulus(s));
      EXPECT_EQ(sk().decrypt(pub.encrypt(m, s, rng_)), m);
      EXPECT_EQ(sk().decrypt(crt.encrypt(m, s, rng_)), m);
    }
  auto z = crt.zero(1, rng_);
  EXPECT_EQ(sk().decrypt(pub.rerandomize(z, rng_)), 0);
}

TEST_F(DamgardJurik, Serialization) {
  ByteWriter w;
  pk().write(w);
  auto c = dj_encrypt(pk(), 99, 2, rng_);
  write_ciphertext(w, pk(), c);
  auto bytes = w.take();
  ByteReader r(bytes);
  auto pk2 = DjPublicKey::read(r);
  EXPECT_TRUE(pk2 == pk());
  auto c2 = read_ciphertext(r, pk2);
  EXPECT_TRUE(r.done());
  EXPECT_EQ(c2, c);
  EXPECT_EQ(pk().ciphertext_bytes(2), 192u);

  ByteWriter bad;
  bad.u16(1);
  write_mpz_fixed(bad, pk().ciphertext_modulus(1), pk().ciphertext_bytes(1));
  auto bb = bad.take();
  ByteReader rb(bb);
  EXPECT_THROW(read_ciphertext(rb, pk()), DecodeError);
}

TEST_F(DamgardJurik, DecryptRejectsOutOfRange) {
  EXPECT_THROW(sk().decrypt({1, 0}), std::domain_error);
  EXPECT_THROW(sk().decrypt({4, 5}), std::out_of_range);
}

TEST(Keygen, Thousand24Bit) {
  SeededRandom rng(3, "keygen");
  auto kp = dj_keygen(1024, 2, rng);
  EXPECT_EQ(kp.pk.modulus_bits(), 1024u);
  EXPECT_EQ(mpz_sizeinbase(kp.sk.p().get_mpz_t(), 2), 512u);
  EXPECT_EQ(kp.sk.decrypt(dj_encrypt(kp.pk, 31337, 2, rng)), 31337);
  EXPECT_THROW(dj_keygen(63, 1, rng), std::invalid_argument);
}

TEST(Random, SeededIsDeterministic) {
  SeededRandom a(5, "x"), b(5, "x"), c(5, "y");
  EXPECT_EQ(a(), b());
  EXPECT_NE(a(), c());
  for (int i = 0; i < 1000; ++i) {
    EXPECT_LT(a.below(7), 7u);
    auto v = a.between(3, 5);
    EXPECT_GE(v, 3u);
    EXPECT_LE(v, 5u);
  }
  mpz_class bound("123456789012345678901234567890");
  EXPECT_LT(a.below(bound), bound);
  EXPECT_LT(a.bits(70), mpz_class(1) << 70);
}

TEST(Montgomery, MatchesPowm) {
  SeededRandom rng(6, "mont");
  mpz_class m = rng.bits(700) | 1;
  MontgomeryContext ctx(m);
  for (int i = 0; i < 50; ++i) {
    mpz_class b = rng.below(m), e = rng.bits(300), want;
    mpz_powm(want.get_mpz_t(), b.get_mpz_t(), e.get_mpz_t(), m.get_mpz_t());
    EXPECT_EQ(ctx.pow(b, e), want);
  }
  mpz_class x = rng.below(m), y = rng.below(m), z = rng.below(m);
  EXPECT_EQ(ctx.mulmod(x, y), mpz_class(x * y % m));
  std::vector<mpz_class> xs{x, y, z};
  EXPECT_EQ(ctx.product(xs), mpz_class(x * y % m * z % m));
}

TEST(Montgomery, FixedBaseAndMultiExp) {
  SeededRandom rng(7, "mont");
  auto ctx = std::make_shared<const MontgomeryContext>(mpz_class(rng.bits(600) | 1));
  const auto& m = ctx->modulus();
  mpz_class g = rng.below(m);
  FixedBasePow fb(ctx, g, 256, 6);
  for (int i = 0; i < 20; ++i) {
    mpz_class e = rng.bits(256), want;
    mpz_powm(want.get_mpz_t(), g.get_mpz_t(), e.get_mpz_t(), m.get_mpz_t());
    EXPECT_EQ(fb.pow(e), want);
  }
  std::vector<mpz_class> bases, exps;
  mpz_class want = 1;
  for (int i = 0; i < 37; ++i) {
    bases.push_back(rng.below(m));
    exps.push_back(i % 5 == 0 ? mpz_class(0) : rng.bits(128));
    mpz_class t;
    mpz_powm(t.get_mpz_t(), bases.back().get_mpz_t(), exps.back().get_mpz_t(), m.get_mpz_t());
    want = want * t % m;
  }
  EXPECT_EQ(multi_exp(*ctx, bases, exps), want);
}

}  // namespace
}  // namespace privrec
