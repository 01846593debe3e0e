#include "privrec/damgard_jurik.hpp"

#include <stdexcept>

namespace privrec {

namespace {

mpz_class powm(const mpz_class& b, const mpz_class& e, const mpz_class& m) {
  mpz_class r;
  mpz_powm(r.get_mpz_t(), b.get_mpz_t(), e.get_mpz_t(), m.get_mpz_t());
  return r;
}

mpz_class invert(const mpz_class& a, const mpz_class& m) {
  mpz_class r;
  if (!mpz_invert(r.get_mpz_t(), a.get_mpz_t(), m.get_mpz_t())) throw std::domain_error("not invertible");
  return r;
}

mpz_class random_prime(unsigned bits, RandomSource& rng) {
  for (;;) {
    mpz_class x = rng.bits(bits);
    mpz_setbit(x.get_mpz_t(), bits - 1);
    mpz_setbit(x.get_mpz_t(), bits - 2);
    mpz_class p;
    mpz_nextprime(p.get_mpz_t(), x.get_mpz_t());
    if (mpz_sizeinbase(p.get_mpz_t(), 2) == bits && mpz_probab_prime_p(p.get_mpz_t(), 40)) return p;
  }
}

}  // namespace

std::size_t byte_len(const mpz_class& x) { return x == 0 ? 0 : (mpz_sizeinbase(x.get_mpz_t(), 2) + 7) / 8; }

void write_mpz_fixed(ByteWriter& w, const mpz_class& x, std::size_t len) {
  Bytes b(len, 0);
  std::size_t n = byte_len(x);
  if (n > len) throw std::invalid_argument("integer wider than its field");
  if (x != 0) mpz_export(b.data() + (len - n), nullptr, 1, 1, 1, 0, x.get_mpz_t());
  w.raw(b);
}

mpz_class read_mpz(std::span<const std::uint8_t> b) {
  mpz_class x;
  if (!b.empty()) mpz_import(x.get_mpz_t(), b.size(), 1, 1, 1, 0, b.data());
  return x;
}

struct DjPublicKey::State {
  mpz_class n, h;
  unsigned max_layer = 1;
  unsigned bits = 0;
  std::vector<mpz_class> npow;  // 0..max_layer+1
  std::vector<mpz_class> hs;    // 0..max_layer (index 0 unused)
};

DjPublicKey::DjPublicKey(mpz_class n, mpz_class h, unsigned max_layer) {
  if (max_layer < 1 || max_layer > kMaxLayer) throw std::invalid_argument("layer bound out of range");
  if (n < 15 || mpz_even_p(n.get_mpz_t())) throw std::invalid_argument("bad modulus");
  if (h <= 1 || h >= n) throw std::invalid_argument("bad randomness generator");
  auto st = std::make_shared<State>();
  st->n = std::move(n);
  st->h = std::move(h);
  st->max_layer = max_layer;
  st->bits = static_cast<unsigned>(mpz_sizeinbase(st->n.get_mpz_t(), 2));
  st->npow.resize(max_layer + 2);
  st->npow[0] = 1;
  for (unsigned j = 1; j < st->npow.size(); ++j) st->npow[j] = st->npow[j - 1] * st->n;
  st->hs.resize(max_layer + 1);
  for (unsigned s = 1; s <= max_layer; ++s) st->hs[s] = powm(st->h, st->npow[s], st->npow[s + 1]);
  st_ = std::move(st);
}

void DjPublicKey::check_layer(unsigned s) const {
  if (!st_) throw std::logic_error("empty public key");
  if (s < 1 || s > st_->max_layer) throw std::out_of_range("layer outside key bound");
}

const mpz_class& DjPublicKey::n() const { return st_->n; }
const mpz_class& DjPublicKey::h() const { return st_->h; }
unsigned DjPublicKey::max_layer() const { return st_->max_layer; }
unsigned DjPublicKey::modulus_bits() const { return st_->bits; }

const mpz_class& DjPublicKey::n_pow(unsigned j) const {
  if (!st_) throw std::logic_error("empty public key");
  return st_->npow.at(j);
}

const mpz_class& DjPublicKey::h_layer(unsigned s) const {
  check_layer(s);
  return st_->hs[s];
}

std::size_t DjPublicKey::ciphertext_bytes(unsigned s) const { return byte_len(n_pow(s + 1)); }

void DjPublicKey::write(ByteWriter& w) const {
  if (!st_) throw std::logic_error("empty public key");
  w.u16(static_cast<std::uint16_t>(st_->max_layer));
  const std::size_t len = byte_len(st_->n);
  w.u32(static_cast<std::uint32_t>(len));
  write_mpz_fixed(w, st_->n, len);
  write_mpz_fixed(w, st_->h, len);
}

DjPublicKey DjPublicKey::read(ByteReader& r) {
  unsigned layers = r.u16();
  std::size_t len = r.u32();
  if (len == 0 || len > 2048) throw DecodeError("public key length out of range");
  mpz_class n = read_mpz(r.raw(len));
  mpz_class h = read_mpz(r.raw(len));
  try {
    return DjPublicKey(std::move(n), std::move(h), layers);
  } catch (const std::invalid_argument& e) {
    throw DecodeError(std::string("invalid public key: ") + e.what());
  }
}

bool operator==(const DjPublicKey& a, const DjPublicKey& b) {
  if (!a.st_ || !b.st_) return a.st_ == b.st_;
  return a.st_->n == b.st_->n && a.st_->h == b.st_->h && a.st_->max_layer == b.st_->max_layer;
}

DjSecretKey::DjSecretKey(DjPublicKey pk, mpz_class p, mpz_class q)
    : pk_(std::move(pk)), p_(std::move(p)), q_(std::move(q)) {
  if (p_ * q_ != pk_.n()) throw std::invalid_argument("factors do not match modulus");
  mpz_class pm = p_ - 1, qm = q_ - 1;
  mpz_lcm(lambda_.get_mpz_t(), pm.get_mpz_t(), qm.get_mpz_t());
  const unsigned S = pk_.max_layer();
  lambda_inv_.resize(S + 1);
  inv_fact_.resize(S + 1);
  for (unsigned s = 1; s <= S; ++s) {
    lambda_inv_[s] = invert(lambda_, pk_.n_pow(s));
    inv_fact_[s].resize(s + 1);
    mpz_class f = 1;
    for (unsigned k = 1; k <= s; ++k) {
      f *= k;
      inv_fact_[s][k] = invert(f, pk_.n_pow(s));
    }
  }
}

mpz_class DjSecretKey::decrypt(const Ciphertext& c) const {
  const unsigned s = c.layer;
  if (s < 1 || s > pk_.max_layer()) throw std::out_of_range("layer outside key bound");
  const mpz_class& N2 = pk_.ciphertext_modulus(s);
  if (c.value <= 0 || c.value >= N2) throw std::domain_error("ciphertext out of range");
  const mpz_class a = powm(c.value, lambda_, N2);
  const mpz_class& n = pk_.n();
  // Recover i from a = (1+n)^i mod n^(s+1), one n-adic digit layer at a time.
  mpz_class i = 0;
  for (unsigned j = 1; j <= s; ++j) {
    const mpz_class& nj = pk_.n_pow(j);
    mpz_class t1 = a % pk_.n_pow(j + 1);
    t1 = (t1 - 1) / n;
    mpz_class t2 = i;
    for (unsigned k = 2; k <= j; ++k) {
      i -= 1;
      t2 = (t2 * i) % nj;
      mpz_class sub = (t2 * pk_.n_pow(k - 1)) % nj;
      sub = (sub * inv_fact_[j][k]) % nj;
      t1 -= sub;
    }
    i = t1 % nj;
    if (i < 0) i += nj;
  }
  mpz_class m = (i * lambda_inv_[s]) % pk_.plaintext_modulus(s);
  return m;
}

DjKeyPair dj_keygen(unsigned bits, unsigned max_layer, RandomSource& rng) {
  if (bits < 64 || bits % 2) throw std::invalid_argument("modulus bits must be even and >= 64");
  for (;;) {
    mpz_class p = random_prime(bits / 2, rng);
    mpz_class q = random_prime(bits / 2, rng);
    if (p == q) continue;
    mpz_class n = p * q;
    if (mpz_sizeinbase(n.get_mpz_t(), 2) != bits) continue;
    mpz_class phi = (p - 1) * (q - 1), g;
    mpz_gcd(g.get_mpz_t(), n.get_mpz_t(), phi.get_mpz_t());
    if (g != 1) continue;
    mpz_class x, h;
    do {
      x = rng.below(n);
      mpz_gcd(g.get_mpz_t(), x.get_mpz_t(), n.get_mpz_t());
    } while (x < 2 || g != 1);
    h = n - (x * x) % n;
    DjPublicKey pk(n, h, max_layer);
    DjSecretKey sk(pk, p, q);
    return {pk, std::move(sk)};
  }
}

mpz_class dj_generator_pow(const DjPublicKey& pk, const mpz_class& m, unsigned s) {
  const mpz_class& mod = pk.ciphertext_modulus(s);
  mpz_class mm = m % pk.plaintext_modulus(s);
  if (mm < 0) mm += pk.plaintext_modulus(s);
  if (mm == 0) return 1;
  // sum_{k=0..s} C(m,k) n^k; terms with k > s vanish mod n^(s+1)
  mpz_class acc = 1, binom = 1;
  for (unsigned k = 1; k <= s; ++k) {
    if (mm < k) break;
    binom = binom * (mm - (k - 1)) / k;
    acc += (binom % mod) * pk.n_pow(k);
  }
  return acc % mod;
}

Ciphertext dj_encrypt_with(const DjPublicKey& pk, const mpz_class& m, unsigned s, const mpz_class& x) {
  const mpz_class& mod = pk.ciphertext_modulus(s);
  mpz_class c = dj_generator_pow(pk, m, s) * powm(pk.h_layer(s), x, mod);
  return {s, c % mod};
}

Ciphertext dj_encrypt(const DjPublicKey& pk, const mpz_class& m, unsigned s, RandomSource& rng) {
  return dj_encrypt_with(pk, m, s, rng.bits(pk.randomness_bits()));
}

Ciphertext dj_add(const DjPublicKey& pk, const Ciphertext& a, const Ciphertext& b) {
  if (a.layer != b.layer) throw std::invalid_argument("layer mismatch");
  const mpz_class& mod = pk.ciphertext_modulus(a.layer);
  return {a.layer, (a.value * b.value) % mod};
}

Ciphertext dj_scalar_mul(const DjPublicKey& pk, const Ciphertext& c, const mpz_class& a) {
  mpz_class e = a % pk.plaintext_modulus(c.layer);
  if (e < 0) e += pk.plaintext_modulus(c.layer);
  return {c.layer, powm(c.value, e, pk.ciphertext_modulus(c.layer))};
}

Ciphertext dj_rerandomize(const DjPublicKey& pk, const Ciphertext& c, RandomSource& rng) {
  return dj_add(pk, c, dj_encrypt(pk, 0, c.layer, rng));
}

void write_ciphertext(ByteWriter& w, const DjPublicKey& pk, const Ciphertext& c) {
  w.u16(static_cast<std::uint16_t>(c.layer));
  write_mpz_fixed(w, c.value, pk.ciphertext_bytes(c.layer));
}

Ciphertext read_ciphertext(ByteReader& r, const DjPublicKey& pk) {
  unsigned s = r.u16();
  if (s < 1 || s > pk.max_layer()) throw DecodeError("ciphertext layer outside key bound");
  Ciphertext c{s, read_mpz(r.raw(pk.ciphertext_bytes(s)))};
  if (c.value >= pk.ciphertext_modulus(s)) throw DecodeError("ciphertext out of range");
  return c;
}

DjEncryptor::DjEncryptor(DjPublicKey pk, unsigned window) : pk_(std::move(pk)), window_(window) {
  if (!pk_.valid()) throw std::invalid_argument("empty public key");
}

DjEncryptor::DjEncryptor(const DjSecretKey& sk, unsigned window)
    : pk_(sk.public_key()), p_(sk.p()), q_(sk.q()), window_(window) {
  if (!pk_.valid()) throw std::invalid_argument("empty public key");
}

DjEncryptor::Layer& DjEncryptor::layer(unsigned s) const {
  if (s < 1 || s > pk_.max_layer()) throw std::out_of_range("layer outside key bound");
  Layer& L = layers_[s];
  std::call_once(L.once, [&] {
    L.ctx = std::make_shared<MontgomeryContext>(pk_.ciphertext_modulus(s));
    const mpz_class& hs = pk_.h_layer(s);
    if (p_ == 0) {
      L.hpow = std::make_unique<FixedBasePow>(L.ctx, hs, pk_.randomness_bits(), window_);
      return;
    }
    mpz_pow_ui(L.P.get_mpz_t(), p_.get_mpz_t(), s + 1);
    mpz_pow_ui(L.Q.get_mpz_t(), q_.get_mpz_t(), s + 1);
    L.q_inv = invert(L.Q, L.P);
    auto cp = std::make_shared<MontgomeryContext>(L.P);
    auto cq = std::make_shared<MontgomeryContext>(L.Q);
    L.hpow_p = std::make_unique<FixedBasePow>(cp, mpz_class(hs % L.P), pk_.randomness_bits(), window_);
    L.hpow_q = std::make_unique<FixedBasePow>(cq, mpz_class(hs % L.Q), pk_.randomness_bits(), window_);
  });
  return L;
}

mpz_class DjEncryptor::random_factor(const Layer& L, RandomSource& rng) const {
  const mpz_class x = rng.bits(pk_.randomness_bits());
  if (!L.hpow_p) return L.hpow->pow(x);
  const mpz_class rp = L.hpow_p->pow(x);
  const mpz_class rq = L.hpow_q->pow(x);
  mpz_class t = (rp - rq) % L.P;
  if (t < 0) t += L.P;
  t = (t * L.q_inv) % L.P;
  return rq + L.Q * t;
}

const MontgomeryContext& DjEncryptor::context(unsigned s) const { return *layer(s).ctx; }

Ciphertext DjEncryptor::encrypt(const mpz_class& m, unsigned s, RandomSource& rng) const {
  const Layer& L = layer(s);
  mpz_class r = random_factor(L, rng);
  mpz_class g = dj_generator_pow(pk_, m, s);
  if (g == 1) return {s, r};
  return {s, L.ctx->mulmod(g, r)};
}

Ciphertext DjEncryptor::rerandomize(const Ciphertext& c, RandomSource& rng) const {
  const Layer& L = layer(c.layer);
  mpz_class r = random_factor(L, rng);
  return {c.layer, L.ctx->mulmod(c.value, r)};
}

}  // namespace privrec
