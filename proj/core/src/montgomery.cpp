#include "privrec/montgomery.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <openssl/bn.h>

static_assert(GMP_NUMB_BITS == 64 && GMP_NAIL_BITS == 0, "64-bit GMP limbs expected");

namespace privrec {

namespace {

struct BnFree {
  void operator()(BIGNUM* b) const { BN_free(b); }
};
struct CtxFree {
  void operator()(BN_CTX* c) const { BN_CTX_free(c); }
};
using Bn = std::unique_ptr<BIGNUM, BnFree>;
using BnCtx = std::unique_ptr<BN_CTX, CtxFree>;

Bn new_bn() {
  Bn b(BN_new());
  if (!b) throw std::bad_alloc();
  return b;
}

// One scratch context per thread; BN_CTX frames nest, so reuse is safe.
BN_CTX* thread_ctx() {
  thread_local BnCtx c(BN_CTX_new());
  if (!c) throw std::bad_alloc();
  return c.get();
}

void check(int ok) {
  if (!ok) throw std::runtime_error("bignum operation failed");
}

// Both libraries store little-endian 64-bit words, so words move directly.
void to_bn(BIGNUM* out, const mpz_class& x) {
  if (x < 0) throw std::invalid_argument("negative value");
  const std::size_t n = mpz_size(x.get_mpz_t());
  const mp_limb_t* p = mpz_limbs_read(x.get_mpz_t());
  check(BN_lebin2bn(reinterpret_cast<const unsigned char*>(p), static_cast<int>(n * sizeof(mp_limb_t)), out) !=
        nullptr);
}

mpz_class from_bn(const BIGNUM* b) {
  const int bytes = BN_num_bytes(b);
  mpz_class x;
  if (bytes == 0) return x;
  const std::size_t n = (static_cast<std::size_t>(bytes) + sizeof(mp_limb_t) - 1) / sizeof(mp_limb_t);
  mp_limb_t* w = mpz_limbs_write(x.get_mpz_t(), static_cast<mp_size_t>(n));
  BN_bn2lebinpad(b, reinterpret_cast<unsigned char*>(w), static_cast<int>(n * sizeof(mp_limb_t)));
  mpz_limbs_finish(x.get_mpz_t(), static_cast<mp_size_t>(n));
  return x;
}

// w bits of e starting at bit pos; e given as GMP limbs.
inline unsigned window_at(const mp_limb_t* e, std::size_t n, std::size_t pos, unsigned w) {
  const std::size_t li = pos / GMP_NUMB_BITS;
  const unsigned sh = pos % GMP_NUMB_BITS;
  if (li >= n) return 0;
  mp_limb_t v = e[li] >> sh;
  if (sh + w > GMP_NUMB_BITS && li + 1 < n) v |= e[li + 1] << (GMP_NUMB_BITS - sh);
  return static_cast<unsigned>(v & ((mp_limb_t{1} << w) - 1));
}

}  // namespace

struct MontgomeryContext::Impl {
  BN_MONT_CTX* mont = nullptr;
  Bn m;

  ~Impl() { BN_MONT_CTX_free(mont); }

  void to_mont(BIGNUM* out, const mpz_class& x, BN_CTX* ctx) const {
    to_bn(out, x);
    if (BN_cmp(out, m.get()) >= 0) check(BN_nnmod(out, out, m.get(), ctx));
    check(BN_to_montgomery(out, out, mont, ctx));
  }
  mpz_class from_mont(const BIGNUM* x, BN_CTX* ctx) const {
    Bn t = new_bn();
    check(BN_from_montgomery(t.get(), x, mont, ctx));
    return from_bn(t.get());
  }
  void mul(BIGNUM* r, const BIGNUM* a, const BIGNUM* b, BN_CTX* ctx) const {
    check(BN_mod_mul_montgomery(r, a, b, mont, ctx));
  }
};

MontgomeryContext::MontgomeryContext(const mpz_class& modulus) : m_(modulus), impl_(std::make_unique<Impl>()) {
  if (m_ <= 1 || mpz_even_p(m_.get_mpz_t())) throw std::invalid_argument("Montgomery modulus must be odd and > 1");
  impl_->m = new_bn();
  to_bn(impl_->m.get(), m_);
  impl_->mont = BN_MONT_CTX_new();
  if (!impl_->mont) throw std::bad_alloc();
  BN_CTX* ctx = thread_ctx();
  check(BN_MONT_CTX_set(impl_->mont, impl_->m.get(), ctx));
}

MontgomeryContext::~MontgomeryContext() = default;

unsigned MontgomeryContext::bits() const { return static_cast<unsigned>(mpz_sizeinbase(m_.get_mpz_t(), 2)); }

mpz_class MontgomeryContext::mulmod(const mpz_class& a, const mpz_class& b) const {
  mpz_class r = a * b;
  r %= m_;
  if (r < 0) r += m_;
  return r;
}

mpz_class MontgomeryContext::product(std::span<const mpz_class> xs) const {
  if (xs.empty()) return 1;
  if (xs.size() == 1) return mulmod(xs[0], 1);
  BN_CTX* ctx = thread_ctx();
  Bn acc = new_bn(), x = new_bn();
  impl_->to_mont(acc.get(), xs[0], ctx);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    impl_->to_mont(x.get(), xs[i], ctx);
    impl_->mul(acc.get(), acc.get(), x.get(), ctx);
  }
  return impl_->from_mont(acc.get(), ctx);
}

mpz_class MontgomeryContext::pow(const mpz_class& base, const mpz_class& e) const {
  if (e < 0) throw std::invalid_argument("negative exponent");
  BN_CTX* ctx = thread_ctx();
  Bn b = new_bn(), x = new_bn(), r = new_bn();
  to_bn(b.get(), base);
  if (BN_cmp(b.get(), impl_->m.get()) >= 0) check(BN_nnmod(b.get(), b.get(), impl_->m.get(), ctx));
  to_bn(x.get(), e);
  check(BN_mod_exp_mont(r.get(), b.get(), x.get(), impl_->m.get(), ctx, impl_->mont));
  return from_bn(r.get());
}

struct FixedBasePow::Table {
  std::vector<Bn> entries;
};

FixedBasePow::FixedBasePow(std::shared_ptr<const MontgomeryContext> ctx, const mpz_class& base, unsigned exp_bits,
                           unsigned window)
    : ctx_(std::move(ctx)), base_(base), exp_bits_(exp_bits), w_(window), table_(std::make_unique<Table>()) {
  if (w_ < 1 || w_ > 16) throw std::invalid_argument("window must be in [1, 16]");
  if (exp_bits_ == 0) throw std::invalid_argument("exp_bits must be positive");
  const auto& I = ctx_->impl();
  const std::size_t per = (std::size_t{1} << w_) - 1;
  windows_ = (exp_bits_ + w_ - 1) / w_;
  BN_CTX* bctx = thread_ctx();
  Bn g = new_bn();
  I.to_mont(g.get(), base_, bctx);
  auto& E = table_->entries;
  E.reserve(windows_ * per);
  for (unsigned i = 0; i < windows_; ++i) {
    const std::size_t row = E.size();
    E.push_back(new_bn());
    check(BN_copy(E.back().get(), g.get()) != nullptr);
    for (std::size_t v = 1; v < per; ++v) {
      E.push_back(new_bn());
      I.mul(E.back().get(), E[row + v - 1].get(), g.get(), bctx);
    }
    // next window base: g^(2^w) = g^(2^w - 1) * g
    I.mul(g.get(), E[row + per - 1].get(), g.get(), bctx);
  }
}

FixedBasePow::~FixedBasePow() = default;

mpz_class FixedBasePow::pow(const mpz_class& e) const {
  if (e < 0) throw std::invalid_argument("negative exponent");
  if (mpz_sizeinbase(e.get_mpz_t(), 2) > exp_bits_) return ctx_->pow(base_, e);
  const auto& I = ctx_->impl();
  const std::size_t per = (std::size_t{1} << w_) - 1;
  const mp_limb_t* el = mpz_limbs_read(e.get_mpz_t());
  const std::size_t en = mpz_size(e.get_mpz_t());
  BN_CTX* bctx = thread_ctx();
  Bn acc = new_bn();
  bool started = false;
  for (unsigned i = 0; i < windows_; ++i) {
    unsigned v = window_at(el, en, static_cast<std::size_t>(i) * w_, w_);
    if (!v) continue;
    const BIGNUM* t = table_->entries[i * per + v - 1].get();
    if (!started) {
      check(BN_copy(acc.get(), t) != nullptr);
      started = true;
    } else {
      I.mul(acc.get(), acc.get(), t, bctx);
    }
  }
  if (!started) return 1;
  return I.from_mont(acc.get(), bctx);
}

mpz_class multi_exp(const MontgomeryContext& ctx, std::span<const mpz_class> bases, std::span<const mpz_class> exps) {
  if (bases.size() != exps.size()) throw std::invalid_argument("multi_exp: size mismatch");
  const std::size_t n = bases.size();
  std::size_t maxbits = 0;
  for (const auto& e : exps) {
    if (e < 0) throw std::invalid_argument("negative exponent");
    if (e != 0) maxbits = std::max(maxbits, mpz_sizeinbase(e.get_mpz_t(), 2));
  }
  if (n == 0 || maxbits == 0) return 1;
  if (n == 1) return ctx.pow(bases[0], exps[0]);

  // window minimizing (bits / c) * (n + 2^(c+1))
  unsigned c = 1;
  double best = 1e300;
  for (unsigned w = 1; w <= 16; ++w) {
    double cost = std::ceil(static_cast<double>(maxbits) / w) * (static_cast<double>(n) + std::ldexp(2.0, w));
    if (cost < best) best = cost, c = w;
  }

  const auto& I = ctx.impl();
  BN_CTX* bctx = thread_ctx();
  std::vector<Bn> B;
  B.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    B.push_back(new_bn());
    I.to_mont(B.back().get(), bases[i], bctx);
  }
  std::vector<const mp_limb_t*> el(n);
  std::vector<std::size_t> en(n);
  for (std::size_t i = 0; i < n; ++i) {
    el[i] = mpz_limbs_read(exps[i].get_mpz_t());
    en[i] = mpz_size(exps[i].get_mpz_t());
  }

  const std::size_t nb = (std::size_t{1} << c) - 1;
  std::vector<Bn> bucket;
  bucket.reserve(nb);
  for (std::size_t v = 0; v < nb; ++v) bucket.push_back(new_bn());
  std::vector<char> used(nb);
  Bn acc = new_bn(), running = new_bn(), total = new_bn();
  bool have_acc = false;
  const std::size_t windows = (maxbits + c - 1) / c;
  for (std::size_t wi = windows; wi-- > 0;) {
    if (have_acc)
      for (unsigned s = 0; s < c; ++s) I.mul(acc.get(), acc.get(), acc.get(), bctx);
    std::fill(used.begin(), used.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      unsigned v = window_at(el[i], en[i], wi * c, c);
      if (!v) continue;
      BIGNUM* b = bucket[v - 1].get();
      if (used[v - 1]) {
        I.mul(b, b, B[i].get(), bctx);
      } else {
        check(BN_copy(b, B[i].get()) != nullptr);
        used[v - 1] = 1;
      }
    }
    bool have_run = false, have_total = false;
    for (std::size_t v = nb; v-- > 0;) {
      if (used[v]) {
        if (have_run) {
          I.mul(running.get(), running.get(), bucket[v].get(), bctx);
        } else {
          check(BN_copy(running.get(), bucket[v].get()) != nullptr);
          have_run = true;
        }
      }
      if (have_run) {
        if (have_total) {
          I.mul(total.get(), total.get(), running.get(), bctx);
        } else {
          check(BN_copy(total.get(), running.get()) != nullptr);
          have_total = true;
        }
      }
    }
    if (have_total) {
      if (have_acc) {
        I.mul(acc.get(), acc.get(), total.get(), bctx);
      } else {
        check(BN_copy(acc.get(), total.get()) != nullptr);
        have_acc = true;
      }
    }
  }
  if (!have_acc) return 1;
  return I.from_mont(acc.get(), bctx);
}

}  // namespace privrec
