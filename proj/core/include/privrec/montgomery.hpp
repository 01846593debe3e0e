#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include <gmpxx.h>

namespace privrec {

// Fixed odd modulus arithmetic; Montgomery multiplication is delegated to
// OpenSSL's BN_MONT_CTX (assembly kernels), everything else stays in GMP.
class MontgomeryContext {
 public:
  explicit MontgomeryContext(const mpz_class& modulus);
  ~MontgomeryContext();
  MontgomeryContext(const MontgomeryContext&) = delete;
  MontgomeryContext& operator=(const MontgomeryContext&) = delete;

  const mpz_class& modulus() const { return m_; }
  unsigned bits() const;

  mpz_class mulmod(const mpz_class& a, const mpz_class& b) const;
  mpz_class product(std::span<const mpz_class> xs) const;
  mpz_class pow(const mpz_class& base, const mpz_class& e) const;

  struct Impl;
  const Impl& impl() const { return *impl_; }

 private:
  mpz_class m_;
  std::unique_ptr<Impl> impl_;
};

// Precomputed windows base^(v * 2^(w*i)) for exponents below 2^exp_bits; a
// power costs about exp_bits / w multiplications.
class FixedBasePow {
 public:
  FixedBasePow(std::shared_ptr<const MontgomeryContext> ctx, const mpz_class& base, unsigned exp_bits,
               unsigned window = 10);
  ~FixedBasePow();
  FixedBasePow(const FixedBasePow&) = delete;
  FixedBasePow& operator=(const FixedBasePow&) = delete;

  mpz_class pow(const mpz_class& e) const;
  unsigned exp_bits() const { return exp_bits_; }

 private:
  struct Table;
  std::shared_ptr<const MontgomeryContext> ctx_;
  mpz_class base_;
  unsigned exp_bits_;
  unsigned w_;
  unsigned windows_;
  std::unique_ptr<Table> table_;
};

// prod bases[i]^exps[i] mod m (bucket method); exps non-negative.
mpz_class multi_exp(const MontgomeryContext& ctx, std::span<const mpz_class> bases,
                    std::span<const mpz_class> exps);

}  // namespace privrec
