#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "privrec/rules.hpp"

namespace privrec {

struct LshLevel {
  unsigned bits = 16;         // K_m
  unsigned repetitions = 16;  // L_m
};

struct LshParams {
  std::vector<LshLevel> levels;
  std::uint64_t seed = 1;

  // K = (32, 16, 10), L = (32, 16, 8)
  static LshParams defaults(std::uint64_t seed = 1);
  // Repetitions from the amplification rule L_m = ceil(ln(1/delta) / p1^K_m),
  // p1 being the per-bit collision probability of an applicable antecedent
  // with a query of query_len items. Levels where that exceeds table_budget
  // become early-exit levels sized so that a premature exit on a partial
  // candidate set (at most 2^query_len - 1 applicable rules) stays below delta.
  static LshParams recall_schedule(const std::vector<unsigned>& widths, std::size_t query_len, double delta,
                                   std::size_t table_budget, std::uint64_t seed);
  // Keeps only the levels whose width is at most max_bits.
  LshParams capped(unsigned max_bits) const;
  unsigned max_bits() const;
  std::size_t table_count() const;
  void validate() const;
};

// Counter-based i.i.d. standard normal entries G[m][l][k][coord]; any entry
// can be produced on demand from the seed, so nothing is stored.
class GaussianBank {
 public:
  GaussianBank() = default;
  GaussianBank(std::uint64_t seed, std::size_t dimension) : seed_(seed), dim_(dimension) {}

  double entry(unsigned m, unsigned l, unsigned k, std::size_t coord) const {
    return entry_in_row(row_key(m, l, k), coord);
  }
  std::vector<double> vector(unsigned m, unsigned l, unsigned k) const;
  std::size_t dimension() const { return dim_; }
  std::uint64_t seed() const { return seed_; }

  std::uint64_t row_key(unsigned m, unsigned l, unsigned k) const;
  static double entry_in_row(std::uint64_t row, std::size_t coord);

 private:
  std::uint64_t seed_ = 0;
  std::size_t dim_ = 0;
};

struct SparseVector {
  std::vector<std::uint32_t> index;  // ascending
  std::vector<double> value;
  std::size_t dimension = 0;

  std::vector<double> dense() const;
};

// P(x) = [x; sqrt(1 - |x|^2)]
std::vector<double> augment(std::span<const double> x);
SparseVector augment(const SparseVector& x);

// p / |p|_1 in R^d, item j at coordinate j-1.
SparseVector scaled_antecedent(const ItemSet& p, std::size_t universe);
// [T; 0] in R^{d+1}.
SparseVector query_vector(const Transaction& t, std::size_t universe);

// Bit k (least significant first) set iff <G[m][l][k], v> >= 0.
std::uint64_t signature(const GaussianBank& bank, unsigned m, unsigned l, unsigned bits,
                        std::span<const double> v);
std::uint64_t signature(const GaussianBank& bank, unsigned m, unsigned l, unsigned bits,
                        const SparseVector& v);
std::string signature_string(std::uint64_t sig, unsigned bits);

struct CandidateTrace {
  int level = -1;                // level that produced the candidates, -1 if none
  std::size_t collected = 0;     // ids gathered including duplicates
  bool interrupted = false;      // 3 L_m cap fired
};

class LshIndex {
 public:
  LshIndex() = default;

  static LshIndex prep(std::span<const ItemSet> antecedents, std::size_t universe, const LshParams& params);

  std::vector<RuleId> query_candidates(const Transaction& t, CandidateTrace* trace = nullptr) const;

  std::uint64_t data_signature(unsigned m, unsigned l, const ItemSet& antecedent) const;
  std::uint64_t query_signature(unsigned m, unsigned l, const Transaction& t) const;
  std::span<const RuleId> bucket(unsigned m, unsigned l, std::uint64_t sig) const;

  // Index over the levels of width <= max_bits, sharing hash functions and
  // buckets with this one.
  LshIndex restricted(unsigned max_bits) const;

  const LshParams& params() const { return params_; }
  const GaussianBank& bank() const { return bank_; }
  std::size_t universe() const { return universe_; }
  std::size_t size() const { return size_; }

  void save(std::ostream& out) const;
  static LshIndex load(std::istream& in);

 private:
  struct Table {
    std::vector<std::uint64_t> keys;  // sorted, parallel to ids
    std::vector<RuleId> ids;
  };
  std::size_t table_slot(unsigned m, unsigned l) const { return offsets_[m] + l; }
  unsigned bank_level(unsigned m) const { return bank_levels_.empty() ? m : bank_levels_[m]; }

  LshParams params_;
  GaussianBank bank_;
  std::size_t universe_ = 0;
  std::size_t size_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<unsigned> bank_levels_;  // bank row level per level, empty means identity
  std::vector<Table> tables_;
};

// Applicable candidate maximizing f (ties: lower id); nullopt when none.
std::optional<AssociationRule> query_top1(const Transaction& t, const LshIndex& index, const RuleDatabase& db,
                                          const OrderingFunction& f);
// Same, with the default rule substituted when nothing applies.
AssociationRule query_top1_or(const Transaction& t, const LshIndex& index, const RuleDatabase& db,
                              const OrderingFunction& f, const AssociationRule& default_rule);

struct TopKCopy {
  std::vector<RuleId> members;  // local id i+1 maps to members[i]
  LshIndex index;
};

struct TopKIndex {
  std::size_t k = 1;
  std::vector<TopKCopy> copies;
};

std::size_t topk_copy_count(std::size_t k, std::size_t db_size);
TopKIndex topk_prep(const RuleDatabase& db, std::size_t k, const LshParams& params, std::uint64_t seed);
std::vector<AssociationRule> query_topk(const Transaction& t, const TopKIndex& indexes, const RuleDatabase& db,
                                        const OrderingFunction& f, std::size_t k);

}  // namespace privrec
