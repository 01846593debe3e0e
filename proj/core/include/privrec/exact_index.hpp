#pragma once

#include <algorithm>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "privrec/rules.hpp"

namespace privrec {

using u128 = unsigned __int128;

// 2^127 - 1
inline constexpr u128 kMersenne127 = (static_cast<u128>(1) << 127) - 1;

u128 mulmod_m127(u128 a, u128 b);
u128 addmod_m127(u128 a, u128 b);
// Horner reduction of a byte string modulo 2^127 - 1 with radix 256.
u128 reduce_key(std::string_view bytes);

struct UniversalHash {
  u128 a = 1;
  u128 b = 0;
  std::uint64_t range = 1;

  std::uint64_t operator()(u128 x) const {
    return static_cast<std::uint64_t>(addmod_m127(mulmod_m127(a, x), b) % range);
  }
  template <class Rng>
  static UniversalHash draw(Rng& rng, std::uint64_t range) {
    UniversalHash h;
    h.range = range;
    do h.a = (static_cast<u128>(rng()) << 64 | rng()) & kMersenne127; while (h.a == 0 || h.a == kMersenne127);
    do h.b = (static_cast<u128>(rng()) << 64 | rng()) & kMersenne127; while (h.b == kMersenne127);
    return h;
  }
};

enum class FingerprintAlgorithm : std::uint8_t { Sha256 = 1, Md5 = 2 };

class Fingerprinter {
 public:
  Fingerprinter() = default;
  Fingerprinter(FingerprintAlgorithm alg, unsigned bits);

  std::vector<std::uint8_t> operator()(std::string_view data) const;
  FingerprintAlgorithm algorithm() const { return alg_; }
  unsigned bits() const { return bits_; }
  std::size_t bytes() const { return (bits_ + 7) / 8; }

 private:
  FingerprintAlgorithm alg_ = FingerprintAlgorithm::Sha256;
  unsigned bits_ = 64;
};

std::string encode_itemset(const ItemSet& s);

// Non-empty subsets with size <= t_max in size-then-lexicographic order.
class SubsetEnumerator {
 public:
  SubsetEnumerator(const Transaction& t, std::size_t t_max);
  // Returns false when exhausted.
  bool next(ItemSet& out);

 private:
  std::vector<ItemId> items_;
  std::size_t t_max_;
  std::vector<std::size_t> pos_;
};

std::vector<ItemSet> subsets_up_to(const Transaction& t, std::size_t t_max);
std::uint64_t subset_count(std::size_t n, std::size_t t_max);

// The publicly declared part of a two-level table: hash pair, prefix and
// fingerprint function.
struct TwoLevelHashing {
  std::uint64_t L = 16;
  UniversalHash h_r;
  UniversalHash h_s;
  std::string prefix;
  Fingerprinter fingerprinter;

  std::uint64_t virtual_size() const { return L * L + L; }
  std::uint64_t index_of(std::string_view key) const;
  std::uint64_t index_of_reduced(u128 x) const { return L * h_r(x) + h_s(x); }
  std::string prefixed(std::string_view key) const;
  std::vector<std::uint8_t> fingerprint(std::string_view key) const;
};

class ByteWriter;
class ByteReader;
void write_hashing(ByteWriter& w, const TwoLevelHashing& h);
TwoLevelHashing read_hashing(ByteReader& r);

struct TwoLevelConfig {
  unsigned fingerprint_bits = 64;
  std::size_t prefix_len = 16;
  FingerprintAlgorithm algorithm = FingerprintAlgorithm::Sha256;
  std::uint64_t seed = 1;
  unsigned max_resamples = 64;
};

struct BuildStats {
  unsigned first_level_draws = 0;
  unsigned second_level_draws = 0;
  std::uint64_t sum_squares = 0;
};

class TableBuildError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Draws h_r until the bucket loads are small, then h_s until the slots are
// distinct; returns the slot of every key. Throws TableBuildError once a
// retry cap is exceeded.
TwoLevelHashing build_two_level_hashing(const std::vector<std::string>& keys, const TwoLevelConfig& cfg,
                                        std::vector<std::uint64_t>& slots, BuildStats& stats);

template <class Payload>
class TwoLevelTable {
 public:
  struct Entry {
    std::uint64_t slot;
    std::vector<std::uint8_t> fingerprint;
    Payload payload;
  };

  TwoLevelTable() = default;

  static TwoLevelTable build(std::vector<std::string> keys, std::vector<Payload> payloads,
                             const TwoLevelConfig& cfg) {
    if (keys.size() != payloads.size()) throw std::invalid_argument("keys/payloads size mismatch");
    TwoLevelTable t;
    std::vector<std::uint64_t> slots;
    t.hashing_ = build_two_level_hashing(keys, cfg, slots, t.stats_);
    t.entries_.reserve(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i)
      t.entries_.push_back({slots[i], t.hashing_.fingerprint(keys[i]), std::move(payloads[i])});
    std::sort(t.entries_.begin(), t.entries_.end(),
              [](const Entry& a, const Entry& b) { return a.slot < b.slot; });
    return t;
  }

  static TwoLevelTable from_parts(TwoLevelHashing hashing, std::vector<Entry> entries, BuildStats stats = {}) {
    TwoLevelTable t;
    t.hashing_ = std::move(hashing);
    t.entries_ = std::move(entries);
    t.stats_ = stats;
    std::sort(t.entries_.begin(), t.entries_.end(),
              [](const Entry& a, const Entry& b) { return a.slot < b.slot; });
    return t;
  }

  const TwoLevelHashing& hashing() const { return hashing_; }
  const BuildStats& stats() const { return stats_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::uint64_t L() const { return hashing_.L; }
  std::uint64_t virtual_size() const { return hashing_.virtual_size(); }
  std::uint64_t index_of(std::string_view key) const { return hashing_.index_of(key); }

  const Entry* at_slot(std::uint64_t slot) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), slot,
                               [](const Entry& e, std::uint64_t s) { return e.slot < s; });
    return (it != entries_.end() && it->slot == slot) ? &*it : nullptr;
  }

  const Payload* fetch(std::string_view key) const {
    const Entry* e = at_slot(index_of(key));
    if (!e || e->fingerprint != hashing_.fingerprint(key)) return nullptr;
    return &e->payload;
  }

 private:
  TwoLevelHashing hashing_;
  BuildStats stats_;
  std::vector<Entry> entries_;
};

struct Record {
  RuleId rule_id = 0;
  std::vector<std::uint8_t> fingerprint;
  ItemSet consequent;
  Weight weight = 0;
  std::uint32_t antecedent_len = 0;
};

struct RulePayload {
  RuleId rule_id = 0;
  ItemSet consequent;
  Weight weight = 0;
  std::uint32_t antecedent_len = 0;
};

struct ExactQueryStats {
  std::uint64_t fetches = 0;
  std::uint64_t hits = 0;
};

class ExactIndex {
 public:
  ExactIndex() = default;

  static ExactIndex prep(const RuleDatabase& db, const TwoLevelConfig& cfg);

  const TwoLevelTable<RulePayload>& table() const { return table_; }
  const TwoLevelHashing& hashing() const { return table_.hashing(); }
  const BuildStats& stats() const { return table_.stats(); }
  std::uint64_t index_of(std::string_view key) const { return table_.index_of(key); }
  std::optional<Record> fetch(std::string_view key) const;
  const OrderingContext& context() const { return ctx_; }
  std::size_t rule_count() const { return rule_count_; }

  void save(std::ostream& out) const;
  static ExactIndex load(std::istream& in);

 private:
  TwoLevelTable<RulePayload> table_;
  OrderingContext ctx_;
  std::size_t rule_count_ = 0;
};

inline constexpr std::size_t kDefaultSubsetCap = 25;

std::vector<AssociationRule> exact_query(const Transaction& t, const ExactIndex& index, const Criterion& c,
                                         std::size_t subset_cap = kDefaultSubsetCap,
                                         ExactQueryStats* stats = nullptr);

}  // namespace privrec
