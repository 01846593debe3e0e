#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "privrec/random.hpp"
#include "privrec/rules.hpp"

namespace privrec {

// Forward table T over [0, |I|]: T[i] = pi(i) for frequent items, 0 (inf)
// otherwise. RT[pi(i)] = i.
struct AnonymizationTables {
  std::vector<ItemId> forward;
  std::vector<ItemId> reverse;
  std::uint32_t threshold = 1;

  std::size_t universe() const { return forward.empty() ? 0 : forward.size() - 1; }
  // 0 for infrequent or out-of-range items.
  ItemId map(ItemId item) const { return item < forward.size() ? forward[item] : 0; }
  ItemId unmap(ItemId anon) const { return anon < reverse.size() ? reverse[anon] : 0; }
  // Drops infrequent items.
  ItemSet anonymize(const ItemSet& s) const;
  ItemSet deanonymize(const ItemSet& s) const;
  bool frequent(ItemId item) const { return map(item) != 0; }
};

// frequencies[i] for i in [1, universe]; item i is infrequent when
// frequencies[i] < theta.
AnonymizationTables build_anonymization(std::size_t universe, std::span<const std::uint32_t> frequencies,
                                        std::uint32_t theta, RandomSource& rng);

// Rule database with every item renamed through the tables. Rules touching an
// infrequent item keep their ids but can never apply to an anonymized
// transaction; they are dropped and the surviving rules keep ascending ids.
struct AnonymizedDb {
  RuleDatabase db;
  std::vector<RuleId> original_id;  // index = anonymized id - 1
};
AnonymizedDb anonymize_db(const RuleDatabase& db, const AnonymizationTables& tables);

}  // namespace privrec
