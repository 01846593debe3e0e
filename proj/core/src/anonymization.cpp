#include "privrec/anonymization.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace privrec {

ItemSet AnonymizationTables::anonymize(const ItemSet& s) const {
  std::vector<ItemId> out;
  for (ItemId i : s)
    if (ItemId a = map(i)) out.push_back(a);
  return ItemSet::from_unsorted(std::move(out));
}

ItemSet AnonymizationTables::deanonymize(const ItemSet& s) const {
  std::vector<ItemId> out;
  for (ItemId a : s)
    if (ItemId i = unmap(a)) out.push_back(i);
  return ItemSet::from_unsorted(std::move(out));
}

AnonymizationTables build_anonymization(std::size_t universe, std::span<const std::uint32_t> frequencies,
                                        std::uint32_t theta, RandomSource& rng) {
  if (frequencies.size() < universe + 1) throw std::invalid_argument("frequency table shorter than the universe");
  AnonymizationTables t;
  t.threshold = theta;
  std::vector<ItemId> pi(universe);
  std::iota(pi.begin(), pi.end(), 1u);
  std::shuffle(pi.begin(), pi.end(), rng);
  t.forward.assign(universe + 1, 0);
  t.reverse.assign(universe + 1, 0);
  for (std::size_t i = 1; i <= universe; ++i) {
    if (frequencies[i] < theta) continue;
    t.forward[i] = pi[i - 1];
    t.reverse[pi[i - 1]] = static_cast<ItemId>(i);
  }
  return t;
}

AnonymizedDb anonymize_db(const RuleDatabase& db, const AnonymizationTables& tables) {
  AnonymizedDb out;
  std::vector<AssociationRule> rules;
  auto rename = [&](const ItemSet& s, bool& ok) {
    std::vector<ItemId> v;
    v.reserve(s.size());
    for (ItemId i : s) {
      ItemId a = tables.map(i);
      if (!a) ok = false;
      v.push_back(a);
    }
    return v;
  };
  for (const auto& r : db.rules()) {
    bool ok = true;
    auto p = rename(r.antecedent, ok);
    auto q = rename(r.consequent, ok);
    if (!ok) continue;
    AssociationRule a;
    a.id = static_cast<RuleId>(rules.size() + 1);
    a.antecedent = ItemSet::from_unsorted(std::move(p));
    a.consequent = ItemSet::from_unsorted(std::move(q));
    a.weight = r.weight;
    rules.push_back(std::move(a));
    out.original_id.push_back(r.id);
  }
  out.db = RuleDatabase(std::move(rules), db.universe_size(), tables.anonymize(db.global_frequent_items()));
  return out;
}

}  // namespace privrec
