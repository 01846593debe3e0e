#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <string>

#include "privrec/protocol.hpp"
#include "privrec/rules.hpp"

namespace privrec::testing {

struct RandomDbSpec {
  std::size_t universe = 12;
  std::size_t max_rules = 200;
  std::size_t max_antecedent = 4;
  std::size_t max_consequent = 3;
  Weight max_weight = 50;  // small so ties happen
};

ItemSet random_itemset(std::mt19937_64& rng, std::size_t universe, std::size_t min_len, std::size_t max_len);
// Distinct antecedents, ids 1..n, consequents disjoint from antecedents.
RuleDatabase random_db(std::mt19937_64& rng, const RandomDbSpec& spec, ItemSet frequent = {});

// Straightforward re-statement of the selection semantics, kept apart from
// the library on purpose.
std::vector<RuleId> brute_select(const RuleDatabase& db, const Transaction& t, const Criterion& c);
std::int64_t brute_order_value(OrderingKind kind, std::size_t len, Weight w, Weight w_max, std::size_t universe);
RecommendationList brute_collate(const RuleDatabase& db, const std::vector<RuleId>& ids, std::size_t cap);

std::vector<RuleId> ids_of(const std::vector<AssociationRule>& rules);
// Item ids with weights zeroed.
std::vector<ItemId> items_of(const RecommendationList& l);

// Comparator count of recursive Batcher odd-even mergesort on the next power
// of two, with comparators touching padding dropped.
std::size_t batcher_size(std::size_t n);

// Walks every rule of a session's anonymized database through the fetch and
// record tables; empty string when all resolve back to the original rule.
std::string check_session_fetch(const SessionTables& tables, const RuleDatabase& original, std::size_t block_bytes);

}  // namespace privrec::testing
