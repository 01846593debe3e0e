#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace privrec {

using ItemId = std::uint32_t;
using RuleId = std::uint32_t;
using Weight = std::int64_t;

// Sorted set of distinct positive item ids.
class ItemSet {
 public:
  ItemSet() = default;
  ItemSet(std::initializer_list<ItemId> items);

  // Sorts and removes duplicates.
  static ItemSet from_unsorted(std::vector<ItemId> items);
  // Throws std::invalid_argument unless strictly ascending and non-zero.
  static ItemSet from_sorted(std::vector<ItemId> items);

  std::span<const ItemId> items() const { return items_; }
  const std::vector<ItemId>& vec() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  ItemId front() const { return items_.front(); }
  ItemId back() const { return items_.back(); }
  ItemId operator[](std::size_t i) const { return items_[i]; }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  bool contains(ItemId item) const;
  bool is_subset_of(const ItemSet& other) const;
  bool intersects(const ItemSet& other) const;
  ItemSet set_union(const ItemSet& other) const;

  friend bool operator==(const ItemSet&, const ItemSet&) = default;
  friend auto operator<=>(const ItemSet& a, const ItemSet& b) { return a.items_ <=> b.items_; }

 private:
  explicit ItemSet(std::vector<ItemId> sorted, int) : items_(std::move(sorted)) {}
  std::vector<ItemId> items_;
};

struct ItemSetHash {
  std::size_t operator()(const ItemSet& s) const noexcept;
};

using Transaction = ItemSet;

struct AssociationRule {
  RuleId id = 0;
  ItemSet antecedent;
  ItemSet consequent;
  Weight weight = 0;

  friend bool operator==(const AssociationRule&, const AssociationRule&) = default;
};

// Rule before id assignment, as produced by parsers and generators.
struct RuleDraft {
  ItemSet antecedent;
  ItemSet consequent;
  Weight weight = 0;
};

class RuleDatabase {
 public:
  RuleDatabase() = default;
  // Validates ids (contiguous from 1), non-empty antecedents, disjointness,
  // weights and the universe bound. Throws std::invalid_argument.
  RuleDatabase(std::vector<AssociationRule> rules, std::size_t universe_size,
               ItemSet global_frequent_items = {});

  // Merges duplicate antecedents (max weight, union of consequents) and
  // assigns ids in order of first appearance. merged_count receives the
  // number of drafts folded into an earlier one.
  static RuleDatabase from_drafts(std::vector<RuleDraft> drafts, std::size_t universe_size,
                                  ItemSet global_frequent_items = {},
                                  std::size_t* merged_count = nullptr);

  const std::vector<AssociationRule>& rules() const { return rules_; }
  const AssociationRule& rule(RuleId id) const { return rules_.at(id - 1); }
  std::size_t size() const { return rules_.size(); }
  bool empty() const { return rules_.empty(); }
  std::size_t universe_size() const { return universe_size_; }
  const ItemSet& global_frequent_items() const { return frequent_; }
  Weight max_weight() const { return max_weight_; }

  // Number of rules mentioning each item (antecedent or consequent), index 0 unused.
  std::vector<std::uint32_t> item_frequencies() const;

 private:
  std::vector<AssociationRule> rules_;
  std::size_t universe_size_ = 0;
  ItemSet frequent_;
  Weight max_weight_ = 0;
};

enum class OrderingKind { WeightOnly, LengthOnly, LengthThenWeight, WeightThenLength };

using IntMap = std::function<std::int64_t(std::int64_t)>;

struct OrderingFunction {
  OrderingKind kind = OrderingKind::WeightOnly;
  IntMap g1;  // empty means identity
  IntMap g2;

  static OrderingFunction weight_only() { return {OrderingKind::WeightOnly, {}, {}}; }
  static OrderingFunction length_only() { return {OrderingKind::LengthOnly, {}, {}}; }
  static OrderingFunction length_then_weight() { return {OrderingKind::LengthThenWeight, {}, {}}; }
  static OrderingFunction weight_then_length() { return {OrderingKind::WeightThenLength, {}, {}}; }
};

const char* ordering_name(OrderingKind kind);
OrderingKind parse_ordering(const std::string& name);

struct OrderingContext {
  Weight max_weight = 0;
  std::size_t universe_size = 0;

  static OrderingContext of(const RuleDatabase& db) { return {db.max_weight(), db.universe_size()}; }
};

// Throws std::overflow_error when the value leaves the int64 range.
std::int64_t ordering_value(const OrderingFunction& f, const AssociationRule& rule,
                            const OrderingContext& ctx);
std::int64_t ordering_value(const OrderingFunction& f, std::size_t antecedent_len, Weight weight,
                            const OrderingContext& ctx);

struct TopAssoc { std::size_t k; Weight w; std::size_t t; OrderingFunction f; };
struct Top1Assoc { OrderingFunction f; };
struct TopKAssoc { std::size_t k; OrderingFunction f; };
struct AllAssoc { Weight w; std::size_t t; };
struct AnyAssoc { std::size_t k; Weight w; std::size_t t; };

using Criterion = std::variant<TopAssoc, Top1Assoc, TopKAssoc, AllAssoc, AnyAssoc>;

// Criterion reduced to its general form against a concrete database.
struct ResolvedCriterion {
  std::size_t k = 1;
  Weight w = 0;
  std::size_t t = 1;
  OrderingFunction f;
  bool lowest_ids = false;  // AnyAssoc
};

ResolvedCriterion resolve(const Criterion& c, std::size_t db_size, std::size_t universe_size);
std::string criterion_name(const Criterion& c);

struct Recommendation {
  ItemId item = 0;
  Weight weight = 0;
  friend bool operator==(const Recommendation&, const Recommendation&) = default;
};
using RecommendationList = std::vector<Recommendation>;

bool is_applicable(const AssociationRule& rule, const Transaction& t);

// Orders by f descending, then by lower rule id.
void sort_by_ordering(std::vector<AssociationRule>& rules, const OrderingFunction& f,
                      const OrderingContext& ctx);

// Applies the w/t filters and ordering/truncation to rules already known applicable.
std::vector<AssociationRule> finish_selection(std::vector<AssociationRule> applicable,
                                              const ResolvedCriterion& rc,
                                              const OrderingContext& ctx);

std::vector<AssociationRule> select_rules(const RuleDatabase& db, const Transaction& t,
                                          const Criterion& c);

std::optional<AssociationRule> lscs(const RuleDatabase& db, const Transaction& t);
// f_prime empty behaves as f' == 1.
std::optional<AssociationRule> gscs(const RuleDatabase& db, const Transaction& t,
                                    const std::optional<OrderingFunction>& f_prime);

ItemSet collate_uncapacitated(std::span<const AssociationRule> rules);
RecommendationList collate_capacitated(std::span<const AssociationRule> rules, std::size_t cap);
RecommendationList default_recommendation(const RuleDatabase& db);

// Selection followed by capacitated collation; falls back to the default list.
RecommendationList recommend(const RuleDatabase& db, const Transaction& t, const Criterion& c,
                             std::size_t cap);

}  // namespace privrec
