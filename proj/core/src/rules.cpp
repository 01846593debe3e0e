#include "privrec/rules.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

namespace privrec {

ItemSet::ItemSet(std::initializer_list<ItemId> items) : ItemSet(from_unsorted(std::vector<ItemId>(items))) {}

ItemSet ItemSet::from_unsorted(std::vector<ItemId> items) {
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  if (!items.empty() && items.front() == 0) throw std::invalid_argument("item id 0 is not allowed");
  return ItemSet(std::move(items), 0);
}

ItemSet ItemSet::from_sorted(std::vector<ItemId> items) {
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i] == 0) throw std::invalid_argument("item id 0 is not allowed");
    if (i > 0 && items[i - 1] >= items[i]) throw std::invalid_argument("item set not strictly ascending");
  }
  return ItemSet(std::move(items), 0);
}

bool ItemSet::contains(ItemId item) const {
  return std::binary_search(items_.begin(), items_.end(), item);
}

bool ItemSet::is_subset_of(const ItemSet& other) const {
  return std::includes(other.items_.begin(), other.items_.end(), items_.begin(), items_.end());
}

bool ItemSet::intersects(const ItemSet& other) const {
  auto a = items_.begin();
  auto b = other.items_.begin();
  while (a != items_.end() && b != other.items_.end()) {
    if (*a == *b) return true;
    if (*a < *b) ++a; else ++b;
  }
  return false;
}

ItemSet ItemSet::set_union(const ItemSet& other) const {
  std::vector<ItemId> out;
  out.reserve(items_.size() + other.items_.size());
  std::set_union(items_.begin(), items_.end(), other.items_.begin(), other.items_.end(),
                 std::back_inserter(out));
  return ItemSet(std::move(out), 0);
}

std::size_t ItemSetHash::operator()(const ItemSet& s) const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (ItemId x : s) {
    h ^= x;
    h *= 0x100000001b3ULL;
    h ^= h >> 29;
  }
  return static_cast<std::size_t>(h);
}

RuleDatabase::RuleDatabase(std::vector<AssociationRule> rules, std::size_t universe_size,
                           ItemSet global_frequent_items)
    : rules_(std::move(rules)), universe_size_(universe_size), frequent_(std::move(global_frequent_items)) {
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const auto& r = rules_[i];
    if (r.id != i + 1) throw std::invalid_argument("rule ids must be contiguous from 1");
    if (r.antecedent.empty()) throw std::invalid_argument("rule " + std::to_string(r.id) + " has an empty antecedent");
    if (r.antecedent.intersects(r.consequent))
      throw std::invalid_argument("rule " + std::to_string(r.id) + " antecedent and consequent overlap");
    if (r.weight < 0) throw std::invalid_argument("rule " + std::to_string(r.id) + " has a negative weight");
    if (r.antecedent.back() > universe_size_ || (!r.consequent.empty() && r.consequent.back() > universe_size_))
      throw std::invalid_argument("rule " + std::to_string(r.id) + " mentions an item outside the universe");
    max_weight_ = std::max(max_weight_, r.weight);
  }
  if (!frequent_.empty() && frequent_.back() > universe_size_)
    throw std::invalid_argument("frequent item outside the universe");
}

RuleDatabase RuleDatabase::from_drafts(std::vector<RuleDraft> drafts, std::size_t universe_size,
                                       ItemSet global_frequent_items, std::size_t* merged_count) {
  std::unordered_map<ItemSet, std::size_t, ItemSetHash> seen;
  std::vector<AssociationRule> rules;
  rules.reserve(drafts.size());
  std::size_t merged = 0;
  for (auto& d : drafts) {
    auto [it, fresh] = seen.emplace(d.antecedent, rules.size());
    if (fresh) {
      AssociationRule r;
      r.id = static_cast<RuleId>(rules.size() + 1);
      r.antecedent = std::move(d.antecedent);
      r.consequent = std::move(d.consequent);
      r.weight = d.weight;
      rules.push_back(std::move(r));
    } else {
      auto& r = rules[it->second];
      r.weight = std::max(r.weight, d.weight);
      r.consequent = r.consequent.set_union(d.consequent);
      ++merged;
    }
  }
  if (merged_count) *merged_count = merged;
  return RuleDatabase(std::move(rules), universe_size, std::move(global_frequent_items));
}

std::vector<std::uint32_t> RuleDatabase::item_frequencies() const {
  std::vector<std::uint32_t> freq(universe_size_ + 1, 0);
  for (const auto& r : rules_) {
    for (ItemId x : r.antecedent) ++freq[x];
    for (ItemId x : r.consequent) ++freq[x];
  }
  return freq;
}

const char* ordering_name(OrderingKind kind) {
  switch (kind) {
    case OrderingKind::WeightOnly: return "weight";
    case OrderingKind::LengthOnly: return "length";
    case OrderingKind::LengthThenWeight: return "length-weight";
    case OrderingKind::WeightThenLength: return "weight-length";
  }
  return "?";
}

OrderingKind parse_ordering(const std::string& name) {
  if (name == "weight") return OrderingKind::WeightOnly;
  if (name == "length") return OrderingKind::LengthOnly;
  if (name == "length-weight") return OrderingKind::LengthThenWeight;
  if (name == "weight-length") return OrderingKind::WeightThenLength;
  throw std::invalid_argument("unknown ordering '" + name + "'");
}

namespace {

__int128 apply_map(const IntMap& g, std::int64_t x) { return g ? g(x) : x; }

std::int64_t narrow(__int128 v) {
  if (v > INT64_MAX || v < INT64_MIN) throw std::overflow_error("ordering value overflows int64");
  return static_cast<std::int64_t>(v);
}

}  // namespace

std::int64_t ordering_value(const OrderingFunction& f, std::size_t len, Weight weight,
                            const OrderingContext& ctx) {
  const auto plen = static_cast<std::int64_t>(len);
  switch (f.kind) {
    case OrderingKind::WeightOnly:
      return narrow(apply_map(f.g1, weight));
    case OrderingKind::LengthOnly:
      return narrow(apply_map(f.g2, plen));
    case OrderingKind::LengthThenWeight: {
      __int128 hi = apply_map(f.g1, ctx.max_weight) * apply_map(f.g2, plen);
      return narrow(apply_map(f.g1, weight) + hi);
    }
    case OrderingKind::WeightThenLength: {
      __int128 hi = apply_map(f.g2, static_cast<std::int64_t>(ctx.universe_size)) * apply_map(f.g1, weight);
      return narrow(apply_map(f.g2, plen) + hi);
    }
  }
  return 0;
}

std::int64_t ordering_value(const OrderingFunction& f, const AssociationRule& rule,
                            const OrderingContext& ctx) {
  return ordering_value(f, rule.antecedent.size(), rule.weight, ctx);
}

ResolvedCriterion resolve(const Criterion& c, std::size_t db_size, std::size_t universe_size) {
  ResolvedCriterion rc;
  const std::size_t all_t = std::max<std::size_t>(universe_size, 1);
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, TopAssoc>) {
          rc = {v.k, v.w, v.t, v.f, false};
        } else if constexpr (std::is_same_v<T, Top1Assoc>) {
          rc = {1, 0, all_t, v.f, false};
        } else if constexpr (std::is_same_v<T, TopKAssoc>) {
          rc = {v.k, 0, all_t, v.f, false};
        } else if constexpr (std::is_same_v<T, AllAssoc>) {
          rc = {std::max<std::size_t>(db_size, 1), v.w, v.t, OrderingFunction::weight_only(), false};
        } else {
          rc = {v.k, v.w, v.t, OrderingFunction::weight_only(), true};
        }
      },
      c);
  if (rc.k < 1) throw std::invalid_argument("criterion k must be >= 1");
  if (rc.w < 0) throw std::invalid_argument("criterion w must be >= 0");
  if (rc.t < 1) throw std::invalid_argument("criterion t must be >= 1");
  return rc;
}

std::string criterion_name(const Criterion& c) {
  static const char* names[] = {"top", "top1", "topk", "all", "any"};
  return names[c.index()];
}

bool is_applicable(const AssociationRule& rule, const Transaction& t) {
  return rule.antecedent.is_subset_of(t);
}

void sort_by_ordering(std::vector<AssociationRule>& rules, const OrderingFunction& f,
                      const OrderingContext& ctx) {
  std::vector<std::pair<std::int64_t, std::size_t>> keys(rules.size());
  for (std::size_t i = 0; i < rules.size(); ++i) keys[i] = {ordering_value(f, rules[i], ctx), i};
  std::sort(keys.begin(), keys.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return rules[a.second].id < rules[b.second].id;
  });
  std::vector<AssociationRule> out;
  out.reserve(rules.size());
  for (const auto& k : keys) out.push_back(std::move(rules[k.second]));
  rules = std::move(out);
}

std::vector<AssociationRule> finish_selection(std::vector<AssociationRule> applicable,
                                              const ResolvedCriterion& rc,
                                              const OrderingContext& ctx) {
  std::erase_if(applicable, [&](const AssociationRule& r) {
    return r.weight < rc.w || r.antecedent.size() > rc.t;
  });
  if (rc.lowest_ids) {
    std::sort(applicable.begin(), applicable.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
  } else {
    sort_by_ordering(applicable, rc.f, ctx);
  }
  if (applicable.size() > rc.k) applicable.resize(rc.k);
  return applicable;
}

std::vector<AssociationRule> select_rules(const RuleDatabase& db, const Transaction& t,
                                          const Criterion& c) {
  const ResolvedCriterion rc = resolve(c, db.size(), db.universe_size());
  std::vector<AssociationRule> hits;
  for (const auto& r : db.rules()) {
    if (is_applicable(r, t)) hits.push_back(r);
  }
  return finish_selection(std::move(hits), rc, OrderingContext::of(db));
}

std::optional<AssociationRule> lscs(const RuleDatabase& db, const Transaction& t) {
  return gscs(db, t, std::nullopt);
}

std::optional<AssociationRule> gscs(const RuleDatabase& db, const Transaction& t,
                                    const std::optional<OrderingFunction>& f_prime) {
  const auto ctx = OrderingContext::of(db);
  const AssociationRule* best = nullptr;
  __int128 best_score = 0;
  for (const auto& r : db.rules()) {
    if (!is_applicable(r, t)) continue;
    __int128 fv = f_prime ? ordering_value(*f_prime, r, ctx) : 1;
    __int128 score = fv * static_cast<__int128>(r.antecedent.size());
    if (!best || score > best_score) {
      best = &r;
      best_score = score;
    }
  }
  if (!best) return std::nullopt;
  return *best;
}

ItemSet collate_uncapacitated(std::span<const AssociationRule> rules) {
  std::vector<ItemId> all;
  for (const auto& r : rules) all.insert(all.end(), r.consequent.begin(), r.consequent.end());
  return ItemSet::from_unsorted(std::move(all));
}

RecommendationList collate_capacitated(std::span<const AssociationRule> rules, std::size_t cap) {
  if (cap < 1) throw std::invalid_argument("collate capacity must be >= 1");
  std::map<ItemId, Weight> acc;
  for (const auto& r : rules) {
    for (ItemId x : r.consequent) acc[x] += r.weight;
  }
  RecommendationList out;
  out.reserve(acc.size());
  for (const auto& [item, w] : acc) out.push_back({item, w});
  std::stable_sort(out.begin(), out.end(),
                   [](const Recommendation& a, const Recommendation& b) { return a.weight > b.weight; });
  if (out.size() > cap) out.resize(cap);
  return out;
}

RecommendationList default_recommendation(const RuleDatabase& db) {
  RecommendationList out;
  for (ItemId x : db.global_frequent_items()) out.push_back({x, 0});
  return out;
}

RecommendationList recommend(const RuleDatabase& db, const Transaction& t, const Criterion& c,
                             std::size_t cap) {
  auto rules = select_rules(db, t, c);
  if (rules.empty()) return default_recommendation(db);
  return collate_capacitated(rules, cap);
}

}  // namespace privrec
