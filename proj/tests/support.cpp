#include "support.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace privrec::testing {

ItemSet random_itemset(std::mt19937_64& rng, std::size_t universe, std::size_t min_len, std::size_t max_len) {
  max_len = std::min(max_len, universe);
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<ItemId> item(1, static_cast<ItemId>(universe));
  std::set<ItemId> s;
  const std::size_t n = len(rng);
  while (s.size() < n) s.insert(item(rng));
  return ItemSet::from_sorted({s.begin(), s.end()});
}

RuleDatabase random_db(std::mt19937_64& rng, const RandomDbSpec& spec, ItemSet frequent) {
  std::uniform_int_distribution<std::size_t> count(1, spec.max_rules);
  std::uniform_int_distribution<Weight> weight(0, spec.max_weight);
  const std::size_t want = count(rng);
  std::set<ItemSet> seen;
  std::vector<AssociationRule> rules;
  for (std::size_t tries = 0; rules.size() < want && tries < want * 20; ++tries) {
    auto p = random_itemset(rng, spec.universe, 1, spec.max_antecedent);
    if (p.size() == spec.universe || !seen.insert(p).second) continue;
    std::vector<ItemId> rest;
    for (ItemId i = 1; i <= spec.universe; ++i)
      if (!p.contains(i)) rest.push_back(i);
    std::shuffle(rest.begin(), rest.end(), rng);
    std::uniform_int_distribution<std::size_t> qlen(1, std::min(spec.max_consequent, rest.size()));
    rest.resize(qlen(rng));
    AssociationRule r;
    r.id = static_cast<RuleId>(rules.size() + 1);
    r.antecedent = p;
    r.consequent = ItemSet::from_unsorted(rest);
    r.weight = weight(rng);
    rules.push_back(std::move(r));
  }
  return RuleDatabase(std::move(rules), spec.universe, std::move(frequent));
}

std::int64_t brute_order_value(OrderingKind kind, std::size_t len, Weight w, Weight w_max, std::size_t universe) {
  const auto l = static_cast<std::int64_t>(len);
  switch (kind) {
    case OrderingKind::WeightOnly: return w;
    case OrderingKind::LengthOnly: return l;
    case OrderingKind::LengthThenWeight: return w + w_max * l;
    case OrderingKind::WeightThenLength: return l + static_cast<std::int64_t>(universe) * w;
  }
  return 0;
}

std::vector<RuleId> brute_select(const RuleDatabase& db, const Transaction& t, const Criterion& c) {
  std::size_t k = db.size(), tmax = std::max<std::size_t>(db.universe_size(), 1);
  Weight w = 0;
  OrderingKind kind = OrderingKind::WeightOnly;
  bool any = false;
  if (auto* v = std::get_if<TopAssoc>(&c)) k = v->k, w = v->w, tmax = v->t, kind = v->f.kind;
  if (auto* v = std::get_if<Top1Assoc>(&c)) k = 1, kind = v->f.kind;
  if (auto* v = std::get_if<TopKAssoc>(&c)) k = v->k, kind = v->f.kind;
  if (auto* v = std::get_if<AllAssoc>(&c)) w = v->w, tmax = v->t;
  if (auto* v = std::get_if<AnyAssoc>(&c)) k = v->k, w = v->w, tmax = v->t, any = true;

  Weight w_max = 0;
  for (const auto& r : db.rules()) w_max = std::max(w_max, r.weight);

  std::vector<std::pair<std::int64_t, RuleId>> hits;
  for (const auto& r : db.rules()) {
    bool contained = true;
    for (ItemId i : r.antecedent) contained = contained && std::find(t.begin(), t.end(), i) != t.end();
    if (!contained || r.weight < w || r.antecedent.size() > tmax) continue;
    std::int64_t v = any ? 0 : brute_order_value(kind, r.antecedent.size(), r.weight, w_max, db.universe_size());
    hits.emplace_back(-v, r.id);
  }
  std::sort(hits.begin(), hits.end());
  std::vector<RuleId> out;
  for (std::size_t i = 0; i < hits.size() && i < k; ++i) out.push_back(hits[i].second);
  return out;
}

RecommendationList brute_collate(const RuleDatabase& db, const std::vector<RuleId>& ids, std::size_t cap) {
  std::map<ItemId, Weight> acc;
  for (RuleId id : ids)
    for (ItemId i : db.rule(id).consequent) acc[i] += db.rule(id).weight;
  std::vector<std::pair<Weight, ItemId>> v;
  for (auto [i, w] : acc) v.emplace_back(-w, i);
  std::sort(v.begin(), v.end());
  RecommendationList out;
  for (std::size_t i = 0; i < v.size() && i < cap; ++i) out.push_back({v[i].second, -v[i].first});
  return out;
}

std::vector<RuleId> ids_of(const std::vector<AssociationRule>& rules) {
  std::vector<RuleId> out;
  for (const auto& r : rules) out.push_back(r.id);
  return out;
}

std::vector<ItemId> items_of(const RecommendationList& l) {
  std::vector<ItemId> out;
  for (const auto& r : l) out.push_back(r.item);
  return out;
}

namespace {

void batcher_merge(std::size_t lo, std::size_t n, std::size_t r, std::vector<std::pair<std::size_t, std::size_t>>& out) {
  std::size_t step = r * 2;
  if (step < n) {
    batcher_merge(lo, n, step, out);
    batcher_merge(lo + r, n, step, out);
    for (std::size_t i = lo + r; i + r < lo + n; i += step) out.emplace_back(i, i + r);
  } else {
    out.emplace_back(lo, lo + r);
  }
}

void batcher_sort(std::size_t lo, std::size_t n, std::vector<std::pair<std::size_t, std::size_t>>& out) {
  if (n > 1) {
    std::size_t m = n / 2;
    batcher_sort(lo, m, out);
    batcher_sort(lo + m, m, out);
    batcher_merge(lo, n, 1, out);
  }
}

}  // namespace

std::size_t batcher_size(std::size_t n) {
  std::size_t N = 1;
  while (N < n) N <<= 1;
  std::vector<std::pair<std::size_t, std::size_t>> all;
  batcher_sort(0, N, all);
  return static_cast<std::size_t>(std::count_if(all.begin(), all.end(), [&](auto p) { return p.second < n; }));
}

std::string check_session_fetch(const SessionTables& T, const RuleDatabase& original, std::size_t block_bytes) {
  const auto& fetch = T.entries.at(TableId::Fetch);
  const auto& recs = T.entries.at(TableId::Records);
  auto find = [](const std::vector<OtEntry>& v, std::uint64_t index) {
    auto it = std::lower_bound(v.begin(), v.end(), index, [](const OtEntry& e, std::uint64_t i) { return e.index < i; });
    return it != v.end() && it->index == index ? &*it : nullptr;
  };
  for (const auto& r : T.adb.db.rules()) {
    const auto key = encode_itemset(r.antecedent);
    const auto* fe = find(fetch, T.hashing.index_of(key));
    if (!fe) return "no fetch slot for " + key;
    auto payload = decode_blocks(fe->blocks, block_bytes);
    auto fp = T.hashing.fingerprint(key);
    if (!payload || payload->size() < fp.size() + 4 || !std::equal(fp.begin(), fp.end(), payload->begin()))
      return "bad fingerprint for " + key;
    ByteReader hr(std::span<const std::uint8_t>(*payload).subspan(fp.size()));
    auto handle = hr.u32();
    if (handle != T.handles[r.id - 1]) return "wrong handle for " + key;
    const auto* re = find(recs, handle);
    if (!re) return "missing record for " + key;
    auto rec = decode_blocks(re->blocks, block_bytes);
    if (!rec) return "undecodable record for " + key;
    ByteReader rr(*rec);
    std::vector<ItemId> p(rr.u16());
    for (auto& x : p) x = rr.u32();
    if (ItemSet::from_sorted(p) != r.antecedent) return "record antecedent mismatch for " + key;
    const auto& orig = original.rule(T.adb.original_id[r.id - 1]);
    if (T.anon.deanonymize(r.antecedent) != orig.antecedent) return "anonymization mismatch for " + key;
  }
  return {};
}

}  // namespace privrec::testing
