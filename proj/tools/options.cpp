#include "options.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

#include "privrec/rule_io.hpp"

namespace privrec::cli {

Mode parse_mode(const std::string& name) {
  if (name == "exact-plain") return Mode::ExactPlain;
  if (name == "approx-plain") return Mode::ApproxPlain;
  if (name == "exact-private") return Mode::ExactPrivate;
  if (name == "approx-private") return Mode::ApproxPrivate;
  throw std::invalid_argument("unknown mode '" + name + "'");
}

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::ExactPlain: return "exact-plain";
    case Mode::ApproxPlain: return "approx-plain";
    case Mode::ExactPrivate: return "exact-private";
    case Mode::ApproxPrivate: return "approx-private";
  }
  return "?";
}

Criterion make_criterion(const QueryOptions& q) {
  OrderingFunction f{parse_ordering(q.ordering), {}, {}};
  if (q.criterion == "top") return TopAssoc{q.k, q.w, q.t, f};
  if (q.criterion == "top1") return Top1Assoc{f};
  if (q.criterion == "topk") return TopKAssoc{q.k, f};
  if (q.criterion == "all") return AllAssoc{q.w, q.t};
  if (q.criterion == "any") return AnyAssoc{q.k, q.w, q.t};
  throw std::invalid_argument("unknown criterion '" + q.criterion + "'");
}

RuleDatabase load_database(const DataOptions& d) {
  if (!d.rules_path.empty()) return load_rules(d.rules_path);
  SyntheticSpec spec;
  spec.rules = d.synthetic_rules;
  spec.universe = d.universe;
  spec.min_len = d.min_len;
  spec.max_len = d.max_len;
  spec.seed = d.seed;
  return gen_synthetic(spec);
}

LshParams lsh_params(unsigned sig_bits, std::optional<double> recall_delta, std::size_t query_len,
                     std::uint64_t seed) {
  if (!recall_delta) return LshParams::defaults(seed).capped(sig_bits);
  std::vector<unsigned> widths;
  for (unsigned b : {32u, 16u, 10u})
    if (b <= sig_bits) widths.push_back(b);
  if (widths.empty()) widths.push_back(sig_bits);
  return LshParams::recall_schedule(widths, std::max<std::size_t>(query_len, 1), *recall_delta, 4096, seed);
}

std::vector<Transaction> sample_transactions(const RuleDatabase& db, std::size_t len, std::size_t count,
                                             std::uint64_t seed) {
  if (db.size() == 0 || len == 0) throw std::invalid_argument("need rules and a positive transaction length");
  if (len > db.universe_size()) throw std::invalid_argument("transaction longer than the item universe");
  std::mt19937_64 rng(seed);
  ZipfSampler zipf(db.universe_size(), 1.0);
  std::vector<Transaction> out;
  std::size_t misses = 0;
  while (out.size() < count) {
    const auto& r = db.rules()[rng() % db.size()];
    std::vector<ItemId> items;
    if (r.antecedent.size() <= len) items = r.antecedent.vec();
    else if (++misses < 1000 * count) continue;
    while (items.size() < len) {
      ItemId x = zipf(rng);
      if (std::find(items.begin(), items.end(), x) == items.end()) items.push_back(x);
    }
    out.push_back(ItemSet::from_unsorted(items));
  }
  return out;
}

}  // namespace privrec::cli
