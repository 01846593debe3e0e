#include "privrec/rule_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <unordered_set>

namespace privrec {

namespace {

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_item(std::string_view tok, ItemId& out) {
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && p == tok.data() + tok.size() && out > 0;
}

std::uint64_t uniform(std::mt19937_64& rng, std::uint64_t lo, std::uint64_t hi) {
  const std::uint64_t span = hi - lo + 1;
  if (span == 0) return rng();
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t x;
  do x = rng(); while (x >= limit);
  return lo + x % span;
}

}  // namespace

ItemSet most_frequent_items(const std::vector<AssociationRule>& rules, std::size_t universe_size,
                            std::size_t count) {
  std::vector<std::uint32_t> freq(universe_size + 1, 0);
  for (const auto& r : rules) {
    for (ItemId x : r.antecedent) ++freq[x];
    for (ItemId x : r.consequent) ++freq[x];
  }
  std::vector<ItemId> ids;
  for (ItemId i = 1; i <= universe_size; ++i)
    if (freq[i] > 0) ids.push_back(i);
  std::stable_sort(ids.begin(), ids.end(), [&](ItemId a, ItemId b) { return freq[a] > freq[b]; });
  if (ids.size() > count) ids.resize(count);
  return ItemSet::from_unsorted(std::move(ids));
}

RuleDatabase parse_spmf(std::istream& in, const LoadOptions& opts, LoadReport* report) {
  std::vector<RuleDraft> drafts;
  std::string line;
  std::size_t lineno = 0;
  ItemId max_id = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = split_ws(line);
    if (toks.empty() || toks[0][0] == '%' || toks[0][0] == '@') continue;
    std::size_t i = 0;
    std::vector<ItemId> ante, cons;
    ItemId v;
    for (; i < toks.size() && toks[i] != "==>"; ++i) {
      if (!parse_item(toks[i], v)) throw ParseError(lineno, "bad antecedent item '" + std::string(toks[i]) + "'");
      ante.push_back(v);
    }
    if (i == toks.size()) throw ParseError(lineno, "missing '==>'");
    ++i;
    for (; i < toks.size() && toks[i][0] != '#'; ++i) {
      if (!parse_item(toks[i], v)) throw ParseError(lineno, "bad consequent item '" + std::string(toks[i]) + "'");
      cons.push_back(v);
    }
    if (ante.empty()) throw ParseError(lineno, "empty antecedent");
    bool have_conf = false;
    double conf = 0;
    for (; i < toks.size(); ++i) {
      if (toks[i] == "#CONF:" || toks[i] == "#SUP:") {
        if (i + 1 >= toks.size()) throw ParseError(lineno, "missing value after " + std::string(toks[i]));
        std::string val(toks[i + 1]);
        char* end = nullptr;
        double x = std::strtod(val.c_str(), &end);
        if (end != val.c_str() + val.size() || !std::isfinite(x) || x < 0)
          throw ParseError(lineno, "bad number '" + val + "'");
        if (toks[i] == "#CONF:") {
          conf = x;
          have_conf = true;
        }
        ++i;
      } else if (toks[i][0] == '#') {
        ++i;  // other measures such as #LIFT: are ignored
      } else {
        throw ParseError(lineno, "unexpected token '" + std::string(toks[i]) + "'");
      }
    }
    if (!have_conf) throw ParseError(lineno, "missing #CONF:");
    RuleDraft d;
    d.antecedent = ItemSet::from_unsorted(std::move(ante));
    d.consequent = ItemSet::from_unsorted(std::move(cons));
    if (d.antecedent.intersects(d.consequent)) throw ParseError(lineno, "antecedent and consequent overlap");
    d.weight = std::llround(conf * static_cast<double>(opts.weight_scale));
    max_id = std::max(max_id, d.antecedent.back());
    if (!d.consequent.empty()) max_id = std::max(max_id, d.consequent.back());
    drafts.push_back(std::move(d));
  }
  std::size_t universe = opts.universe_size ? opts.universe_size : max_id;
  if (max_id > universe) throw ParseError(lineno, "item id exceeds the configured universe");
  std::size_t merged = 0;
  const std::size_t parsed = drafts.size();
  auto db = RuleDatabase::from_drafts(std::move(drafts), universe, {}, &merged);
  auto frequent = most_frequent_items(db.rules(), universe, opts.frequent_items);
  if (report) *report = {lineno, parsed, merged};
  std::vector<AssociationRule> rules = db.rules();
  return RuleDatabase(std::move(rules), universe, std::move(frequent));
}

RuleDatabase load_rules(const std::string& path, const LoadOptions& opts, LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open rule file " + path);
  return parse_spmf(in, opts, report);
}

void write_spmf(std::ostream& out, const RuleDatabase& db, std::int64_t weight_scale) {
  int digits = 0;
  for (std::int64_t s = weight_scale; s > 1; s /= 10) ++digits;
  for (const auto& r : db.rules()) {
    for (std::size_t i = 0; i < r.antecedent.size(); ++i) out << (i ? " " : "") << r.antecedent[i];
    out << " ==>";
    for (ItemId x : r.consequent) out << ' ' << x;
    out << " #SUP: 1 #CONF: " << r.weight / weight_scale;
    if (digits > 0) {
      std::string frac = std::to_string(r.weight % weight_scale);
      out << '.' << std::string(digits - frac.size(), '0') << frac;
    }
    out << '\n';
  }
}

Transaction parse_item_list(const std::string& text) {
  std::vector<ItemId> items;
  std::string s = text;
  std::replace(s.begin(), s.end(), ',', ' ');
  for (auto tok : split_ws(s)) {
    ItemId v;
    if (!parse_item(tok, v)) throw std::invalid_argument("bad item '" + std::string(tok) + "'");
    items.push_back(v);
  }
  return ItemSet::from_unsorted(std::move(items));
}

std::vector<Transaction> parse_transactions(std::istream& in) {
  std::vector<Transaction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (split_ws(line).empty()) continue;
    try {
      out.push_back(parse_item_list(line));
    } catch (const std::invalid_argument& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return out;
}

std::vector<Transaction> load_transactions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open transaction file " + path);
  return parse_transactions(in);
}

ZipfSampler::ZipfSampler(std::size_t n, double s) : cdf_(n) {
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += 1.0 / std::pow(static_cast<double>(i + 1), s);
    cdf_[i] = acc;
  }
  for (auto& c : cdf_) c /= acc;
}

ItemId ZipfSampler::sample(double u) const {
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) --it;
  return static_cast<ItemId>(it - cdf_.begin() + 1);
}

RuleDatabase gen_synthetic(const SyntheticSpec& spec) {
  if (spec.min_len < 1 || spec.min_len > spec.max_len) throw std::invalid_argument("bad length range");
  if (spec.universe < spec.max_len + spec.max_consequent)
    throw std::invalid_argument("universe too small for the requested rule lengths");
  std::mt19937_64 rng(spec.seed);
  ZipfSampler zipf(spec.universe, spec.zipf_s);
  std::unordered_set<ItemSet, ItemSetHash> seen;
  seen.reserve(spec.rules * 2);
  std::vector<AssociationRule> rules;
  rules.reserve(spec.rules);

  auto draw_distinct = [&](std::size_t len, const ItemSet* exclude) {
    std::vector<ItemId> items;
    while (items.size() < len) {
      ItemId x = zipf(rng);
      if (exclude && exclude->contains(x)) continue;
      if (std::find(items.begin(), items.end(), x) == items.end()) items.push_back(x);
    }
    return ItemSet::from_unsorted(std::move(items));
  };

  for (std::size_t n = 0; n < spec.rules; ++n) {
    std::size_t len = uniform(rng, spec.min_len, spec.max_len);
    ItemSet ante;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 0 && attempt % 64 == 0) {
        if (len == spec.max_len) {
          if (attempt > 64 * 16) throw std::runtime_error("cannot draw distinct antecedents; enlarge the universe");
        } else {
          ++len;
        }
      }
      ante = draw_distinct(len, nullptr);
      if (seen.insert(ante).second) break;
    }
    std::size_t clen = uniform(rng, spec.min_consequent, spec.max_consequent);
    AssociationRule r;
    r.id = static_cast<RuleId>(n + 1);
    r.consequent = draw_distinct(clen, &ante);
    r.antecedent = std::move(ante);
    r.weight = static_cast<Weight>(uniform(rng, spec.min_weight, spec.max_weight));
    rules.push_back(std::move(r));
  }
  auto frequent = most_frequent_items(rules, spec.universe, spec.frequent_items);
  return RuleDatabase(std::move(rules), spec.universe, std::move(frequent));
}

}  // namespace privrec
