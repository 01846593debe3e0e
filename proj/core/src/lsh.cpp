#include "privrec/lsh.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

#include "privrec/bytes.hpp"

namespace privrec {

namespace {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

LshParams LshParams::defaults(std::uint64_t seed) {
  LshParams p;
  p.levels = {{32, 32}, {16, 16}, {10, 8}};
  p.seed = seed;
  return p;
}

LshParams LshParams::recall_schedule(const std::vector<unsigned>& widths, std::size_t query_len, double delta,
                                     std::size_t table_budget, std::uint64_t seed) {
  if (query_len == 0 || !(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("bad recall schedule inputs");
  // An antecedent inside T has angle acos(sqrt(|p| / |T|)) to the query; the
  // single-item antecedent is the hardest case.
  const double p1 = 1.0 - std::acos(1.0 / std::sqrt(static_cast<double>(query_len))) / std::numbers::pi;
  const double applicable = std::ldexp(1.0, static_cast<int>(std::min<std::size_t>(query_len, 60))) - 1.0;
  LshParams p;
  p.seed = seed;
  for (unsigned k : widths) {
    const double hit = std::pow(p1, k);
    double reps = std::ceil(std::log(1.0 / delta) / hit);
    if (reps > static_cast<double>(table_budget)) reps = std::floor(delta / (applicable * hit));
    reps = std::clamp(reps, 1.0, static_cast<double>(table_budget));
    p.levels.push_back({k, static_cast<unsigned>(reps)});
  }
  p.validate();
  return p;
}

LshParams LshParams::capped(unsigned max_bits) const {
  LshParams p = *this;
  std::erase_if(p.levels, [&](const LshLevel& l) { return l.bits > max_bits; });
  if (p.levels.empty()) throw std::invalid_argument("no LSH level fits the signature width");
  return p;
}

unsigned LshParams::max_bits() const {
  unsigned b = 0;
  for (const auto& l : levels) b = std::max(b, l.bits);
  return b;
}

std::size_t LshParams::table_count() const {
  std::size_t n = 0;
  for (const auto& l : levels) n += l.repetitions;
  return n;
}

void LshParams::validate() const {
  if (levels.empty()) throw std::invalid_argument("LSH needs at least one level");
  for (const auto& l : levels) {
    if (l.bits < 1 || l.bits > 64) throw std::invalid_argument("LSH width must be in [1, 64]");
    if (l.repetitions < 1) throw std::invalid_argument("LSH repetitions must be >= 1");
  }
}

std::uint64_t GaussianBank::row_key(unsigned m, unsigned l, unsigned k) const {
  std::uint64_t h = splitmix64(seed_ ^ 0x6c73682d62616e6bULL);
  h = splitmix64(h + m);
  h = splitmix64(h + l);
  return splitmix64(h + k);
}

double GaussianBank::entry_in_row(std::uint64_t row, std::size_t coord) {
  const std::uint64_t c = static_cast<std::uint64_t>(coord) * 2;
  const std::uint64_t x1 = splitmix64(row + c * 0xd1b54a32d192ed03ULL);
  const std::uint64_t x2 = splitmix64(row + (c + 1) * 0xd1b54a32d192ed03ULL);
  const double u1 = static_cast<double>((x1 >> 11) + 1) * 0x1.0p-53;  // (0, 1]
  const double u2 = static_cast<double>(x2 >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<double> GaussianBank::vector(unsigned m, unsigned l, unsigned k) const {
  std::vector<double> v(dim_);
  const auto row = row_key(m, l, k);
  for (std::size_t j = 0; j < dim_; ++j) v[j] = entry_in_row(row, j);
  return v;
}

std::vector<double> SparseVector::dense() const {
  std::vector<double> v(dimension, 0.0);
  for (std::size_t i = 0; i < index.size(); ++i) v[index[i]] = value[i];
  return v;
}

namespace {

double augmented_tail(double norm2) {
  if (norm2 > (1.0 + 1e-9) * (1.0 + 1e-9)) throw std::invalid_argument("augment: input norm exceeds 1");
  // rounding residue of a unit input maps to an exact zero
  const double rest = 1.0 - norm2;
  return rest <= 1e-12 ? 0.0 : std::sqrt(rest);
}

}  // namespace

std::vector<double> augment(std::span<const double> x) {
  double n2 = 0;
  for (double v : x) n2 += v * v;
  std::vector<double> out(x.begin(), x.end());
  out.push_back(augmented_tail(n2));
  return out;
}

SparseVector augment(const SparseVector& x) {
  double n2 = 0;
  for (double v : x.value) n2 += v * v;
  SparseVector out = x;
  out.index.push_back(static_cast<std::uint32_t>(x.dimension));
  out.value.push_back(augmented_tail(n2));
  out.dimension = x.dimension + 1;
  return out;
}

SparseVector scaled_antecedent(const ItemSet& p, std::size_t universe) {
  if (p.empty()) throw std::invalid_argument("antecedent must be non-empty");
  SparseVector v;
  v.dimension = universe;
  const double s = 1.0 / static_cast<double>(p.size());
  for (ItemId x : p) {
    if (x > universe) throw std::invalid_argument("item outside the universe");
    v.index.push_back(x - 1);
    v.value.push_back(s);
  }
  return v;
}

SparseVector query_vector(const Transaction& t, std::size_t universe) {
  SparseVector v;
  v.dimension = universe + 1;
  for (ItemId x : t) {
    if (x > universe) continue;  // unknown items cannot match any antecedent
    v.index.push_back(x - 1);
    v.value.push_back(1.0);
  }
  return v;
}

std::uint64_t signature(const GaussianBank& bank, unsigned m, unsigned l, unsigned bits,
                        std::span<const double> v) {
  std::uint64_t sig = 0;
  for (unsigned k = 0; k < bits; ++k) {
    const auto row = bank.row_key(m, l, k);
    double s = 0;
    for (std::size_t j = 0; j < v.size(); ++j) s += GaussianBank::entry_in_row(row, j) * v[j];
    if (s >= 0) sig |= std::uint64_t{1} << k;
  }
  return sig;
}

std::uint64_t signature(const GaussianBank& bank, unsigned m, unsigned l, unsigned bits, const SparseVector& v) {
  std::uint64_t sig = 0;
  for (unsigned k = 0; k < bits; ++k) {
    const auto row = bank.row_key(m, l, k);
    double s = 0;
    for (std::size_t i = 0; i < v.index.size(); ++i) s += GaussianBank::entry_in_row(row, v.index[i]) * v.value[i];
    if (s >= 0) sig |= std::uint64_t{1} << k;
  }
  return sig;
}

std::string signature_string(std::uint64_t sig, unsigned bits) {
  std::string s(bits, '0');
  for (unsigned k = 0; k < bits; ++k)
    if (sig >> k & 1) s[k] = '1';
  return s;
}

LshIndex LshIndex::prep(std::span<const ItemSet> antecedents, std::size_t universe, const LshParams& params) {
  params.validate();
  LshIndex idx;
  idx.params_ = params;
  idx.bank_ = GaussianBank(params.seed, universe + 1);
  idx.universe_ = universe;
  idx.size_ = antecedents.size();
  std::size_t off = 0;
  for (const auto& lvl : params.levels) {
    idx.offsets_.push_back(off);
    off += lvl.repetitions;
  }
  idx.tables_.resize(off);

  std::vector<SparseVector> data;
  data.reserve(antecedents.size());
  std::vector<std::uint32_t> used;
  for (const auto& p : antecedents) {
    data.push_back(augment(scaled_antecedent(p, universe)));
    used.insert(used.end(), data.back().index.begin(), data.back().index.end());
  }
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());

  const std::size_t dim = universe + 1;
  std::vector<double> g;
  std::vector<std::pair<std::uint64_t, RuleId>> pairs(data.size());
  for (unsigned m = 0; m < params.levels.size(); ++m) {
    const unsigned bits = params.levels[m].bits;
    g.assign(static_cast<std::size_t>(bits) * dim, 0.0);
    for (unsigned l = 0; l < params.levels[m].repetitions; ++l) {
      for (unsigned k = 0; k < bits; ++k) {
        const auto row = idx.bank_.row_key(m, l, k);
        double* gk = g.data() + static_cast<std::size_t>(k) * dim;
        for (auto c : used) gk[c] = GaussianBank::entry_in_row(row, c);
      }
      for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& v = data[i];
        std::uint64_t sig = 0;
        for (unsigned k = 0; k < bits; ++k) {
          const double* gk = g.data() + static_cast<std::size_t>(k) * dim;
          double s = 0;
          for (std::size_t j = 0; j < v.index.size(); ++j) s += gk[v.index[j]] * v.value[j];
          if (s >= 0) sig |= std::uint64_t{1} << k;
        }
        pairs[i] = {sig, static_cast<RuleId>(i + 1)};
      }
      std::sort(pairs.begin(), pairs.end());
      auto& t = idx.tables_[idx.table_slot(m, l)];
      t.keys.resize(pairs.size());
      t.ids.resize(pairs.size());
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        t.keys[i] = pairs[i].first;
        t.ids[i] = pairs[i].second;
      }
    }
  }
  return idx;
}

std::uint64_t LshIndex::data_signature(unsigned m, unsigned l, const ItemSet& antecedent) const {
  return signature(bank_, bank_level(m), l, params_.levels.at(m).bits, augment(scaled_antecedent(antecedent, universe_)));
}

std::uint64_t LshIndex::query_signature(unsigned m, unsigned l, const Transaction& t) const {
  return signature(bank_, bank_level(m), l, params_.levels.at(m).bits, query_vector(t, universe_));
}

std::span<const RuleId> LshIndex::bucket(unsigned m, unsigned l, std::uint64_t sig) const {
  const auto& t = tables_.at(table_slot(m, l));
  auto [lo, hi] = std::equal_range(t.keys.begin(), t.keys.end(), sig);
  return {t.ids.data() + (lo - t.keys.begin()), static_cast<std::size_t>(hi - lo)};
}

std::vector<RuleId> LshIndex::query_candidates(const Transaction& t, CandidateTrace* trace) const {
  CandidateTrace tr;
  std::vector<RuleId> out;
  if (size_ == 0) {
    if (trace) *trace = tr;
    return out;
  }
  const SparseVector q = query_vector(t, universe_);
  for (unsigned m = 0; m < params_.levels.size(); ++m) {
    const auto& lvl = params_.levels[m];
    std::size_t collected = 0;
    bool interrupted = false;
    for (unsigned l = 0; l < lvl.repetitions; ++l) {
      auto b = bucket(m, l, signature(bank_, bank_level(m), l, lvl.bits, q));
      out.insert(out.end(), b.begin(), b.end());
      collected += b.size();
      if (collected > 3ull * lvl.repetitions) {
        interrupted = true;
        break;
      }
    }
    if (!out.empty()) {
      std::sort(out.begin(), out.end());
      out.erase(std::unique(out.begin(), out.end()), out.end());
      tr = {static_cast<int>(m), collected, interrupted};
      break;
    }
  }
  if (trace) *trace = tr;
  return out;
}

LshIndex LshIndex::restricted(unsigned max_bits) const {
  LshIndex out;
  out.params_.seed = params_.seed;
  out.bank_ = bank_;
  out.universe_ = universe_;
  out.size_ = size_;
  std::size_t off = 0;
  for (unsigned m = 0; m < params_.levels.size(); ++m) {
    const auto& lvl = params_.levels[m];
    if (lvl.bits > max_bits) continue;
    out.params_.levels.push_back(lvl);
    out.bank_levels_.push_back(bank_level(m));
    out.offsets_.push_back(off);
    off += lvl.repetitions;
    for (unsigned l = 0; l < lvl.repetitions; ++l) out.tables_.push_back(tables_[table_slot(m, l)]);
  }
  if (out.params_.levels.empty()) throw std::invalid_argument("no LSH level fits the signature width");
  return out;
}

namespace {

constexpr char kLshMagic[4] = {'P', 'R', 'X', 'L'};
constexpr std::uint16_t kLshVersion = 1;

}  // namespace

void LshIndex::save(std::ostream& out) const {
  ByteWriter w;
  w.raw(std::string_view(kLshMagic, 4));
  w.u16(kLshVersion);
  w.u64(params_.seed);
  w.u32(static_cast<std::uint32_t>(params_.levels.size()));
  for (unsigned m = 0; m < params_.levels.size(); ++m) {
    w.u32(params_.levels[m].bits);
    w.u32(params_.levels[m].repetitions);
    w.u32(bank_level(m));
  }
  w.u64(universe_);
  w.u64(size_);
  for (const auto& t : tables_) {
    for (std::size_t i = 0; i < t.keys.size(); ++i) {
      w.u64(t.keys[i]);
      w.u32(t.ids[i]);
    }
  }
  write_stream(out, w.bytes());
}

LshIndex LshIndex::load(std::istream& in) {
  Bytes data = read_stream(in);
  ByteReader r(data);
  auto magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), kLshMagic)) throw DecodeError("not an LSH index file");
  if (r.u16() != kLshVersion) throw DecodeError("unsupported LSH index version");
  LshIndex idx;
  idx.params_.seed = r.u64();
  std::size_t levels = r.count(12);
  for (std::size_t i = 0; i < levels; ++i) {
    LshLevel l;
    l.bits = r.u32();
    l.repetitions = r.u32();
    idx.params_.levels.push_back(l);
    idx.bank_levels_.push_back(r.u32());
  }
  idx.params_.validate();
  idx.universe_ = r.u64();
  idx.size_ = r.u64();
  idx.bank_ = GaussianBank(idx.params_.seed, idx.universe_ + 1);
  std::size_t off = 0;
  for (const auto& lvl : idx.params_.levels) {
    idx.offsets_.push_back(off);
    off += lvl.repetitions;
  }
  if (idx.size_ > r.remaining() / 12 / std::max<std::size_t>(off, 1)) throw DecodeError("truncated LSH index");
  idx.tables_.resize(off);
  for (auto& t : idx.tables_) {
    t.keys.resize(idx.size_);
    t.ids.resize(idx.size_);
    for (std::size_t i = 0; i < idx.size_; ++i) {
      t.keys[i] = r.u64();
      t.ids[i] = r.u32();
    }
  }
  r.expect_done();
  return idx;
}

std::optional<AssociationRule> query_top1(const Transaction& t, const LshIndex& index, const RuleDatabase& db,
                                          const OrderingFunction& f) {
  const auto ctx = OrderingContext::of(db);
  const AssociationRule* best = nullptr;
  std::int64_t best_f = 0;
  for (RuleId id : index.query_candidates(t)) {
    const auto& r = db.rule(id);
    if (!is_applicable(r, t)) continue;
    const auto fv = ordering_value(f, r, ctx);
    if (!best || fv > best_f || (fv == best_f && r.id < best->id)) {
      best = &r;
      best_f = fv;
    }
  }
  if (!best) return std::nullopt;
  return *best;
}

AssociationRule query_top1_or(const Transaction& t, const LshIndex& index, const RuleDatabase& db,
                              const OrderingFunction& f, const AssociationRule& default_rule) {
  auto r = query_top1(t, index, db, f);
  return r ? *r : default_rule;
}

std::size_t topk_copy_count(std::size_t k, std::size_t db_size) {
  if (k < 1 || db_size < 2) throw std::invalid_argument("top-k sampling needs k >= 1 and |D| >= 2");
  return static_cast<std::size_t>(std::ceil(static_cast<double>(k) * std::log(static_cast<double>(db_size)) - 1e-12));
}

TopKIndex topk_prep(const RuleDatabase& db, std::size_t k, const LshParams& params, std::uint64_t seed) {
  const std::size_t n = topk_copy_count(k, db.size());
  std::mt19937_64 rng(seed);
  TopKIndex out;
  out.k = k;
  for (std::size_t c = 0; c < n; ++c) {
    TopKCopy copy;
    std::vector<ItemSet> antecedents;
    for (const auto& r : db.rules()) {
      // Bernoulli(1/k)
      if (k == 1 || rng() % k == 0) {
        copy.members.push_back(r.id);
        antecedents.push_back(r.antecedent);
      }
    }
    LshParams p = params;
    p.seed = splitmix64(params.seed + 0x100 * (c + 1));
    copy.index = LshIndex::prep(antecedents, db.universe_size(), p);
    out.copies.push_back(std::move(copy));
  }
  return out;
}

std::vector<AssociationRule> query_topk(const Transaction& t, const TopKIndex& indexes, const RuleDatabase& db,
                                        const OrderingFunction& f, std::size_t k) {
  const auto ctx = OrderingContext::of(db);
  std::vector<AssociationRule> found;
  for (const auto& copy : indexes.copies) {
    const AssociationRule* best = nullptr;
    std::int64_t best_f = 0;
    for (RuleId local : copy.index.query_candidates(t)) {
      const auto& r = db.rule(copy.members[local - 1]);
      if (!is_applicable(r, t)) continue;
      const auto fv = ordering_value(f, r, ctx);
      if (!best || fv > best_f || (fv == best_f && r.id < best->id)) {
        best = &r;
        best_f = fv;
      }
    }
    if (best && std::none_of(found.begin(), found.end(), [&](const auto& x) { return x.id == best->id; }))
      found.push_back(*best);
  }
  sort_by_ordering(found, f, ctx);
  if (found.size() > k) found.resize(k);
  return found;
}

}  // namespace privrec
