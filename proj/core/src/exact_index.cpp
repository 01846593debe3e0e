#include "privrec/exact_index.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <istream>
#include <ostream>
#include <random>

#include "privrec/bytes.hpp"

namespace privrec {

u128 addmod_m127(u128 a, u128 b) {
  u128 s = a + b;  // both < 2^127, no wrap
  if (s >= kMersenne127) s -= kMersenne127;
  return s;
}

u128 mulmod_m127(u128 a, u128 b) {
  const std::uint64_t a0 = static_cast<std::uint64_t>(a), a1 = static_cast<std::uint64_t>(a >> 64);
  const std::uint64_t b0 = static_cast<std::uint64_t>(b), b1 = static_cast<std::uint64_t>(b >> 64);
  u128 p00 = static_cast<u128>(a0) * b0;
  u128 p01 = static_cast<u128>(a0) * b1;
  u128 p10 = static_cast<u128>(a1) * b0;
  u128 p11 = static_cast<u128>(a1) * b1;
  // 256-bit product as four 64-bit limbs.
  u128 mid = (p00 >> 64) + static_cast<std::uint64_t>(p01) + static_cast<std::uint64_t>(p10);
  std::uint64_t l0 = static_cast<std::uint64_t>(p00);
  std::uint64_t l1 = static_cast<std::uint64_t>(mid);
  u128 high = (mid >> 64) + (p01 >> 64) + (p10 >> 64) + p11;
  std::uint64_t l2 = static_cast<std::uint64_t>(high);
  std::uint64_t l3 = static_cast<std::uint64_t>(high >> 64);
  u128 lo = (static_cast<u128>(l1 & 0x7fffffffffffffffULL) << 64) | l0;
  u128 hi = (static_cast<u128>((l3 << 1) | (l2 >> 63)) << 64) | ((l2 << 1) | (l1 >> 63));
  u128 r = lo + hi;
  while (r >= kMersenne127) r -= kMersenne127;
  return r;
}

u128 reduce_key(std::string_view bytes) {
  u128 x = 0;
  for (unsigned char c : bytes) x = addmod_m127(mulmod_m127(x, 256), c);
  return x;
}

Fingerprinter::Fingerprinter(FingerprintAlgorithm alg, unsigned bits) : alg_(alg), bits_(bits) {
  unsigned max_bits = alg == FingerprintAlgorithm::Sha256 ? 256 : 128;
  if (bits == 0 || bits > max_bits) throw std::invalid_argument("fingerprint width out of range");
}

std::vector<std::uint8_t> Fingerprinter::operator()(std::string_view data) const {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  const EVP_MD* md_type = alg_ == FingerprintAlgorithm::Sha256 ? EVP_sha256() : EVP_md5();
  if (EVP_Digest(data.data(), data.size(), md, &len, md_type, nullptr) != 1)
    throw std::runtime_error("digest failed");
  std::vector<std::uint8_t> out(md, md + bytes());
  if (bits_ % 8) out.back() &= static_cast<std::uint8_t>(0xff << (8 - bits_ % 8));
  return out;
}

std::string encode_itemset(const ItemSet& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out.push_back(',');
    out += std::to_string(s[i]);
  }
  return out;
}

SubsetEnumerator::SubsetEnumerator(const Transaction& t, std::size_t t_max)
    : items_(t.vec()), t_max_(std::min(t_max, t.size())) {
  if (t_max < 1) throw std::invalid_argument("t_max must be >= 1");
}

bool SubsetEnumerator::next(ItemSet& out) {
  const std::size_t n = items_.size();
  if (pos_.empty()) {
    if (n == 0 || t_max_ == 0) return false;
    pos_ = {0};
  } else {
    // advance to the next combination of the same size, or grow
    std::size_t k = pos_.size();
    std::size_t i = k;
    while (i > 0 && pos_[i - 1] == n - k + i - 1) --i;
    if (i == 0) {
      if (k + 1 > t_max_) return false;
      pos_.resize(k + 1);
      for (std::size_t j = 0; j <= k; ++j) pos_[j] = j;
    } else {
      ++pos_[i - 1];
      for (std::size_t j = i; j < k; ++j) pos_[j] = pos_[j - 1] + 1;
    }
  }
  std::vector<ItemId> v(pos_.size());
  for (std::size_t j = 0; j < pos_.size(); ++j) v[j] = items_[pos_[j]];
  out = ItemSet::from_sorted(std::move(v));
  return true;
}

std::vector<ItemSet> subsets_up_to(const Transaction& t, std::size_t t_max) {
  std::vector<ItemSet> out;
  SubsetEnumerator e(t, t_max);
  ItemSet s;
  while (e.next(s)) out.push_back(s);
  return out;
}

std::uint64_t subset_count(std::size_t n, std::size_t t_max) {
  std::uint64_t total = 0, c = 1;
  for (std::size_t j = 1; j <= std::min(n, t_max); ++j) {
    c = c * (n - j + 1) / j;
    total += c;
  }
  return total;
}

std::string TwoLevelHashing::prefixed(std::string_view key) const {
  std::string s = prefix;
  s.append(key);
  return s;
}

std::uint64_t TwoLevelHashing::index_of(std::string_view key) const {
  return index_of_reduced(reduce_key(prefixed(key)));
}

std::vector<std::uint8_t> TwoLevelHashing::fingerprint(std::string_view key) const {
  return fingerprinter(prefixed(key));
}

TwoLevelHashing build_two_level_hashing(const std::vector<std::string>& keys, const TwoLevelConfig& cfg,
                                        std::vector<std::uint64_t>& slots, BuildStats& stats) {
  std::mt19937_64 rng(cfg.seed);
  TwoLevelHashing h;
  const std::uint64_t n = keys.size();
  // an empty table still gets a well-formed hashing
  h.L = 16 * std::max<std::uint64_t>(n, 1);
  h.fingerprinter = Fingerprinter(cfg.algorithm, cfg.fingerprint_bits);
  h.prefix.resize(cfg.prefix_len);
  for (auto& c : h.prefix) c = static_cast<char>(rng() & 0xff);

  std::vector<u128> xs(n);
  for (std::size_t i = 0; i < n; ++i) xs[i] = reduce_key(h.prefixed(keys[i]));

  stats = {};
  std::vector<std::uint32_t> count(h.L);
  std::vector<std::uint64_t> rows(n);
  for (;;) {
    if (stats.first_level_draws >= cfg.max_resamples)
      throw TableBuildError("first-level hash retry cap exceeded");
    ++stats.first_level_draws;
    h.h_r = UniversalHash::draw(rng, h.L);
    std::fill(count.begin(), count.end(), 0);
    for (std::size_t i = 0; i < n; ++i) ++count[rows[i] = h.h_r(xs[i])];
    std::uint64_t sq = 0;
    for (auto b : count) sq += static_cast<std::uint64_t>(b) * b;
    stats.sum_squares = sq;
    if (sq <= 4 * n) break;
  }

  slots.assign(n, 0);
  std::vector<std::uint64_t> sorted(n);
  for (;;) {
    if (stats.second_level_draws >= cfg.max_resamples)
      throw TableBuildError("second-level hash retry cap exceeded (duplicate keys?)");
    ++stats.second_level_draws;
    h.h_s = UniversalHash::draw(rng, h.L);
    for (std::size_t i = 0; i < n; ++i) slots[i] = h.L * rows[i] + h.h_s(xs[i]);
    sorted = slots;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end()) break;
  }
  return h;
}

ExactIndex ExactIndex::prep(const RuleDatabase& db, const TwoLevelConfig& cfg) {
  if (cfg.fingerprint_bits < 64) throw std::invalid_argument("fingerprint width must be >= 64 bits");
  if (cfg.prefix_len < 16) throw std::invalid_argument("prefix length must be >= 16 bytes");
  std::vector<std::string> keys;
  std::vector<RulePayload> payloads;
  keys.reserve(db.size());
  payloads.reserve(db.size());
  for (const auto& r : db.rules()) {
    keys.push_back(encode_itemset(r.antecedent));
    payloads.push_back({r.id, r.consequent, r.weight, static_cast<std::uint32_t>(r.antecedent.size())});
  }
  ExactIndex idx;
  idx.table_ = TwoLevelTable<RulePayload>::build(std::move(keys), std::move(payloads), cfg);
  idx.ctx_ = OrderingContext::of(db);
  idx.rule_count_ = db.size();
  return idx;
}

std::optional<Record> ExactIndex::fetch(std::string_view key) const {
  const auto* e = table_.at_slot(table_.index_of(key));
  if (!e || e->fingerprint != table_.hashing().fingerprint(key)) return std::nullopt;
  return Record{e->payload.rule_id, e->fingerprint, e->payload.consequent, e->payload.weight,
                e->payload.antecedent_len};
}

namespace {

constexpr char kIndexMagic[4] = {'P', 'R', 'X', 'I'};
constexpr std::uint16_t kIndexVersion = 1;

void put_u128(ByteWriter& w, u128 v) {
  w.u64(static_cast<std::uint64_t>(v >> 64));
  w.u64(static_cast<std::uint64_t>(v));
}
u128 get_u128(ByteReader& r) {
  u128 hi = r.u64();
  return hi << 64 | r.u64();
}

void put_hash(ByteWriter& w, const UniversalHash& h) {
  put_u128(w, h.a);
  put_u128(w, h.b);
  w.u64(h.range);
}
UniversalHash get_hash(ByteReader& r) {
  UniversalHash h;
  h.a = get_u128(r);
  h.b = get_u128(r);
  h.range = r.u64();
  if (h.range == 0) throw DecodeError("zero hash range");
  return h;
}

}  // namespace

void write_hashing(ByteWriter& w, const TwoLevelHashing& h) {
  w.u64(h.L);
  put_hash(w, h.h_r);
  put_hash(w, h.h_s);
  w.str(h.prefix);
  w.u8(static_cast<std::uint8_t>(h.fingerprinter.algorithm()));
  w.u16(static_cast<std::uint16_t>(h.fingerprinter.bits()));
}

TwoLevelHashing read_hashing(ByteReader& r) {
  TwoLevelHashing h;
  h.L = r.u64();
  if (h.L == 0 || h.L > (std::uint64_t{1} << 31)) throw DecodeError("table range out of bounds");
  h.h_r = get_hash(r);
  h.h_s = get_hash(r);
  h.prefix = r.str();
  auto alg = r.u8();
  if (alg != 1 && alg != 2) throw DecodeError("unknown fingerprint algorithm");
  unsigned bits = r.u16();
  if (bits == 0 || bits > 256) throw DecodeError("fingerprint width out of range");
  h.fingerprinter = Fingerprinter(static_cast<FingerprintAlgorithm>(alg), bits);
  return h;
}

void ExactIndex::save(std::ostream& out) const {
  ByteWriter w;
  w.raw(std::string_view(kIndexMagic, 4));
  w.u16(kIndexVersion);
  write_hashing(w, table_.hashing());
  w.i64(ctx_.max_weight);
  w.u64(ctx_.universe_size);
  w.u64(rule_count_);
  w.u32(table_.stats().first_level_draws);
  w.u32(table_.stats().second_level_draws);
  w.u64(table_.stats().sum_squares);
  w.u64(table_.size());
  for (const auto& e : table_.entries()) {
    w.u64(e.slot);
    w.blob(e.fingerprint);
    w.u32(e.payload.rule_id);
    w.i64(e.payload.weight);
    w.u32(e.payload.antecedent_len);
    w.u32(static_cast<std::uint32_t>(e.payload.consequent.size()));
    for (ItemId x : e.payload.consequent) w.u32(x);
  }
  write_stream(out, w.bytes());
}

ExactIndex ExactIndex::load(std::istream& in) {
  Bytes data = read_stream(in);
  ByteReader r(data);
  auto magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), kIndexMagic)) throw DecodeError("not an exact index file");
  if (r.u16() != kIndexVersion) throw DecodeError("unsupported exact index version");
  TwoLevelHashing h = read_hashing(r);
  ExactIndex idx;
  idx.ctx_.max_weight = r.i64();
  idx.ctx_.universe_size = r.u64();
  idx.rule_count_ = r.u64();
  BuildStats stats;
  stats.first_level_draws = r.u32();
  stats.second_level_draws = r.u32();
  stats.sum_squares = r.u64();
  std::uint64_t n = r.u64();
  std::vector<TwoLevelTable<RulePayload>::Entry> entries;
  for (std::uint64_t i = 0; i < n; ++i) {
    TwoLevelTable<RulePayload>::Entry e;
    e.slot = r.u64();
    e.fingerprint = r.blob();
    e.payload.rule_id = r.u32();
    e.payload.weight = r.i64();
    e.payload.antecedent_len = r.u32();
    std::vector<ItemId> items(r.count(4));
    for (auto& x : items) x = r.u32();
    e.payload.consequent = ItemSet::from_sorted(std::move(items));
    entries.push_back(std::move(e));
  }
  r.expect_done();
  idx.table_ = TwoLevelTable<RulePayload>::from_parts(std::move(h), std::move(entries), stats);
  return idx;
}

std::vector<AssociationRule> exact_query(const Transaction& t, const ExactIndex& index, const Criterion& c,
                                         std::size_t subset_cap, ExactQueryStats* stats) {
  if (t.size() > subset_cap)
    throw std::invalid_argument("transaction larger than the subset enumeration cap");
  const ResolvedCriterion rc = resolve(c, index.rule_count(), index.context().universe_size);
  std::vector<AssociationRule> hits;
  SubsetEnumerator subsets(t, rc.t);
  ItemSet s;
  ExactQueryStats st;
  while (subsets.next(s)) {
    ++st.fetches;
    auto rec = index.fetch(encode_itemset(s));
    if (!rec) continue;
    ++st.hits;
    hits.push_back({rec->rule_id, s, std::move(rec->consequent), rec->weight});
  }
  if (stats) *stats = st;
  return finish_selection(std::move(hits), rc, index.context());
}

}  // namespace privrec
