#include "privrec/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace privrec {

namespace {

constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max();

std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b) {
  unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
  return p > kMax ? kMax : static_cast<std::uint64_t>(p);
}

std::uint64_t sat_pow(std::uint64_t r, unsigned k) {
  std::uint64_t p = 1;
  for (unsigned i = 0; i < k; ++i) p = sat_mul(p, r);
  return p;
}

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return a / b + (a % b != 0); }

// Smallest r with r^k >= v.
std::uint64_t ceil_root(std::uint64_t v, unsigned k) {
  if (v <= 1 || k == 1) return v;
  auto r = static_cast<std::uint64_t>(std::llround(std::pow(static_cast<double>(v), 1.0 / k)));
  r = std::max<std::uint64_t>(r, 1);
  while (sat_pow(r, k) < v) ++r;
  while (r > 1 && sat_pow(r - 1, k) >= v) --r;
  return r;
}

}  // namespace

std::uint64_t OtShape::capacity() const {
  std::uint64_t c = 1;
  for (auto d : dims) c = sat_mul(c, d);
  return c;
}

std::uint64_t OtShape::query_size() const {
  std::uint64_t c = 0;
  for (auto d : dims) c += d;
  return c;
}

std::vector<std::uint64_t> OtShape::digits(std::uint64_t i) const {
  if (i >= n) throw std::out_of_range("OT index out of range");
  std::vector<std::uint64_t> out(dims.size());
  for (std::size_t j = 0; j < dims.size(); ++j) {
    out[j] = i % dims[j];
    i /= dims[j];
  }
  return out;
}

OtShape ot_shape(std::uint64_t n, unsigned d) {
  if (n == 0) throw std::invalid_argument("empty OT database");
  if (d == 0) throw std::invalid_argument("OT needs at least one dimension");
  OtShape s{n, {}};
  std::uint64_t rem = n;
  for (unsigned j = 0; j < d; ++j) {
    std::uint64_t nj = ceil_root(rem, d - j);
    s.dims.push_back(nj);
    rem = ceil_div(rem, nj);
  }
  return s;
}

OtShape ot_shape_weighted(std::uint64_t n, std::span<const double> layer_cost) {
  if (n == 0) throw std::invalid_argument("empty OT database");
  if (layer_cost.empty()) throw std::invalid_argument("OT needs at least one dimension");
  const unsigned d = static_cast<unsigned>(layer_cost.size());
  OtShape s{n, {}};
  std::uint64_t rem = n;
  for (unsigned j = 0; j + 1 < d; ++j) {
    // optimum of sum n_k c_k with prod n_k = rem: n_j = (rem * prod c)^(1/k) / c_j
    const unsigned k = d - j;
    double log_prod = std::log(static_cast<double>(rem));
    for (unsigned t = j; t < d; ++t) log_prod += std::log(layer_cost[t]);
    double ideal = std::exp(log_prod / k) / layer_cost[j];
    auto nj = static_cast<std::uint64_t>(std::llround(std::max(1.0, ideal)));
    nj = std::clamp<std::uint64_t>(nj, 1, rem);
    s.dims.push_back(nj);
    rem = ceil_div(rem, nj);
  }
  s.dims.push_back(rem);
  return s;
}

OtQuery ot_query(const DjEncryptor& enc, const OtShape& shape, std::uint64_t i, RandomSource& rng) {
  auto dig = shape.digits(i);
  if (shape.depth() > enc.public_key().max_layer()) throw std::invalid_argument("OT depth exceeds key layers");
  OtQuery q;
  q.sel.resize(shape.depth());
  for (unsigned j = 0; j < shape.depth(); ++j) {
    q.sel[j].reserve(shape.dims[j]);
    for (std::uint64_t c = 0; c < shape.dims[j]; ++c)
      q.sel[j].push_back(enc.encrypt(c == dig[j] ? 1 : 0, j + 1, rng));
  }
  return q;
}

OtResponder::OtResponder(DjPublicKey pk, OtShape shape, std::size_t block_count)
    : pk_(std::move(pk)), shape_(std::move(shape)), block_count_(block_count) {
  if (shape_.depth() == 0 || shape_.depth() > pk_.max_layer())
    throw std::invalid_argument("OT depth outside key layers");
  if (shape_.capacity() < shape_.n) throw std::invalid_argument("OT shape too small");
  ctx_.resize(shape_.depth() + 1);
  for (unsigned s = 1; s <= shape_.depth(); ++s)
    ctx_[s] = std::make_shared<MontgomeryContext>(pk_.ciphertext_modulus(s));
}

void OtResponder::check_query(const OtQuery& q) const {
  if (q.sel.size() != shape_.depth()) throw std::invalid_argument("OT query depth mismatch");
  for (unsigned j = 0; j < shape_.depth(); ++j) {
    if (q.sel[j].size() != shape_.dims[j]) throw std::invalid_argument("OT query dimension mismatch");
    for (const auto& c : q.sel[j])
      if (c.layer != j + 1 || c.value <= 0 || c.value >= pk_.ciphertext_modulus(j + 1))
        throw std::invalid_argument("OT query ciphertext malformed");
  }
}

OtReply OtResponder::reply(const OtQuery& q, std::span<const OtEntry> entries, RandomSource& rng) const {
  check_query(q);
  const mpz_class& n = pk_.n();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (entries[k].index >= shape_.n) throw std::invalid_argument("OT entry index out of range");
    if (k && entries[k].index <= entries[k - 1].index) throw std::invalid_argument("OT entries not sorted");
    if (entries[k].blocks.size() > block_count_) throw std::invalid_argument("OT entry has too many blocks");
    for (const auto& b : entries[k].blocks)
      if (b < 0 || b >= n) throw std::invalid_argument("OT block exceeds plaintext space");
  }
  // Products of the selection vectors, needed from layer 2 on where the
  // default (absent) value is no longer zero.
  std::vector<mpz_class> sel_products(shape_.depth());
  std::vector<mpz_class> vals;
  for (unsigned j = 1; j < shape_.depth(); ++j) {
    vals.clear();
    for (const auto& c : q.sel[j]) vals.push_back(c.value);
    sel_products[j] = ctx_[j + 1]->product(vals);
  }
  OtReply rep;
  rep.blocks.reserve(block_count_);
  for (std::size_t b = 0; b < block_count_; ++b)
    rep.blocks.push_back({shape_.depth(), fold(q, entries, b, sel_products, rng)});
  return rep;
}

mpz_class OtResponder::fold(const OtQuery& q, std::span<const OtEntry> entries, std::size_t block,
                            std::span<const mpz_class> sel_products, RandomSource& rng) const {
  std::vector<std::pair<std::uint64_t, mpz_class>> cur;
  for (const auto& e : entries)
    if (block < e.blocks.size() && e.blocks[block] != 0) cur.emplace_back(e.index, e.blocks[block]);
  mpz_class dflt = 0;

  std::vector<mpz_class> bases, exps;
  for (unsigned j = 0; j < shape_.depth(); ++j) {
    const unsigned s = j + 1;
    const MontgomeryContext& ctx = *ctx_[s];
    const mpz_class& pmod = pk_.plaintext_modulus(s);
    const std::uint64_t nj = shape_.dims[j];
    const auto& sel = q.sel[j];

    // value of a group whose members all equal the default
    mpz_class E = dflt == 0 ? mpz_class(1) : ctx.pow(sel_products[j], dflt);

    std::vector<std::pair<std::uint64_t, mpz_class>> next;
    for (std::size_t a = 0; a < cur.size();) {
      const std::uint64_t g = cur[a].first / nj;
      std::size_t b = a;
      bases.clear();
      exps.clear();
      for (; b < cur.size() && cur[b].first / nj == g; ++b) {
        mpz_class x = cur[b].second - dflt;
        if (x < 0) x += pmod;
        if (x == 0) continue;
        bases.push_back(sel[cur[b].first % nj].value);
        exps.push_back(std::move(x));
      }
      mpz_class v;
      if (bases.empty()) v = E;
      else if (bases.size() == 1) v = ctx.pow(bases[0], exps[0]);
      else v = multi_exp(ctx, bases, exps);
      if (!bases.empty() && E != 1) v = ctx.mulmod(v, E);
      next.emplace_back(g, std::move(v));
      a = b;
    }
    const mpz_class rho = dj_encrypt(pk_, 0, s, rng).value;
    for (auto& [g, v] : next) v = ctx.mulmod(v, rho);
    dflt = ctx.mulmod(E, rho);
    cur = std::move(next);
  }
  return cur.empty() ? dflt : cur.front().second;
}

OtReply ot_reply(const DjPublicKey& pk, const OtShape& shape, const OtQuery& q, std::span<const mpz_class> v,
                 RandomSource& rng) {
  if (v.size() != shape.n) throw std::invalid_argument("OT database size mismatch");
  std::vector<OtEntry> entries;
  for (std::uint64_t i = 0; i < v.size(); ++i)
    if (v[i] != 0) entries.push_back({i, {v[i]}});
  return OtResponder(pk, shape, 1).reply(q, entries, rng);
}

std::vector<mpz_class> ot_extract(const DjSecretKey& sk, const OtReply& reply) {
  std::vector<mpz_class> out;
  out.reserve(reply.blocks.size());
  for (const auto& c : reply.blocks) {
    mpz_class v = c.value;
    for (unsigned s = c.layer; s >= 1; --s) v = sk.decrypt({s, v});
    out.push_back(std::move(v));
  }
  return out;
}

std::size_t blocks_needed(std::size_t data_len, std::size_t block_bytes) {
  if (block_bytes < 2) throw std::invalid_argument("block too small");
  return std::max<std::size_t>(1, ceil_div(data_len, block_bytes - 1));
}

std::vector<mpz_class> encode_blocks(std::span<const std::uint8_t> data, std::size_t block_bytes,
                                     std::size_t count) {
  const std::size_t need = blocks_needed(data.size(), block_bytes);
  if (need > count) throw std::length_error("record does not fit the OT block budget");
  const std::size_t chunk = block_bytes - 1;
  std::vector<mpz_class> out(count);
  Bytes buf;
  for (std::size_t k = 0; k < need; ++k) {
    std::size_t off = k * chunk;
    std::size_t len = std::min(chunk, data.size() - std::min(off, data.size()));
    buf.assign(1, 0x01);
    buf.insert(buf.end(), data.begin() + off, data.begin() + off + len);
    out[k] = read_mpz(buf);
  }
  return out;
}

std::optional<Bytes> decode_blocks(std::span<const mpz_class> blocks, std::size_t block_bytes) {
  Bytes out;
  bool seen_zero = false;
  std::size_t used = 0;
  for (const auto& b : blocks) {
    if (b == 0) {
      seen_zero = true;
      continue;
    }
    if (seen_zero || b < 0) return std::nullopt;
    std::size_t len = byte_len(b);
    if (len > block_bytes) return std::nullopt;
    Bytes tmp(len);
    mpz_export(tmp.data(), nullptr, 1, 1, 1, 0, b.get_mpz_t());
    if (tmp[0] != 0x01) return std::nullopt;
    out.insert(out.end(), tmp.begin() + 1, tmp.end());
    ++used;
  }
  if (used == 0) return std::nullopt;
  return out;
}

void write_ot_query(ByteWriter& w, const DjPublicKey& pk, const OtQuery& q) {
  w.u8(static_cast<std::uint8_t>(q.sel.size()));
  for (const auto& dim : q.sel) {
    w.u32(static_cast<std::uint32_t>(dim.size()));
    for (const auto& c : dim) write_ciphertext(w, pk, c);
  }
}

OtQuery read_ot_query(ByteReader& r, const DjPublicKey& pk, const OtShape& shape) {
  unsigned d = r.u8();
  if (d != shape.depth()) throw DecodeError("OT query depth mismatch");
  OtQuery q;
  q.sel.resize(d);
  for (unsigned j = 0; j < d; ++j) {
    std::size_t cnt = r.count(pk.ciphertext_bytes(j + 1));
    if (cnt != shape.dims[j]) throw DecodeError("OT query dimension mismatch");
    q.sel[j].reserve(cnt);
    for (std::size_t c = 0; c < cnt; ++c) {
      q.sel[j].push_back(read_ciphertext(r, pk));
      if (q.sel[j].back().layer != j + 1) throw DecodeError("OT query layer mismatch");
    }
  }
  return q;
}

void write_ot_reply(ByteWriter& w, const DjPublicKey& pk, const OtReply& rep) {
  w.u32(static_cast<std::uint32_t>(rep.blocks.size()));
  for (const auto& c : rep.blocks) write_ciphertext(w, pk, c);
}

OtReply read_ot_reply(ByteReader& r, const DjPublicKey& pk, unsigned depth, std::size_t block_count) {
  std::size_t cnt = r.count(pk.ciphertext_bytes(depth));
  if (cnt != block_count) throw DecodeError("OT reply block count mismatch");
  OtReply rep;
  for (std::size_t k = 0; k < cnt; ++k) {
    rep.blocks.push_back(read_ciphertext(r, pk));
    if (rep.blocks.back().layer != depth) throw DecodeError("OT reply layer mismatch");
  }
  return rep;
}

}  // namespace privrec
