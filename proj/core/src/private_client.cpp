#include <algorithm>
#include <map>
#include <numeric>

#include "privrec/protocol.hpp"

namespace privrec {

namespace {

struct FetchedRule {
  std::uint32_t handle = 0;
  ItemSet antecedent;  // anonymized
  std::vector<ItemId> consequent;
  Ciphertext weight;
  Ciphertext tie;  // approximate mode only
  std::vector<Ciphertext> item_ties;
};

class ClientRun {
 public:
  ClientRun(Channel& ch, const ClientConfig& cfg, ClientResult& res)
      : ch_(ch), cfg_(cfg), res_(res), st_(res.stats), rng_(make_random(cfg.seed, "client")) {}

  ClientResult& run(const Transaction& t, const PrivateQuery& q);

 private:
  Message call(MessageType type, Bytes payload, MessageType expect);
  std::vector<std::vector<mpz_class>> ot_batch(TableId table, const std::vector<std::uint64_t>& indices);
  std::vector<std::uint32_t> sort(SortId id, const std::vector<Ciphertext>& values, const mpz_class& bound);
  std::vector<FetchedRule> fetch_records(const std::vector<std::uint32_t>& handles);
  void collate(const std::vector<const FetchedRule*>& rules, std::size_t cap);
  void use_default();

  Channel& ch_;
  const ClientConfig& cfg_;
  ClientResult& res_;
  ClientStats& st_;
  std::unique_ptr<RandomSource> rng_;
  DjKeyPair kp_;
  std::unique_ptr<DjEncryptor> enc_;
  std::unique_ptr<DjEncryptor> server_enc_;
  PublicParams pp_;
  std::uint32_t session_ = 0;
};

Message ClientRun::call(MessageType type, Bytes payload, MessageType expect) {
  st_.bytes_sent += payload.size();
  Message reply = ch_.exchange({type, session_, std::move(payload)});
  st_.messages += 2;
  st_.bytes_received += reply.payload.size();
  if (reply.type == MessageType::Error) raise_error_message(reply);
  if (reply.type != expect)
    throw ProtocolError(ErrorCode::UnexpectedMessage,
                        std::string("expected ") + message_type_name(expect) + ", got " + message_type_name(reply.type));
  if (session_ && reply.session != session_) throw ProtocolError(ErrorCode::UnknownSession, "session id mismatch");
  return reply;
}

std::vector<std::vector<mpz_class>> ClientRun::ot_batch(TableId table, const std::vector<std::uint64_t>& indices) {
  const TableShape& ts = pp_.tables.at(table);
  const auto& shape = ts.shape;
  if (shape.depth() > kp_.pk.max_layer()) throw ProtocolError(ErrorCode::Unsupported, "table deeper than key layers");
  std::size_t query_bytes = 8;
  for (unsigned j = 0; j < shape.depth(); ++j) query_bytes += shape.dims[j] * (2 + kp_.pk.ciphertext_bytes(j + 1)) + 4;
  const std::size_t room = cfg_.max_payload > 64 ? cfg_.max_payload - 64 : 1;
  const std::size_t chunk = std::max<std::size_t>(1, room / query_bytes);

  std::vector<std::vector<mpz_class>> out;
  out.reserve(indices.size());
  for (std::size_t start = 0; start < indices.size(); start += chunk) {
    const std::size_t n = std::min(chunk, indices.size() - start);
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(table));
    w.u32(static_cast<std::uint32_t>(n));
    for (std::size_t i = 0; i < n; ++i) write_ot_query(w, kp_.pk, ot_query(*enc_, shape, indices[start + i], *rng_));
    Message reply = call(MessageType::OtQueryBatch, w.take(), MessageType::OtReplyBatch);
    ByteReader r(reply.payload);
    if (r.u8() != static_cast<std::uint8_t>(table)) throw DecodeError("reply for another table");
    if (r.count(1) != n) throw DecodeError("reply count mismatch");
    for (std::size_t i = 0; i < n; ++i) out.push_back(ot_extract(kp_.sk, read_ot_reply(r, kp_.pk, shape.depth(), ts.blocks)));
    r.expect_done();
  }
  st_.ots += indices.size();
  return out;
}

std::vector<std::uint32_t> ClientRun::sort(SortId id, const std::vector<Ciphertext>& values, const mpz_class& bound) {
  PrivateSortClient sorter(pp_.server_pk, values, bound, *rng_);
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(id));
  write_sort_request(w, pp_.server_pk, sorter.request());
  Message reply = call(MessageType::SortPairs, w.take(), MessageType::SortOutcomes);
  ByteReader r(reply.payload);
  if (r.u8() != static_cast<std::uint8_t>(id)) throw DecodeError("outcomes for another sort");
  auto outcomes = read_sort_outcomes(r);
  r.expect_done();
  ++st_.sort_rounds;
  st_.comparisons += outcomes.signs.size();
  return sorter.finish(outcomes);
}

std::vector<FetchedRule> ClientRun::fetch_records(const std::vector<std::uint32_t>& handles) {
  std::vector<std::uint64_t> idx(handles.begin(), handles.end());
  auto blocks = ot_batch(TableId::Records, idx);
  std::vector<FetchedRule> out;
  const auto& spk = pp_.server_pk;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    auto rec = decode_blocks(blocks[k], kp_.pk.block_bytes());
    if (!rec) throw DecodeError("empty rule record");
    ByteReader r(*rec);
    FetchedRule f;
    f.handle = handles[k];
    std::vector<ItemId> p(r.u16());
    for (auto& x : p) x = r.u32();
    f.antecedent = ItemSet::from_sorted(std::move(p));
    f.consequent.resize(r.u16());
    for (auto& x : f.consequent) x = r.u32();
    f.weight = read_ciphertext(r, spk);
    if (pp_.mode == PrivateMode::Approx) f.tie = read_ciphertext(r, spk);
    for (std::size_t i = 0; i < f.consequent.size(); ++i) f.item_ties.push_back(read_ciphertext(r, spk));
    r.expect_done();
    out.push_back(std::move(f));
  }
  st_.records += out.size();
  return out;
}

void ClientRun::use_default() {
  res_.items.clear();
  for (auto i : pp_.default_items) res_.items.push_back({i, 0});
  res_.used_default = true;
}

// Accumulated weights per (anonymized) item, ordered by a private sort, top
// cap de-anonymized through the reverse table.
void ClientRun::collate(const std::vector<const FetchedRule*>& rules, std::size_t cap) {
  const auto& spk = pp_.server_pk;
  struct Acc {
    Ciphertext sum;
    Ciphertext tie;
  };
  std::map<ItemId, Acc> acc;
  for (const auto* f : rules)
    for (std::size_t i = 0; i < f->consequent.size(); ++i) {
      auto [it, fresh] = acc.try_emplace(f->consequent[i], Acc{f->weight, f->item_ties[i]});
      if (!fresh) it->second.sum = dj_add(spk, it->second.sum, f->weight);
    }
  if (acc.empty()) {
    res_.items.clear();
    return;
  }
  const mpz_class radix = mpz_class(static_cast<unsigned long>(pp_.universe)) + 1;
  std::vector<ItemId> items;
  std::vector<Ciphertext> values;
  for (const auto& [item, a] : acc) {
    items.push_back(item);
    values.push_back(dj_add(spk, dj_scalar_mul(spk, a.sum, radix), a.tie));
  }
  const mpz_class bound =
      radix * mpz_class(static_cast<long>(pp_.max_weight)) * static_cast<unsigned long>(rules.size()) + pp_.universe;
  st_.item_sort_size = values.size();
  std::vector<std::uint32_t> order;
  {
    ScopedStage s(st_.clock, "sort");
    order = sort(SortId::Items, values, bound);
  }
  const std::size_t top = std::min(cap, items.size());
  std::vector<std::uint64_t> idx(cap, 0);  // padded with the empty slot 0
  for (std::size_t r = 0; r < top; ++r) idx[r] = items[order[r]];
  ScopedStage s(st_.clock, "deanonymize");
  auto plain = ot_batch(TableId::Reverse, idx);
  res_.items.clear();
  for (std::size_t r = 0; r < top; ++r) {
    const mpz_class& v = plain[r].at(0);
    if (v <= 0 || v > pp_.universe) throw DecodeError("reverse table returned no item");
    res_.items.push_back({static_cast<ItemId>(v.get_ui()), 0});
  }
  st_.deanonymized = top;
}

ClientResult& ClientRun::run(const Transaction& t, const PrivateQuery& q) {
  if (q.cap < 1 || q.k < 1 || q.t < 1) throw std::invalid_argument("k, cap and t must be >= 1");
  if (q.w < 0) throw std::invalid_argument("negative weight threshold");
  if (q.mode == PrivateMode::Exact && t.size() > cfg_.subset_cap)
    throw std::invalid_argument("transaction exceeds the subset cap");
  if (q.mode == PrivateMode::Approx) ordering_linear_form(q.f, 1, {});

  {
    ScopedStage s(st_.clock, "keygen");
    kp_ = dj_keygen(cfg_.rsa_bits, cfg_.max_layer, *rng_);
    enc_ = std::make_unique<DjEncryptor>(kp_.sk);
  }
  {
    ScopedStage s(st_.clock, "init");
    ByteWriter w;
    SessionInit init;
    init.mode = q.mode;
    init.client_pk = kp_.pk;
    init.write(w);
    Message reply = call(MessageType::SessionInit, w.take(), MessageType::PublicParams);
    ByteReader r(reply.payload);
    pp_ = PublicParams::read(r);
    r.expect_done();
    session_ = res_.session = reply.session;
    if (pp_.mode != q.mode) throw ProtocolError(ErrorCode::Unsupported, "server answered another mode");
    server_enc_ = std::make_unique<DjEncryptor>(pp_.server_pk);
  }

  // Anonymize the transaction: one OT per item, answers shuffled by the server.
  ItemSet anon;
  {
    ScopedStage s(st_.clock, "anonymize");
    std::vector<std::uint64_t> idx;
    for (ItemId i : t) idx.push_back(i <= pp_.universe ? i : 0);
    std::vector<ItemId> got;
    if (!idx.empty())
      for (const auto& b : ot_batch(TableId::Anonymize, idx)) {
        const mpz_class& v = b.at(0);
        if (v < 0 || v > pp_.universe) throw DecodeError("anonymized item out of range");
        if (v != 0) got.push_back(static_cast<ItemId>(v.get_ui()));
      }
    anon = ItemSet::from_unsorted(std::move(got));
    st_.anonymized_items = anon.size();
  }

  const std::size_t fp_bytes = pp_.hashing.fingerprinter.bytes();
  const std::size_t bb = kp_.pk.block_bytes();
  std::vector<FetchedRule> fetched;
  if (anon.empty()) {
    use_default();
  } else if (q.mode == PrivateMode::Exact) {
    // Every subset of size <= t, padded to the count a fully frequent
    // transaction would need.
    std::vector<std::string> keys;
    for (const auto& s : subsets_up_to(anon, q.t)) keys.push_back(encode_itemset(s));
    const std::uint64_t padded = subset_count(t.size(), q.t);
    std::vector<std::uint64_t> idx;
    for (const auto& k : keys) idx.push_back(pp_.hashing.index_of(k));
    while (idx.size() < padded) idx.push_back(rng_->below(pp_.tables.at(TableId::Fetch).shape.n));
    std::vector<std::uint32_t> handles;
    {
      ScopedStage s(st_.clock, "fetch");
      auto got = ot_batch(TableId::Fetch, idx);
      st_.fetches = idx.size();
      for (std::size_t k = 0; k < keys.size(); ++k) {
        auto rec = decode_blocks(got[k], bb);
        if (!rec || rec->size() != fp_bytes + 4) continue;
        if (!std::equal(rec->begin(), rec->begin() + fp_bytes, pp_.hashing.fingerprint(keys[k]).begin())) continue;
        ByteReader r(std::span<const std::uint8_t>(*rec).subspan(fp_bytes));
        auto h = r.u32();
        if (h >= pp_.tables.at(TableId::Records).shape.n) throw DecodeError("record handle out of range");
        handles.push_back(h);
      }
      st_.hits = handles.size();
    }
    if (!handles.empty()) {
      ScopedStage s(st_.clock, "records");
      fetched = fetch_records(handles);
    }
  } else {
    // One OT per LSH function; the level scan is replayed locally.
    const auto lsh = LshIndex::prep({}, pp_.universe, pp_.lsh);
    std::vector<std::string> keys;
    std::vector<std::pair<unsigned, unsigned>> fn;
    std::size_t j = 0;
    for (unsigned m = 0; m < pp_.lsh.levels.size(); ++m)
      for (unsigned l = 0; l < pp_.lsh.levels[m].repetitions; ++l, ++j) {
        keys.push_back(enhanced_key(pp_.lsh_prefixes.at(j), lsh.query_signature(m, l, anon), pp_.lsh.levels[m].bits));
        fn.emplace_back(m, l);
      }
    std::vector<std::uint64_t> idx;
    for (const auto& k : keys) idx.push_back(pp_.hashing.index_of(k));
    std::vector<std::vector<std::uint32_t>> buckets(keys.size());
    {
      ScopedStage s(st_.clock, "fetch");
      auto got = ot_batch(TableId::Fetch, idx);
      st_.fetches = idx.size();
      for (std::size_t k = 0; k < keys.size(); ++k) {
        auto rec = decode_blocks(got[k], bb);
        if (!rec || rec->size() < fp_bytes + 4) continue;
        if (!std::equal(rec->begin(), rec->begin() + fp_bytes, pp_.hashing.fingerprint(keys[k]).begin())) continue;
        ByteReader r(std::span<const std::uint8_t>(*rec).subspan(fp_bytes));
        std::size_t n = r.count(4);
        for (std::size_t i = 0; i < n; ++i) {
          auto h = r.u32();
          if (h >= pp_.tables.at(TableId::Records).shape.n) throw DecodeError("record handle out of range");
          buckets[k].push_back(h);
        }
        r.expect_done();
        ++st_.hits;
      }
    }
    std::vector<std::uint32_t> cands;
    for (std::size_t k = 0, m = 0; m < pp_.lsh.levels.size(); ++m) {
      const std::size_t reps = pp_.lsh.levels[m].repetitions;
      std::size_t collected = 0;
      for (std::size_t l = 0; l < reps; ++l) {
        const auto& b = buckets[k + l];
        cands.insert(cands.end(), b.begin(), b.end());
        collected += b.size();
        if (collected > 3 * reps) break;
      }
      k += reps;
      if (!cands.empty()) break;
    }
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
    if (!cands.empty()) {
      ScopedStage s(st_.clock, "records");
      fetched = fetch_records(cands);
    }
    std::erase_if(fetched, [&](const FetchedRule& f) { return !f.antecedent.is_subset_of(anon); });
  }

  if (!anon.empty()) {
    const auto& spk = pp_.server_pk;
    std::vector<const FetchedRule*> chosen;
    if (fetched.empty()) {
      use_default();
    } else if (q.mode == PrivateMode::Exact) {
      // Weights against the threshold, which goes last so that equal
      // weights rank ahead of it.
      std::vector<Ciphertext> values;
      for (const auto& f : fetched) values.push_back(f.weight);
      values.push_back(server_enc_->encrypt(mpz_class(static_cast<long>(q.w)), 1, *rng_));
      const mpz_class bound = static_cast<long>(std::max(pp_.max_weight, q.w));
      st_.rule_sort_size = values.size();
      std::vector<std::uint32_t> order;
      {
        ScopedStage s(st_.clock, "sort");
        order = sort(SortId::Rules, values, bound);
      }
      for (auto i : order) {
        if (i == fetched.size()) break;
        chosen.push_back(&fetched[i]);
      }
    } else {
      // M * f + tie, f = alpha * w + beta with public alpha, beta.
      const OrderingContext ctx{pp_.max_weight, pp_.universe};
      const mpz_class M = static_cast<unsigned long>(pp_.rules) + 1;
      std::vector<Ciphertext> values;
      mpz_class fmax = 0;
      for (const auto& f : fetched) {
        auto [alpha, beta] = ordering_linear_form(q.f, f.antecedent.size(), ctx);
        const mpz_class a = static_cast<long>(alpha), b = static_cast<long>(beta);
        fmax = std::max<mpz_class>(fmax, a * static_cast<long>(pp_.max_weight) + b);
        values.push_back(dj_add(spk, dj_scalar_mul(spk, f.weight, a * M),
                                dj_add(spk, server_enc_->encrypt(b * M, 1, *rng_), f.tie)));
      }
      st_.rule_sort_size = values.size();
      std::vector<std::uint32_t> order;
      {
        ScopedStage s(st_.clock, "sort");
        order = sort(SortId::Rules, values, fmax * M + pp_.rules);
      }
      for (std::size_t r = 0; r < std::min(q.k, order.size()); ++r) chosen.push_back(&fetched[order[r]]);
    }
    st_.kept_rules = chosen.size();
    if (!chosen.empty()) {
      ScopedStage s(st_.clock, "collate");
      collate(chosen, q.cap);
    } else if (!res_.used_default) {
      use_default();
    }
  }

  ch_.send({MessageType::SessionClose, session_, {}});
  ++st_.messages;
  return res_;
}

}  // namespace

ClientResult run_private_query(Channel& ch, const Transaction& t, const PrivateQuery& q, const ClientConfig& cfg) {
  ClientResult res;
  ClientRun run(ch, cfg, res);
  run.run(t, q);
  return res;
}

RecommendationList plain_exact_reference(const RuleDatabase& db, const Transaction& t, Weight w, std::size_t t_max,
                                         std::size_t cap) {
  auto out = recommend(db, t, AllAssoc{w, t_max}, cap);
  for (auto& r : out) r.weight = 0;
  return out;
}

RecommendationList plain_approx_reference(const SessionTables& tables, const RuleDatabase& db,
                                          const Transaction& t, const PrivateQuery& q) {
  const ItemSet anon = tables.anon.anonymize(t);
  std::vector<AssociationRule> chosen;
  if (!anon.empty()) {
    std::vector<ItemSet> ants;
    for (const auto& r : tables.adb.db.rules()) ants.push_back(r.antecedent);
    const auto index = LshIndex::prep(ants, db.universe_size(), tables.lsh);
    for (RuleId id : index.query_candidates(anon)) {
      const auto& r = tables.adb.db.rule(id);
      if (is_applicable(r, anon)) chosen.push_back(r);
    }
    sort_by_ordering(chosen, q.f, OrderingContext::of(db));
    if (chosen.size() > q.k) chosen.resize(q.k);
  }
  if (chosen.empty()) return default_recommendation(db);
  for (auto& r : chosen) r.consequent = tables.anon.deanonymize(r.consequent);
  auto out = collate_capacitated(chosen, q.cap);
  for (auto& r : out) r.weight = 0;
  return out;
}

}  // namespace privrec
