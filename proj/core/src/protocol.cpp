#include "privrec/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace privrec {

namespace {

constexpr unsigned kMaxDepth = DjPublicKey::kMaxLayer;
constexpr std::uint32_t kMaxBlocks = 1u << 16;

void write_shape(ByteWriter& w, const TableShape& t) {
  w.u64(t.shape.n);
  w.u8(static_cast<std::uint8_t>(t.shape.depth()));
  for (auto d : t.shape.dims) w.u64(d);
  w.u32(t.blocks);
}

TableShape read_shape(ByteReader& r) {
  TableShape t;
  t.shape.n = r.u64();
  unsigned depth = r.u8();
  if (depth == 0 || depth > kMaxDepth) throw DecodeError("table depth out of range");
  for (unsigned j = 0; j < depth; ++j) {
    auto d = r.u64();
    if (d == 0) throw DecodeError("empty table dimension");
    t.shape.dims.push_back(d);
  }
  if (t.shape.n == 0 || t.shape.capacity() < t.shape.n) throw DecodeError("table shape too small");
  t.blocks = r.u32();
  if (t.blocks == 0 || t.blocks > kMaxBlocks) throw DecodeError("block count out of range");
  return t;
}

PrivateMode read_mode(ByteReader& r) {
  auto m = r.u8();
  if (m != 1 && m != 2) throw DecodeError("unknown mode");
  return static_cast<PrivateMode>(m);
}

Message reply_to(const Message& m, MessageType type, Bytes payload) {
  return {type, m.session, std::move(payload)};
}

std::vector<OtEntry> value_table(const std::vector<ItemId>& v) {
  std::vector<OtEntry> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i]) out.push_back({i, {mpz_class(static_cast<unsigned long>(v[i]))}});
  return out;
}

}  // namespace

const char* message_type_name(MessageType t) {
  switch (t) {
    case MessageType::SessionInit: return "SESSION_INIT";
    case MessageType::PublicParams: return "PUBLIC_PARAMS";
    case MessageType::OtQueryBatch: return "OT_QUERY_BATCH";
    case MessageType::OtReplyBatch: return "OT_REPLY_BATCH";
    case MessageType::SortPairs: return "SORT_PAIRS";
    case MessageType::SortOutcomes: return "SORT_OUTCOMES";
    case MessageType::SessionClose: return "SESSION_CLOSE";
    case MessageType::Error: return "ERROR";
  }
  return "?";
}

bool valid_message_type(std::uint8_t v) { return v >= 1 && v <= 8; }

Message error_message(std::uint32_t session, ErrorCode code, const std::string& text) {
  ByteWriter w;
  w.u16(static_cast<std::uint16_t>(code));
  w.str(text.substr(0, 1024));
  return {MessageType::Error, session, w.take()};
}

void raise_error_message(const Message& m) {
  ErrorCode code = ErrorCode::Malformed;
  std::string text = "malformed error message";
  try {
    ByteReader r(m.payload);
    code = static_cast<ErrorCode>(r.u16());
    text = r.str();
  } catch (const DecodeError&) {
  }
  throw ProtocolError(code, "peer error: " + text);
}

void PublicParams::write(ByteWriter& w) const {
  server_pk.write(w);
  w.u8(static_cast<std::uint8_t>(mode));
  w.u32(universe);
  w.u32(rules);
  w.i64(max_weight);
  w.u32(static_cast<std::uint32_t>(default_items.size()));
  for (auto i : default_items) w.u32(i);
  write_hashing(w, hashing);
  w.u8(static_cast<std::uint8_t>(tables.size()));
  for (const auto& [id, t] : tables) {
    w.u8(static_cast<std::uint8_t>(id));
    write_shape(w, t);
  }
  w.u64(lsh.seed);
  w.u32(static_cast<std::uint32_t>(lsh.levels.size()));
  for (const auto& l : lsh.levels) {
    w.u32(l.bits);
    w.u32(l.repetitions);
  }
  w.u32(static_cast<std::uint32_t>(lsh_prefixes.size()));
  for (const auto& p : lsh_prefixes) w.str(p);
}

PublicParams PublicParams::read(ByteReader& r) {
  PublicParams p;
  p.server_pk = DjPublicKey::read(r);
  p.mode = read_mode(r);
  p.universe = r.u32();
  p.rules = r.u32();
  p.max_weight = r.i64();
  if (p.max_weight < 0) throw DecodeError("negative weight bound");
  std::size_t n = r.count(4);
  for (std::size_t i = 0; i < n; ++i) p.default_items.push_back(r.u32());
  p.hashing = read_hashing(r);
  unsigned tables = r.u8();
  for (unsigned i = 0; i < tables; ++i) {
    auto id = r.u8();
    if (id < 1 || id > 4) throw DecodeError("unknown table id");
    p.tables[static_cast<TableId>(id)] = read_shape(r);
  }
  p.lsh.seed = r.u64();
  std::size_t levels = r.count(8);
  for (std::size_t i = 0; i < levels; ++i) {
    LshLevel l;
    l.bits = r.u32();
    l.repetitions = r.u32();
    if (l.bits == 0 || l.bits > 64 || l.repetitions == 0) throw DecodeError("bad LSH level");
    p.lsh.levels.push_back(l);
  }
  std::size_t prefixes = r.count(4);
  for (std::size_t i = 0; i < prefixes; ++i) p.lsh_prefixes.push_back(r.str());
  if (p.mode == PrivateMode::Approx && prefixes != p.lsh.table_count())
    throw DecodeError("prefix count does not match the LSH schedule");
  for (TableId t : {TableId::Anonymize, TableId::Fetch, TableId::Records, TableId::Reverse})
    if (!p.tables.count(t)) throw DecodeError("missing table shape");
  return p;
}

void SessionInit::write(ByteWriter& w) const {
  w.u8(version);
  w.u8(static_cast<std::uint8_t>(mode));
  client_pk.write(w);
}

SessionInit SessionInit::read(ByteReader& r) {
  SessionInit s;
  s.version = r.u8();
  s.mode = read_mode(r);
  s.client_pk = DjPublicKey::read(r);
  return s;
}

std::string enhanced_key(const std::string& prefix, std::uint64_t signature, unsigned bits) {
  std::string key = prefix;
  for (unsigned b = 0; b < bits; b += 8) key.push_back(static_cast<char>((signature >> b) & 0xff));
  return key;
}

std::pair<std::int64_t, std::int64_t> ordering_linear_form(const OrderingFunction& f, std::size_t len,
                                                           const OrderingContext& ctx) {
  if (f.g1 || f.g2) throw std::invalid_argument("private ordering supports identity g1/g2 only");
  const auto plen = static_cast<std::int64_t>(len);
  switch (f.kind) {
    case OrderingKind::WeightOnly: return {1, 0};
    case OrderingKind::LengthOnly: return {0, plen};
    case OrderingKind::LengthThenWeight: return {1, ctx.max_weight * plen};
    case OrderingKind::WeightThenLength: return {static_cast<std::int64_t>(ctx.universe_size), plen};
  }
  throw std::invalid_argument("unknown ordering");
}

OtShape table_shape(std::uint64_t n, unsigned dims, std::uint64_t linear_max) {
  if (dims <= 1 || n <= linear_max) return ot_shape(n, 1);
  // layer s encryptions and folds cost roughly ((s + 1) / 2)^1.7 of layer 1
  std::vector<double> cost(dims);
  for (unsigned j = 0; j < dims; ++j) cost[j] = std::pow((j + 2) / 2.0, 1.7);
  return ot_shape_weighted(n, cost);
}

PrivateServer::PrivateServer(RuleDatabase db, ServerConfig cfg) : db_(std::move(db)), cfg_(std::move(cfg)) {
  if (db_.empty()) throw std::invalid_argument("private server needs at least one rule");
  if (cfg_.ot_dims == 0 || cfg_.ot_dims > kMaxDepth) throw std::invalid_argument("ot_dims out of range");
  auto rng = randomness().make("server-key");
  keys_ = dj_keygen(cfg_.rsa_bits, 1, *rng);
  enc_ = std::make_unique<DjEncryptor>(keys_.sk);
  frequencies_ = db_.item_frequencies();
}

std::unique_ptr<ServerSession> PrivateServer::open_session() const {
  auto id = static_cast<std::uint32_t>(next_counter());
  if (id == 0) id = static_cast<std::uint32_t>(next_counter());
  return std::make_unique<ServerSession>(*this, id);
}

std::unique_ptr<SessionTables> PrivateServer::build_tables(PrivateMode mode, std::size_t block_bytes,
                                                           RandomSource& rng) const {
  auto T = std::make_unique<SessionTables>();
  const std::size_t U = db_.universe_size();
  T->mode = mode;
  T->anon = build_anonymization(U, frequencies_, cfg_.theta, rng);
  T->adb = anonymize_db(db_, T->anon);
  const auto& rules = T->adb.db.rules();
  if (rules.empty()) throw std::runtime_error("no rule survives anonymization");

  const OtShape small = table_shape(U + 1, cfg_.ot_dims, cfg_.linear_table_max);
  T->entries[TableId::Anonymize] = value_table(T->anon.forward);
  T->entries[TableId::Reverse] = value_table(T->anon.reverse);
  T->shapes[TableId::Anonymize] = {small, 1};
  T->shapes[TableId::Reverse] = {small, 1};

  // Records, stored at a random handle per rule.
  T->handles.resize(rules.size());
  std::iota(T->handles.begin(), T->handles.end(), 0u);
  std::shuffle(T->handles.begin(), T->handles.end(), rng);
  const DjPublicKey& spk = keys_.pk;
  std::vector<Bytes> recs(rules.size());
  std::size_t rec_blocks = 1;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const auto& r = rules[i];
    ByteWriter w;
    w.u16(static_cast<std::uint16_t>(r.antecedent.size()));
    for (auto x : r.antecedent) w.u32(x);
    w.u16(static_cast<std::uint16_t>(r.consequent.size()));
    for (auto x : r.consequent) w.u32(x);
    write_ciphertext(w, spk, enc_->encrypt(mpz_class(static_cast<long>(r.weight)), 1, rng));
    if (mode == PrivateMode::Approx)
      write_ciphertext(w, spk, enc_->encrypt(rule_tie(T->adb.original_id[i], db_.size()), 1, rng));
    for (auto x : r.consequent) write_ciphertext(w, spk, enc_->encrypt(item_tie(T->anon.unmap(x), U), 1, rng));
    recs[i] = w.take();
    rec_blocks = std::max(rec_blocks, blocks_needed(recs[i].size(), block_bytes));
  }
  auto& rec_entries = T->entries[TableId::Records];
  for (std::size_t i = 0; i < rules.size(); ++i)
    rec_entries.push_back({T->handles[i], encode_blocks(recs[i], block_bytes, rec_blocks)});
  std::sort(rec_entries.begin(), rec_entries.end(), [](auto& a, auto& b) { return a.index < b.index; });
  T->shapes[TableId::Records] = {table_shape(rules.size(), cfg_.ot_dims, cfg_.linear_table_max),
                                 static_cast<std::uint32_t>(rec_blocks)};

  // Fetch table keys and the handles each key resolves to.
  std::vector<std::vector<std::uint32_t>> key_handles;
  if (mode == PrivateMode::Exact) {
    for (std::size_t i = 0; i < rules.size(); ++i) {
      T->fetch_keys.push_back(encode_itemset(rules[i].antecedent));
      key_handles.push_back({T->handles[i]});
    }
  } else {
    T->lsh = cfg_.lsh;
    const auto lsh = LshIndex::prep({}, U, T->lsh);
    std::set<std::string> seen;
    std::map<std::string, std::size_t> key_pos;
    for (unsigned m = 0; m < T->lsh.levels.size(); ++m) {
      const unsigned bits = T->lsh.levels[m].bits;
      for (unsigned l = 0; l < T->lsh.levels[m].repetitions; ++l) {
        std::string prefix(cfg_.lsh_prefix_bytes, '\0');
        do rng.fill({reinterpret_cast<std::uint8_t*>(prefix.data()), prefix.size()});
        while (!seen.insert(prefix).second);
        T->lsh_prefixes.push_back(prefix);
        for (std::size_t i = 0; i < rules.size(); ++i) {
          auto key = enhanced_key(prefix, lsh.data_signature(m, l, rules[i].antecedent), bits);
          auto [it, fresh] = key_pos.emplace(key, T->fetch_keys.size());
          if (fresh) {
            T->fetch_keys.push_back(key);
            key_handles.emplace_back();
          }
          key_handles[it->second].push_back(T->handles[i]);
        }
      }
    }
    for (const auto& h : key_handles) T->shared_buckets += h.size() > 1;
  }

  TwoLevelConfig tl;
  tl.fingerprint_bits = cfg_.fingerprint_bits;
  tl.prefix_len = cfg_.prefix_len;
  tl.algorithm = cfg_.fingerprint;
  tl.seed = rng();
  std::vector<std::uint64_t> slots;
  T->hashing = build_two_level_hashing(T->fetch_keys, tl, slots, T->build);

  std::vector<Bytes> payloads(T->fetch_keys.size());
  std::size_t fetch_blocks = 1;
  for (std::size_t k = 0; k < payloads.size(); ++k) {
    ByteWriter w;
    w.raw(T->hashing.fingerprint(T->fetch_keys[k]));
    if (mode == PrivateMode::Exact) {
      w.u32(key_handles[k][0]);
    } else {
      w.u32(static_cast<std::uint32_t>(key_handles[k].size()));
      for (auto h : key_handles[k]) w.u32(h);
    }
    payloads[k] = w.take();
    fetch_blocks = std::max(fetch_blocks, blocks_needed(payloads[k].size(), block_bytes));
  }
  auto& fetch_entries = T->entries[TableId::Fetch];
  for (std::size_t k = 0; k < payloads.size(); ++k)
    fetch_entries.push_back({slots[k], encode_blocks(payloads[k], block_bytes, fetch_blocks)});
  std::sort(fetch_entries.begin(), fetch_entries.end(), [](auto& a, auto& b) { return a.index < b.index; });
  T->shapes[TableId::Fetch] = {table_shape(T->hashing.virtual_size(), cfg_.ot_dims, cfg_.linear_table_max),
                               static_cast<std::uint32_t>(fetch_blocks)};
  return T;
}

ServerSession::ServerSession(const PrivateServer& server, std::uint32_t id)
    : server_(server), id_(id), rng_(server.randomness().make("session-" + std::to_string(id))) {}

std::optional<Message> ServerSession::handle(const Message& m) {
  if (closed_) return error_message(id_, ErrorCode::UnexpectedMessage, "session closed");
  if (m.type == MessageType::SessionClose) {
    closed_ = true;
    return std::nullopt;
  }
  auto fail = [&](ErrorCode c, const std::string& text) {
    closed_ = true;
    return error_message(id_, c, text);
  };
  try {
    return dispatch(m);
  } catch (const ProtocolError& e) {
    return fail(e.code, e.what());
  } catch (const DecodeError& e) {
    return fail(ErrorCode::Malformed, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(ErrorCode::Malformed, e.what());
  } catch (const std::length_error& e) {
    return fail(ErrorCode::Malformed, e.what());
  } catch (const std::exception& e) {
    return fail(ErrorCode::Internal, e.what());
  }
}

Message ServerSession::dispatch(const Message& m) {
  switch (m.type) {
    case MessageType::SessionInit:
      if (started_) throw ProtocolError(ErrorCode::UnexpectedMessage, "session already initialized");
      return on_init(m);
    case MessageType::OtQueryBatch:
    case MessageType::SortPairs:
      if (!started_) throw ProtocolError(ErrorCode::UnexpectedMessage, "session not initialized");
      return m.type == MessageType::OtQueryBatch ? on_ot(m) : on_sort(m);
    default:
      throw ProtocolError(ErrorCode::UnexpectedMessage,
                          std::string("unexpected ") + message_type_name(m.type) + " from client");
  }
}

Message ServerSession::on_init(const Message& m) {
  ByteReader r(m.payload);
  auto init = SessionInit::read(r);
  r.expect_done();
  if (init.version != kProtocolVersion) throw ProtocolError(ErrorCode::Unsupported, "protocol version mismatch");
  const auto& cfg = server_.config();
  client_pk_ = init.client_pk;
  const std::size_t fp_bytes = (cfg.fingerprint_bits + 7) / 8;
  if (client_pk_.block_bytes() < fp_bytes + 8)
    throw ProtocolError(ErrorCode::Unsupported, "client modulus too small for table blocks");
  {
    ScopedStage st(clock_, "rekey");
    tables_ = server_.build_tables(init.mode, client_pk_.block_bytes(), *rng_);
  }
  for (const auto& [id, t] : tables_->shapes)
    if (t.shape.depth() > client_pk_.max_layer())
      throw ProtocolError(ErrorCode::Unsupported, "client key has too few layers for the table shapes");
  for (const auto& [id, t] : tables_->shapes)
    responders_[id] = std::make_unique<OtResponder>(client_pk_, t.shape, t.blocks);

  const auto& db = server_.db();
  params_.server_pk = server_.keys().pk;
  params_.mode = init.mode;
  params_.universe = static_cast<std::uint32_t>(db.universe_size());
  params_.rules = static_cast<std::uint32_t>(db.size());
  params_.max_weight = db.max_weight();
  params_.default_items = db.global_frequent_items().vec();
  params_.hashing = tables_->hashing;
  params_.tables = tables_->shapes;
  if (init.mode == PrivateMode::Approx) {
    params_.lsh = tables_->lsh;
    params_.lsh_prefixes = tables_->lsh_prefixes;
  }
  started_ = true;
  ByteWriter w;
  params_.write(w);
  return {MessageType::PublicParams, id_, w.take()};
}

Message ServerSession::on_ot(const Message& m) {
  ScopedStage st(clock_, "ot");
  ByteReader r(m.payload);
  auto id = r.u8();
  if (id < 1 || id > 4) throw DecodeError("unknown table id");
  const auto table = static_cast<TableId>(id);
  const auto& responder = *responders_.at(table);
  std::size_t n = r.count(1);
  std::vector<OtQuery> queries;
  queries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) queries.push_back(read_ot_query(r, client_pk_, responder.shape()));
  r.expect_done();

  const auto& entries = tables_->entries.at(table);
  std::vector<OtReply> replies;
  replies.reserve(n);
  for (const auto& q : queries) replies.push_back(responder.reply(q, entries, *rng_));
  // the anonymization answers go back in random order
  if (table == TableId::Anonymize) std::shuffle(replies.begin(), replies.end(), *rng_);

  ByteWriter w;
  w.u8(id);
  w.u32(static_cast<std::uint32_t>(replies.size()));
  for (const auto& rep : replies) write_ot_reply(w, client_pk_, rep);
  return reply_to(m, MessageType::OtReplyBatch, w.take());
}

Message ServerSession::on_sort(const Message& m) {
  ScopedStage st(clock_, "sort");
  ByteReader r(m.payload);
  auto id = r.u8();
  if (id != 1 && id != 2) throw DecodeError("unknown sort id");
  const auto& pk = server_.keys().pk;
  auto req = read_sort_request(r, pk);
  r.expect_done();
  if (req.values.size() > server_.config().max_sort) throw ProtocolError(ErrorCode::Unsupported, "sort too large");
  for (const auto& c : req.values)
    if (c.layer != 1 || c.value <= 0) throw DecodeError("sort value is not a layer-1 ciphertext");
  auto out = private_sort_respond(server_.keys().sk, req);
  ByteWriter w;
  w.u8(id);
  write_sort_outcomes(w, out);
  return reply_to(m, MessageType::SortOutcomes, w.take());
}

std::optional<Message> ServerEndpoint::handle(const Message& m) {
  if (m.type == MessageType::SessionInit) {
    auto s = server_.open_session();
    auto reply = s->handle(m);
    if (!s->closed()) sessions_[s->id()] = std::move(s);
    return reply;
  }
  auto it = sessions_.find(m.session);
  if (it == sessions_.end()) {
    if (m.type == MessageType::SessionClose) return std::nullopt;
    return error_message(m.session, ErrorCode::UnknownSession, "unknown session");
  }
  auto reply = it->second->handle(m);
  if (it->second->closed()) {
    for (const auto& [k, v] : it->second->clock().ms) closed_clock_.add(k, v);
    last_closed_ = std::move(it->second);
    sessions_.erase(it);
  }
  return reply;
}

ServerSession* ServerEndpoint::session(std::uint32_t id) {
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second.get();
}

Message RecordingChannel::exchange(const Message& m) {
  log_.push_back({true, m});
  Message reply = inner_.exchange(m);
  log_.push_back({false, reply});
  return reply;
}

void RecordingChannel::send(const Message& m) {
  log_.push_back({true, m});
  inner_.send(m);
}

}  // namespace privrec
