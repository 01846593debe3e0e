#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "privrec/anonymization.hpp"
#include "privrec/bytes.hpp"
#include "privrec/damgard_jurik.hpp"
#include "privrec/exact_index.hpp"
#include "privrec/lsh.hpp"
#include "privrec/ot.hpp"
#include "privrec/random.hpp"
#include "privrec/rules.hpp"
#include "privrec/sorting.hpp"

namespace privrec {

enum class MessageType : std::uint8_t {
  SessionInit = 1,
  PublicParams = 2,
  OtQueryBatch = 3,
  OtReplyBatch = 4,
  SortPairs = 5,
  SortOutcomes = 6,
  SessionClose = 7,
  Error = 8,
};

const char* message_type_name(MessageType t);
bool valid_message_type(std::uint8_t v);

struct Message {
  MessageType type = MessageType::Error;
  std::uint32_t session = 0;
  Bytes payload;

  friend bool operator==(const Message&, const Message&) = default;
};

enum class ErrorCode : std::uint16_t {
  Malformed = 1,
  UnexpectedMessage = 2,
  UnknownSession = 3,
  Unsupported = 4,
  Internal = 5,
};

struct ProtocolError : std::runtime_error {
  ProtocolError(ErrorCode c, const std::string& what) : std::runtime_error(what), code(c) {}
  ErrorCode code;
};

Message error_message(std::uint32_t session, ErrorCode code, const std::string& text);
// Throws ProtocolError carrying the peer's code and text.
[[noreturn]] void raise_error_message(const Message& m);

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kDefaultMaxPayload = std::size_t{64} << 20;

enum class PrivateMode : std::uint8_t { Exact = 1, Approx = 2 };

// OT tables served per session.
enum class TableId : std::uint8_t { Anonymize = 1, Fetch = 2, Records = 3, Reverse = 4 };

struct RandomFactory {
  std::optional<std::uint64_t> seed;
  std::unique_ptr<RandomSource> make(const std::string& label) const { return make_random(seed, label); }
};

struct ServerConfig {
  unsigned rsa_bits = 1024;
  unsigned ot_dims = 2;
  // Tables with at most this many slots are served with a single dimension.
  std::uint64_t linear_table_max = 2048;
  unsigned fingerprint_bits = 64;
  std::size_t prefix_len = 16;
  FingerprintAlgorithm fingerprint = FingerprintAlgorithm::Sha256;
  std::uint32_t theta = 1;
  LshParams lsh = LshParams::defaults();
  unsigned lsh_prefix_bytes = 8;
  std::size_t max_payload = kDefaultMaxPayload;
  // Largest sort request accepted from a client.
  std::size_t max_sort = std::size_t{1} << 16;
  std::optional<std::uint64_t> seed;
};

struct TableShape {
  OtShape shape;
  std::uint32_t blocks = 1;
};

// Everything the server declares publicly at session start.
struct PublicParams {
  DjPublicKey server_pk;
  PrivateMode mode = PrivateMode::Exact;
  std::uint32_t universe = 0;
  std::uint32_t rules = 0;
  Weight max_weight = 0;
  std::vector<ItemId> default_items;
  TwoLevelHashing hashing;
  std::map<TableId, TableShape> tables;
  // approximate mode
  LshParams lsh;
  std::vector<std::string> lsh_prefixes;  // one per (level, repetition), level-major

  void write(ByteWriter& w) const;
  static PublicParams read(ByteReader& r);
};

struct SessionInit {
  std::uint8_t version = kProtocolVersion;
  PrivateMode mode = PrivateMode::Exact;
  DjPublicKey client_pk;

  void write(ByteWriter& w) const;
  static SessionInit read(ByteReader& r);
};

struct OtBatch {
  TableId table = TableId::Fetch;
  std::vector<OtQuery> queries;
};

struct OtReplyBatchMsg {
  TableId table = TableId::Fetch;
  std::vector<OtReply> replies;
};

enum class SortId : std::uint8_t { Rules = 1, Items = 2 };

struct StageClock {
  std::map<std::string, double> ms;
  void add(const std::string& stage, double v) { ms[stage] += v; }
};

class ScopedStage {
 public:
  ScopedStage(StageClock& c, std::string stage) : c_(c), stage_(std::move(stage)), t0_(clock::now()) {}
  ~ScopedStage() { c_.add(stage_, std::chrono::duration<double, std::milli>(clock::now() - t0_).count()); }

 private:
  using clock = std::chrono::steady_clock;
  StageClock& c_;
  std::string stage_;
  clock::time_point t0_;
};

// Per-session server material, rebuilt on every session (rekey).
struct SessionTables {
  PrivateMode mode = PrivateMode::Exact;
  AnonymizationTables anon;
  AnonymizedDb adb;
  TwoLevelHashing hashing;
  BuildStats build;
  std::map<TableId, std::vector<OtEntry>> entries;
  std::map<TableId, TableShape> shapes;
  std::vector<std::string> fetch_keys;     // stored keys, unprefixed
  std::vector<std::uint32_t> handles;      // anonymized rule id - 1 -> record index
  std::vector<std::string> lsh_prefixes;
  LshParams lsh;
  std::size_t shared_buckets = 0;  // approximate mode: keys holding several rules
};

// Number of dimensions and shape used for a table of n slots.
OtShape table_shape(std::uint64_t n, unsigned dims, std::uint64_t linear_max);

class PrivateServer;

class ServerSession {
 public:
  ServerSession(const PrivateServer& server, std::uint32_t id);

  std::uint32_t id() const { return id_; }
  bool closed() const { return closed_; }
  // Reply to one client message; nullopt after SESSION_CLOSE. Protocol
  // violations produce an ERROR reply and close the session.
  std::optional<Message> handle(const Message& m);

  const StageClock& clock() const { return clock_; }
  const SessionTables& tables() const { return *tables_; }
  const PublicParams& params() const { return params_; }

 private:
  Message on_init(const Message& m);
  Message on_ot(const Message& m);
  Message on_sort(const Message& m);
  Message dispatch(const Message& m);

  const PrivateServer& server_;
  std::uint32_t id_;
  bool started_ = false;
  bool closed_ = false;
  std::unique_ptr<RandomSource> rng_;
  DjPublicKey client_pk_;
  std::unique_ptr<SessionTables> tables_;
  PublicParams params_;
  std::map<TableId, std::unique_ptr<OtResponder>> responders_;
  StageClock clock_;
};

class PrivateServer {
 public:
  PrivateServer(RuleDatabase db, ServerConfig cfg);

  const RuleDatabase& db() const { return db_; }
  const ServerConfig& config() const { return cfg_; }
  const DjKeyPair& keys() const { return keys_; }
  const DjEncryptor& encryptor() const { return *enc_; }

  std::unique_ptr<ServerSession> open_session() const;
  // Fresh per-session tables (anonymization, hashing, prefixes, encrypted
  // weights) for a client whose blocks hold block_bytes bytes.
  std::unique_ptr<SessionTables> build_tables(PrivateMode mode, std::size_t block_bytes, RandomSource& rng) const;
  RandomFactory randomness() const { return {cfg_.seed}; }
  std::uint64_t next_counter() const { return counter_.fetch_add(1); }

 private:
  RuleDatabase db_;
  ServerConfig cfg_;
  DjKeyPair keys_;
  std::unique_ptr<DjEncryptor> enc_;
  std::vector<std::uint32_t> frequencies_;
  mutable std::atomic<std::uint64_t> counter_{1};
};

// Client side transport: request/reply exchange with the server.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual Message exchange(const Message& m) = 0;
  // One-way message (SESSION_CLOSE).
  virtual void send(const Message& m) = 0;
};

struct TranscriptEntry {
  bool to_server = true;
  Message message;
};

// Records every message passing through another channel.
class RecordingChannel final : public Channel {
 public:
  explicit RecordingChannel(Channel& inner) : inner_(inner) {}
  Message exchange(const Message& m) override;
  void send(const Message& m) override;
  const std::vector<TranscriptEntry>& transcript() const { return log_; }

 private:
  Channel& inner_;
  std::vector<TranscriptEntry> log_;
};

// Server side dispatch of frames to sessions; one per connection.
class ServerEndpoint {
 public:
  explicit ServerEndpoint(const PrivateServer& server) : server_(server) {}
  // nullopt when no reply is due (SESSION_CLOSE).
  std::optional<Message> handle(const Message& m);
  ServerSession* session(std::uint32_t id);
  std::size_t open_sessions() const { return sessions_.size(); }
  // Timings of sessions closed so far, merged.
  const StageClock& closed_clock() const { return closed_clock_; }
  // Most recently closed session, kept for inspection.
  const ServerSession* last_closed() const { return last_closed_.get(); }

 private:
  const PrivateServer& server_;
  std::map<std::uint32_t, std::unique_ptr<ServerSession>> sessions_;
  std::unique_ptr<ServerSession> last_closed_;
  StageClock closed_clock_;
};

struct PrivateQuery {
  PrivateMode mode = PrivateMode::Exact;
  // exact: ALL-Assoc(w, t)
  Weight w = 0;
  std::size_t t = 3;
  // approximate: top-k rules by f among verified candidates
  OrderingFunction f = OrderingFunction::length_then_weight();
  std::size_t k = 1;
  // collate cap k'
  std::size_t cap = 3;
};

struct ClientConfig {
  unsigned rsa_bits = 1024;
  unsigned max_layer = 4;
  std::optional<std::uint64_t> seed;
  std::size_t subset_cap = kDefaultSubsetCap;
  std::size_t max_payload = kDefaultMaxPayload;
};

struct ClientStats {
  std::size_t ots = 0;
  std::size_t anonymized_items = 0;
  std::size_t fetches = 0;
  std::size_t hits = 0;
  std::size_t records = 0;
  std::size_t kept_rules = 0;
  std::size_t rule_sort_size = 0;
  std::size_t item_sort_size = 0;
  std::size_t comparisons = 0;
  std::size_t deanonymized = 0;
  std::size_t messages = 0;
  std::size_t bytes_sent = 0;
  std::size_t bytes_received = 0;
  std::size_t sort_rounds = 0;
  StageClock clock;
};

struct ClientResult {
  RecommendationList items;  // weights stay hidden and are reported as 0
  bool used_default = false;
  std::uint32_t session = 0;
  ClientStats stats;
};

ClientResult run_private_query(Channel& ch, const Transaction& t, const PrivateQuery& q,
                               const ClientConfig& cfg = {});

// Reference results computed without privacy, in the same shape as the
// private pipeline (weights zeroed).
RecommendationList plain_exact_reference(const RuleDatabase& db, const Transaction& t, Weight w, std::size_t t_max,
                                         std::size_t cap);

// Tie values carried encrypted in records: higher for smaller ids.
inline mpz_class item_tie(ItemId original, std::size_t universe) {
  return static_cast<unsigned long>(universe - original);
}
inline mpz_class rule_tie(RuleId id, std::size_t rules) { return static_cast<unsigned long>(rules - id); }

// Plaintext run of the approximate pipeline over a session's tables (tests).
RecommendationList plain_approx_reference(const SessionTables& tables, const RuleDatabase& db,
                                          const Transaction& t, const PrivateQuery& q);

// Key of function j = (m, l) of the enhanced database: prefix then the
// signature bits packed little-endian into ceil(bits / 8) bytes.
std::string enhanced_key(const std::string& prefix, std::uint64_t signature, unsigned bits);

// Linear form alpha * w + beta of an ordering function for a rule with an
// antecedent of len items; throws std::invalid_argument for custom g1/g2.
std::pair<std::int64_t, std::int64_t> ordering_linear_form(const OrderingFunction& f, std::size_t len,
                                                           const OrderingContext& ctx);

}  // namespace privrec
