// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Arguments select a subset of criteria by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>

#include "privrec/exact_index.hpp"
#include "privrec/lsh.hpp"
#include "privrec/ot.hpp"
#include "privrec/rule_io.hpp"
#include "privrec/sorting.hpp"
#include "privrec/transport.hpp"
#include "support.hpp"

using namespace privrec;
using privrec::testing::items_of;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<Criterion> all_criteria(std::mt19937_64& rng) {
  auto f = OrderingFunction{static_cast<OrderingKind>(rng() % 4), {}, {}};
  return {TopAssoc{1 + rng() % 5, static_cast<Weight>(rng() % 30), 1 + rng() % 4, f}, Top1Assoc{f},
          TopKAssoc{1 + rng() % 6, f}, AllAssoc{static_cast<Weight>(rng() % 30), 1 + rng() % 4},
          AnyAssoc{1 + rng() % 6, static_cast<Weight>(rng() % 30), 1 + rng() % 4}};
}

Outcome exact_oracle() {
  auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::size_t checked = 0, wrong = 0;
  for (int iter = 0; iter < 500; ++iter) {
    testing::RandomDbSpec spec;
    spec.universe = 1 + rng() % 12;
    spec.max_rules = 1 + rng() % 200;
    auto db = testing::random_db(rng, spec);
    auto idx = ExactIndex::prep(db, {.seed = rng()});
    auto t = testing::random_itemset(rng, db.universe_size(), 0, db.universe_size());
    for (const auto& c : all_criteria(rng)) {
      ++checked;
      if (exact_query(t, idx, c) != select_rules(db, t, c)) ++wrong;
      // the test-side oracle agrees on ids
      if (testing::ids_of(select_rules(db, t, c)) != testing::brute_select(db, t, c)) ++wrong;
    }
  }
  double s = seconds_since(t0);
  return {wrong == 0 && s < 60, fmt("%zu queries, %zu mismatches, %.1fs", checked, wrong, s)};
}

Outcome private_equality() {
  auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  int wrong = 0, defaults = 0;
  for (int iter = 0; iter < 50; ++iter) {
    testing::RandomDbSpec spec;
    spec.max_rules = 1 + rng() % 100;
    auto db = testing::random_db(rng, spec);
    ServerConfig sc;
    sc.rsa_bits = 1024;
    sc.seed = 1000 + iter;
    PrivateServer server(db, sc);
    auto t = testing::random_itemset(rng, db.universe_size(), 1, 5);
    PrivateQuery q;
    q.w = static_cast<Weight>(rng() % 20);
    q.t = 1 + rng() % 3;
    q.cap = 1 + rng() % 4;
    ClientConfig cc;
    cc.rsa_bits = 1024;
    cc.seed = 2000 + iter;
    LoopbackChannel ch(server);
    auto res = run_private_query(ch, t, q, cc);
    auto applicable = select_rules(db, t, AllAssoc{q.w, q.t});
    auto want = applicable.empty() ? default_recommendation(db) : collate_capacitated(applicable, q.cap);
    auto ids = testing::brute_select(db, t, AllAssoc{q.w, q.t});
    auto oracle = ids.empty() ? default_recommendation(db) : testing::brute_collate(db, ids, q.cap);
    if (items_of(res.items) != items_of(want) || items_of(res.items) != items_of(oracle)) ++wrong;
    defaults += res.used_default;
  }
  double s = seconds_since(t0);
  return {wrong == 0 && s < 600, fmt("50 instances, %d mismatches, %d defaults, %.1fs", wrong, defaults, s)};
}

Outcome lsh_accuracy() {
  auto t0 = Clock::now();
  SyntheticSpec spec;
  spec.rules = 10000;
  spec.seed = 7;
  auto db = gen_synthetic(spec);
  std::mt19937_64 rng(99);
  ZipfSampler zipf(spec.universe, 1.0);
  const auto f = OrderingFunction::length_then_weight();
  std::vector<Transaction> queries;
  std::vector<RuleId> best;
  // each query contains an antecedent so a top-1 answer exists
  while (queries.size() < 1000) {
    const auto& r = db.rules()[rng() % db.size()];
    if (r.antecedent.size() > 3) continue;
    auto items = r.antecedent.vec();
    while (items.size() < 3) {
      ItemId x = zipf(rng);
      if (std::find(items.begin(), items.end(), x) == items.end()) items.push_back(x);
    }
    auto t = ItemSet::from_unsorted(items);
    queries.push_back(t);
    best.push_back(gscs(db, t, f)->id);
  }
  std::vector<ItemSet> ants;
  for (const auto& r : db.rules()) ants.push_back(r.antecedent);
  auto index = LshIndex::prep(ants, db.universe_size(), LshParams::recall_schedule({32, 16, 10}, 3, 0.005, 4096, 3));
  std::map<unsigned, double> acc;
  for (unsigned w : {32u, 16u, 10u}) {
    auto view = index.restricted(w);
    int ok = 0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      auto r = query_top1(queries[i], view, db, f);
      ok += r && r->id == best[i];
    }
    acc[w] = ok / 10.0;
  }
  double s = seconds_since(t0);
  bool pass = acc[32] >= 99 && acc[16] >= 95 && acc[10] <= acc[16] - 10 && s < 600;
  return {pass, fmt("A32=%.1f%% A16=%.1f%% A10=%.1f%%, %.1fs", acc[32], acc[16], acc[10], s)};
}

Outcome scaling_identity() {
  std::mt19937_64 rng(404);
  const std::size_t d = 64;
  GaussianBank bank(17, d + 1);
  std::size_t pairs = 0, wrong = 0;
  for (unsigned l = 0; pairs < 100000; ++l) {
    auto t = testing::random_itemset(rng, d, 1, 20);
    auto q = query_vector(t, d);
    // T / |T|_2 in R^d, then P(.)
    SparseVector unit{q.index, std::vector<double>(q.value.size(), 1.0 / std::sqrt(static_cast<double>(t.size()))), d};
    auto a = signature(bank, 0, l, 32, q);
    auto b = signature(bank, 0, l, 32, augment(unit));
    wrong += static_cast<std::size_t>(__builtin_popcountll(a ^ b));
    pairs += 32;
  }
  return {wrong == 0, fmt("%zu pairs, %zu sign flips", pairs, wrong)};
}

Outcome mapping_identities() {
  std::mt19937_64 rng(505);
  const std::size_t d = 40;
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    auto p = testing::random_itemset(rng, d, 1, 10);
    auto t = testing::random_itemset(rng, d, 1, 10);
    auto pp = augment(scaled_antecedent(p, d)).dense();
    std::vector<double> tt(d, 0.0);
    for (ItemId j : t) tt[j - 1] = 1.0 / std::sqrt(static_cast<double>(t.size()));
    auto pt = augment(std::span<const double>(tt));
    double norm = 0, dot = 0, want = 0;
    for (double x : pp) norm += x * x;
    for (std::size_t c = 0; c <= d; ++c) dot += pp[c] * pt[c];
    for (ItemId j : p) want += tt[j - 1];
    want /= static_cast<double>(p.size());
    worst = std::max({worst, std::abs(std::sqrt(norm) - 1), std::abs(dot - want)});
  }
  return {worst <= 1e-9, fmt("10000 pairs, max deviation %.2e", worst)};
}

Outcome fks_builds() {
  auto t0 = Clock::now();
  SyntheticSpec spec;
  spec.rules = 1000;
  spec.seed = 6;
  auto db = gen_synthetic(spec);
  std::vector<unsigned> r_draws, s_draws;
  int bad = 0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    auto idx = ExactIndex::prep(db, {.seed = seed});
    std::set<std::uint64_t> slots;
    for (const auto& e : idx.table().entries()) slots.insert(e.slot);
    if (slots.size() != db.size() || idx.stats().sum_squares > 4 * db.size()) ++bad;
    r_draws.push_back(idx.stats().first_level_draws);
    s_draws.push_back(idx.stats().second_level_draws);
  }
  auto median = [](std::vector<unsigned> v) {
    std::sort(v.begin(), v.end());
    return (v[99] + v[100]) / 2.0;
  };
  double mr = median(r_draws), ms = median(s_draws), s = seconds_since(t0);
  return {bad == 0 && mr <= 2 && ms <= 2 && s < 120,
          fmt("200 builds, %d invalid, median h_r draws %.1f, h_s draws %.1f, %.1fs", bad, mr, ms, s)};
}

struct OtKeys {
  DjKeyPair keys;
  DjEncryptor enc;
  explicit OtKeys(unsigned bits, std::uint64_t seed) : keys(make(bits, seed)), enc(keys.sk) {}
  static DjKeyPair make(unsigned bits, std::uint64_t seed) {
    SeededRandom rng(seed, "acceptance-ot");
    return dj_keygen(bits, 2, rng);
  }
};

Outcome ot_correctness() {
  auto t0 = Clock::now();
  OtKeys k(1024, 7);
  SeededRandom rng(8, "acceptance-ot-ops");
  std::size_t runs = 0, failures = 0;
  for (unsigned d : {1u, 2u})
    for (std::uint64_t n = 1; n <= 64; ++n) {
      auto shape = ot_shape(n, d);
      std::vector<mpz_class> v;
      for (std::uint64_t i = 0; i < n; ++i) v.push_back(rng.below(k.keys.pk.n()));
      for (std::uint64_t i = 0; i < n; ++i) {
        auto rep = ot_reply(k.keys.pk, shape, ot_query(k.enc, shape, i, rng), v, rng);
        failures += ot_extract(k.keys.sk, rep) != std::vector<mpz_class>{v[i]};
        ++runs;
      }
    }
  // n = 10^4 as a two-dimensional table
  const std::uint64_t n = 10000;
  auto shape = ot_shape(n, 2);
  OtResponder responder(k.keys.pk, shape, 1);
  std::vector<OtEntry> entries;
  for (std::uint64_t i = 0; i < n; ++i) entries.push_back({i, {mpz_class(static_cast<unsigned long>(i * 7919 + 1))}});
  std::mt19937_64 pick(9);
  for (int s = 0; s < 1000; ++s) {
    std::uint64_t i = pick() % n;
    auto rep = responder.reply(ot_query(k.enc, shape, i, rng), entries, rng);
    failures += ot_extract(k.keys.sk, rep) != std::vector<mpz_class>{entries[i].blocks[0]};
    ++runs;
  }
  return {failures == 0, fmt("%zu retrievals, %zu failures, %.1fs", runs, failures, seconds_since(t0))};
}

Outcome ot_transcripts() {
  OtKeys k(1024, 11);
  SeededRandom rng(12, "acceptance-ot-ops");
  std::size_t shapes = 0, mismatches = 0;
  for (unsigned d : {1u, 2u})
    for (std::uint64_t n : {5u, 64u, 300u})
      for (std::size_t blocks : {1u, 3u}) {
        auto shape = ot_shape(n, d);
        OtResponder responder(k.keys.pk, shape, blocks);
        std::vector<OtEntry> entries;
        for (std::uint64_t i = 0; i < n; i += 3) {
          std::vector<mpz_class> b;
          for (std::size_t j = 0; j < blocks; ++j) b.push_back(rng.below(k.keys.pk.n()));
          entries.push_back({i, b});
        }
        std::vector<std::size_t> first;
        for (std::uint64_t i = 0; i < n; i += (n > 64 ? 7 : 1)) {
          // one query message, one reply message
          ByteWriter wq, wr;
          auto q = ot_query(k.enc, shape, i, rng);
          write_ot_query(wq, k.keys.pk, q);
          write_ot_reply(wr, k.keys.pk, responder.reply(q, entries, rng));
          std::vector<std::size_t> lens{wq.take().size(), wr.take().size()};
          if (first.empty()) first = lens;
          mismatches += lens != first;
        }
        ++shapes;
      }
  return {mismatches == 0, fmt("%zu configurations, %zu transcripts differing in shape", shapes, mismatches)};
}

Outcome private_sort() {
  auto t0 = Clock::now();
  SeededRandom krng(13, "acceptance-sort");
  auto keys = dj_keygen(1024, 1, krng);
  SeededRandom rng(14, "acceptance-sort-ops");
  std::mt19937_64 pick(15);
  int wrong = 0, bad_rounds = 0, bad_count = 0;
  for (int iter = 0; iter < 500; ++iter) {
    std::size_t n = 1 + pick() % 64;
    std::vector<long> v(n);
    for (auto& x : v) x = static_cast<long>(pick() % (iter % 2 ? 8 : 1000));
    std::vector<Ciphertext> cs;
    for (long x : v) cs.push_back(dj_encrypt(keys.pk, x, 1, rng));
    PrivateSortClient client(keys.pk, cs, 1000, rng);
    int rounds = 0;
    ByteWriter req;
    write_sort_request(req, keys.pk, client.request());
    auto req_bytes = req.take();
    ++rounds;
    ByteReader rr(req_bytes);
    auto outcomes = private_sort_respond(keys.sk, read_sort_request(rr, keys.pk));
    ByteWriter rep;
    write_sort_outcomes(rep, outcomes);
    auto rep_bytes = rep.take();
    ++rounds;
    ByteReader ro(rep_bytes);
    auto order = client.finish(read_sort_outcomes(ro));
    wrong += order != descending_order<long>(v);
    bad_rounds += rounds != 2;
    bad_count += outcomes.signs.size() != testing::batcher_size(n);
  }
  return {wrong == 0 && bad_rounds == 0 && bad_count == 0,
          fmt("500 lists, %d misordered, %d comparison counts off Batcher, %.1fs", wrong, bad_count,
              seconds_since(t0))};
}

Outcome rand_order() {
  auto t0 = Clock::now();
  SeededRandom krng(16, "acceptance-rand");
  auto keys = dj_keygen(1024, 1, krng);
  DjEncryptor enc(keys.sk);
  SeededRandom rng(17, "acceptance-rand-ops");
  const mpz_class bound = mpz_class(1) << 64;
  int wrong = 0;
  for (int i = 0; i < 100000; ++i) {
    mpz_class a = rng.below(bound + 1), b = i % 10 == 0 ? a : rng.below(bound + 1);
    auto [e1, e2] = rand_pair(keys.pk, enc.encrypt(a, 1, rng), enc.encrypt(b, 1, rng), bound, rng);
    wrong += sgn(mpz_class(keys.sk.decrypt(e1) - keys.sk.decrypt(e2))) != sgn(mpz_class(a - b));
  }
  return {wrong == 0, fmt("100000 pairs, %d order changes, %.1fs", wrong, seconds_since(t0))};
}

Outcome latency() {
  // exact-plain on 10^6 rules
  SyntheticSpec spec;
  spec.rules = 1000000;
  spec.universe = 100000;
  spec.seed = 11;
  auto db = gen_synthetic(spec);
  auto tb = Clock::now();
  auto idx = ExactIndex::prep(db, {.seed = 3});
  double build = seconds_since(tb);
  std::mt19937_64 rng(12);
  std::set<ItemId> items;
  for (int i = 0; items.size() < 20; ++i) {
    const auto& r = db.rules()[rng() % db.size()];
    if (items.size() + r.antecedent.size() <= 20 && r.antecedent.size() <= 5)
      items.insert(r.antecedent.begin(), r.antecedent.end());
    if (i > 1000) items.insert(static_cast<ItemId>(1 + rng() % spec.universe));
  }
  auto t = ItemSet::from_unsorted({items.begin(), items.end()});
  auto t0 = Clock::now();
  auto hits = exact_query(t, idx, AllAssoc{0, 5}, 25);
  auto list = collate_capacitated(hits, 3);
  double plain = seconds_since(t0);
  bool plain_ok = hits == select_rules(db, t, AllAssoc{0, 5}) && !hits.empty();

  // exact-private on 10^3 rules with a 1024-bit modulus
  spec = {};
  spec.rules = 1000;
  spec.max_len = 3;
  spec.seed = 5;
  auto small = gen_synthetic(spec);
  ServerConfig sc;
  sc.seed = 1;
  PrivateServer server(small, sc);
  std::vector<ItemId> v = small.rule(1).antecedent.vec();
  for (ItemId x = 1; v.size() < 5; ++x)
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
  auto pt = ItemSet::from_unsorted(v);
  LoopbackChannel ch(server);
  ClientConfig cc;
  cc.seed = 2;
  auto t1 = Clock::now();
  auto res = run_private_query(ch, pt, {}, cc);
  double priv = seconds_since(t1);
  bool priv_ok = res.items == plain_exact_reference(small, pt, 0, 3, 3);
  return {plain_ok && priv_ok && plain < 60 && priv < 120,
          fmt("plain |D|=1e6 |T|=20 t=5: %.2fs (%zu rules, index build %.1fs); private |D|=1e3 |T|=5: %.1fs, %s",
              plain, hits.size(), build, priv, priv_ok ? "matches" : "MISMATCH")};
}

Outcome rekey() {
  auto t0 = Clock::now();
  SyntheticSpec spec;
  spec.rules = 50;
  spec.universe = 200;
  spec.max_len = 3;
  spec.seed = 21;
  auto db = gen_synthetic(spec);
  ServerConfig sc;
  sc.rsa_bits = 1024;
  sc.seed = 22;
  PrivateServer server(db, sc);
  auto rng = server.randomness().make("rekey-trials");
  const std::string key = encode_itemset(db.rule(1).antecedent);
  auto prev = server.build_tables(PrivateMode::Exact, 127, *rng);
  std::size_t changed = 0, broken = 0;
  const std::uint64_t L = prev->hashing.L;
  for (int i = 0; i < 200; ++i) {
    auto next = server.build_tables(PrivateMode::Exact, 127, *rng);
    changed += next->hashing.index_of(key) != prev->hashing.index_of(key);
    broken += !testing::check_session_fetch(*next, db, 127).empty();
    prev = std::move(next);
  }
  double need = 200.0 * (1.0 - 2.0 / static_cast<double>(L));
  return {changed >= need && broken == 0,
          fmt("%zu/200 index changes (need %.1f, L=%llu), %zu broken sessions, %.1fs", changed, need,
              static_cast<unsigned long long>(L), broken, seconds_since(t0))};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"exact index equals selection oracle", exact_oracle},
      {"private exact path equals plain pipeline", private_equality},
      {"LSH top-1 accuracy by signature width", lsh_accuracy},
      {"query scaling keeps signature signs", scaling_identity},
      {"augmentation mapping identities", mapping_identities},
      {"two-level table construction", fks_builds},
      {"OT retrieval correctness", ot_correctness},
      {"OT transcript shape independent of index", ot_transcripts},
      {"two-party sort", private_sort},
      {"randomized pairs keep order", rand_order},
      {"latency envelopes", latency},
      {"session rekey", rekey},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %2d %s: %s (%s)\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
