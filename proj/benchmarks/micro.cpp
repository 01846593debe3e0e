#include <benchmark/benchmark.h>

#include <map>
#include <memory>

#include "privrec/exact_index.hpp"
#include "privrec/lsh.hpp"
#include "privrec/ot.hpp"
#include "privrec/rule_io.hpp"
#include "privrec/sorting.hpp"
#include "privrec/transport.hpp"

using namespace privrec;

namespace {

const DjKeyPair& keys(unsigned bits) {
  static std::map<unsigned, std::unique_ptr<DjKeyPair>> cache;
  auto& k = cache[bits];
  if (!k) {
    SeededRandom rng(bits, "bench-keys");
    k = std::make_unique<DjKeyPair>(dj_keygen(bits, 3, rng));
  }
  return *k;
}

const RuleDatabase& synthetic(std::size_t rules) {
  static std::map<std::size_t, std::unique_ptr<RuleDatabase>> cache;
  auto& db = cache[rules];
  if (!db) {
    SyntheticSpec spec;
    spec.rules = rules;
    spec.seed = 5;
    db = std::make_unique<RuleDatabase>(gen_synthetic(spec));
  }
  return *db;
}

Transaction query_for(const RuleDatabase& db, std::size_t len) {
  auto items = db.rule(1).antecedent.vec();
  for (ItemId x = 1; items.size() < len; ++x)
    if (std::find(items.begin(), items.end(), x) == items.end()) items.push_back(x);
  items.resize(len);
  return ItemSet::from_unsorted(items);
}

void BM_Encrypt(benchmark::State& state) {
  const auto& k = keys(static_cast<unsigned>(state.range(0)));
  DjEncryptor enc(k.sk);
  SeededRandom rng(1);
  const unsigned layer = static_cast<unsigned>(state.range(1));
  enc.encrypt(1, layer, rng);  // builds the fixed-base tables
  for (auto _ : state) benchmark::DoNotOptimize(enc.encrypt(12345, layer, rng));
}
BENCHMARK(BM_Encrypt)->Args({1024, 1})->Args({1024, 2})->Args({2048, 1})->Unit(benchmark::kMicrosecond);

void BM_Decrypt(benchmark::State& state) {
  const auto& k = keys(static_cast<unsigned>(state.range(0)));
  SeededRandom rng(2);
  auto c = dj_encrypt(k.pk, 777, static_cast<unsigned>(state.range(1)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(k.sk.decrypt(c));
}
BENCHMARK(BM_Decrypt)->Args({1024, 1})->Args({1024, 2})->Args({2048, 1})->Unit(benchmark::kMicrosecond);

void BM_OtReply(benchmark::State& state) {
  const auto& k = keys(1024);
  DjEncryptor enc(k.sk);
  SeededRandom rng(3);
  const auto n = static_cast<std::uint64_t>(state.range(0));
  auto shape = ot_shape(n, static_cast<unsigned>(state.range(1)));
  OtResponder responder(k.pk, shape, 1);
  std::vector<OtEntry> entries;
  for (std::uint64_t i = 0; i < n; i += 4) entries.push_back({i, {rng.below(k.pk.n())}});
  auto q = ot_query(enc, shape, n / 2, rng);
  for (auto _ : state) benchmark::DoNotOptimize(responder.reply(q, entries, rng));
  state.counters["sparse_entries"] = static_cast<double>(entries.size());
}
BENCHMARK(BM_OtReply)->Args({1024, 1})->Args({1024, 2})->Args({16384, 2})->Unit(benchmark::kMillisecond);

void BM_PrivateSort(benchmark::State& state) {
  const auto& k = keys(1024);
  SeededRandom rng(4);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<Ciphertext> cs;
  for (std::size_t i = 0; i < n; ++i) cs.push_back(dj_encrypt(k.pk, static_cast<unsigned long>(i * 37 % 101), 1, rng));
  for (auto _ : state) {
    PrivateSortClient client(k.pk, cs, 1000, rng);
    benchmark::DoNotOptimize(client.finish(private_sort_respond(k.sk, client.request())));
  }
}
BENCHMARK(BM_PrivateSort)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ExactQuery(benchmark::State& state) {
  const auto& db = synthetic(static_cast<std::size_t>(state.range(0)));
  auto idx = ExactIndex::prep(db, {.seed = 1});
  auto t = query_for(db, 5);
  for (auto _ : state) benchmark::DoNotOptimize(exact_query(t, idx, AllAssoc{0, 3}));
}
BENCHMARK(BM_ExactQuery)->Arg(1000)->Arg(100000)->Unit(benchmark::kMicrosecond);

void BM_LshTop1(benchmark::State& state) {
  const auto& db = synthetic(10000);
  std::vector<ItemSet> ants;
  for (const auto& r : db.rules()) ants.push_back(r.antecedent);
  auto idx = LshIndex::prep(ants, db.universe_size(), LshParams::defaults(1).capped(static_cast<unsigned>(state.range(0))));
  auto t = query_for(db, 3);
  const auto f = OrderingFunction::length_then_weight();
  for (auto _ : state) benchmark::DoNotOptimize(query_top1(t, idx, db, f));
}
BENCHMARK(BM_LshTop1)->Arg(10)->Arg(16)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_PrivateExactQuery(benchmark::State& state) {
  const auto& db = synthetic(static_cast<std::size_t>(state.range(0)));
  ServerConfig sc;
  sc.rsa_bits = 512;
  sc.seed = 1;
  PrivateServer server(db, sc);
  auto t = query_for(db, 3);
  ClientConfig cc;
  cc.rsa_bits = 512;
  cc.seed = 2;
  for (auto _ : state) {
    LoopbackChannel ch(server);
    benchmark::DoNotOptimize(run_private_query(ch, t, {}, cc));
  }
}
BENCHMARK(BM_PrivateExactQuery)->Arg(100)->Unit(benchmark::kMillisecond)->Iterations(2);

}  // namespace

BENCHMARK_MAIN();
