#include "bench.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "privrec/exact_index.hpp"
#include "privrec/rule_io.hpp"
#include "privrec/transport.hpp"

namespace privrec::cli {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) { return std::chrono::duration<double, std::milli>(Clock::now() - t0).count(); }

bool same_ids(const std::vector<AssociationRule>& a, const std::vector<AssociationRule>& b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](const auto& x, const auto& y) { return x.id == y.id; });
}

struct Samples {
  std::vector<double> total;
  std::map<std::string, double> stages;

  void finish(BenchRow& row) const {
    auto v = total;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    row.median_ms = n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
    row.mean_ms = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
    for (const auto& [k, s] : stages) row.stages[k] = s / static_cast<double>(n);
  }
};

void bench_exact_plain(const RuleDatabase& db, const std::vector<Transaction>& txns, const BenchConfig& cfg,
                       std::size_t t, BenchRow& row) {
  auto t0 = Clock::now();
  auto idx = ExactIndex::prep(db, {.seed = cfg.seed});
  row.stages["prep_once"] = ms_since(t0);
  auto q = cfg.query;
  q.t = t;
  const auto c = make_criterion(q);
  Samples s;
  for (const auto& txn : txns) {
    ExactQueryStats st;
    auto a = Clock::now();
    auto rules = exact_query(txn, idx, c, kDefaultSubsetCap, &st);
    double fetch = ms_since(a);
    auto b = Clock::now();
    auto list = rules.empty() ? default_recommendation(db) : collate_capacitated(rules, q.cap);
    double collate = ms_since(b);
    s.total.push_back(fetch + collate);
    s.stages["fetch"] += fetch;
    s.stages["collate"] += collate;
    s.stages["fetches"] += static_cast<double>(st.fetches);
    s.stages["hits"] += static_cast<double>(st.hits);
  }
  s.finish(row);
}

void bench_approx_plain(const RuleDatabase& db, const std::vector<Transaction>& txns, const BenchConfig& cfg,
                        BenchRow& row) {
  const auto params = lsh_params(cfg.sig_bits, cfg.recall_delta, txns.front().size(), cfg.seed);
  const OrderingFunction f{parse_ordering(cfg.query.ordering), {}, {}};
  const bool top1 = cfg.query.k <= 1;
  auto t0 = Clock::now();
  LshIndex index;
  TopKIndex topk;
  if (top1) {
    std::vector<ItemSet> ants;
    ants.reserve(db.size());
    for (const auto& r : db.rules()) ants.push_back(r.antecedent);
    index = LshIndex::prep(ants, db.universe_size(), params);
  } else {
    topk = topk_prep(db, cfg.query.k, params, cfg.seed);
  }
  row.stages["prep_once"] = ms_since(t0);
  Samples s;
  std::size_t correct = 0;
  for (const auto& txn : txns) {
    auto a = Clock::now();
    std::vector<AssociationRule> rules;
    if (top1) {
      if (auto r = query_top1(txn, index, db, f)) rules.push_back(*r);
    } else {
      rules = query_topk(txn, topk, db, f, cfg.query.k);
    }
    double lookup = ms_since(a);
    auto b = Clock::now();
    auto list = rules.empty() ? default_recommendation(db) : collate_capacitated(rules, cfg.query.cap);
    double collate = ms_since(b);
    s.total.push_back(lookup + collate);
    s.stages["lsh"] += lookup;
    s.stages["collate"] += collate;
    // accuracy against the brute-force answer
    std::vector<AssociationRule> want;
    if (!top1) want = select_rules(db, txn, TopKAssoc{cfg.query.k, f});
    else if (auto g = gscs(db, txn, f)) want.push_back(*g);
    correct += same_ids(rules, want);
  }
  s.finish(row);
  row.stages["accuracy"] = static_cast<double>(correct) / static_cast<double>(txns.size());
  row.stages["sig_bits"] = params.max_bits();
}

void bench_private(const RuleDatabase& db, const std::vector<Transaction>& txns, const BenchConfig& cfg,
                   std::size_t t, BenchRow& row) {
  ServerConfig sc;
  sc.rsa_bits = cfg.rsa_bits;
  sc.ot_dims = cfg.ot_dims;
  sc.seed = cfg.seed;
  sc.lsh = lsh_params(cfg.sig_bits, cfg.recall_delta, txns.front().size(), cfg.seed);
  auto t0 = Clock::now();
  PrivateServer server(db, sc);
  row.stages["prep_once"] = ms_since(t0);

  PrivateQuery q;
  q.mode = cfg.mode == Mode::ApproxPrivate ? PrivateMode::Approx : PrivateMode::Exact;
  q.w = cfg.query.w;
  q.t = t;
  q.k = cfg.query.k;
  q.f = {parse_ordering(cfg.query.ordering), {}, {}};
  q.cap = cfg.query.cap;
  Samples s;
  std::uint64_t n = 0;
  for (const auto& txn : txns) {
    ClientConfig cc;
    cc.rsa_bits = cfg.rsa_bits;
    cc.seed = cfg.seed + 1000 + n++;
    LoopbackChannel ch(server);
    auto a = Clock::now();
    auto res = run_private_query(ch, txn, q, cc);
    s.total.push_back(ms_since(a));
    for (const auto& [k, v] : res.stats.clock.ms) s.stages["client_" + k] += v;
    for (const auto& [k, v] : ch.endpoint().closed_clock().ms) s.stages["server_" + k] += v;
    s.stages["ots"] += static_cast<double>(res.stats.ots);
    s.stages["bytes"] += static_cast<double>(res.stats.bytes_sent + res.stats.bytes_received);
  }
  s.finish(row);
}

}  // namespace

void run_bench(const BenchConfig& cfg, const std::function<void(const BenchRow&)>& sink) {
  if (cfg.repetitions == 0) throw std::invalid_argument("repetitions must be at least 1");
  if (cfg.db_sizes.empty() || cfg.txn_sizes.empty() || cfg.t_values.empty())
    throw std::invalid_argument("empty sweep range");
  for (std::size_t d : cfg.db_sizes) {
    SyntheticSpec spec;
    spec.rules = d;
    spec.universe = cfg.universe;
    spec.seed = cfg.seed;
    const auto db = gen_synthetic(spec);
    for (std::size_t len : cfg.txn_sizes) {
      const auto txns = sample_transactions(db, len, cfg.repetitions, cfg.seed + len);
      for (std::size_t t : cfg.t_values) {
        BenchRow row{cfg.mode, d, len, t, cfg.query.k, is_private(cfg.mode) ? cfg.rsa_bits : 0u, 0, 0, {}};
        switch (cfg.mode) {
          case Mode::ExactPlain: bench_exact_plain(db, txns, cfg, t, row); break;
          case Mode::ApproxPlain: bench_approx_plain(db, txns, cfg, row); break;
          case Mode::ExactPrivate:
          case Mode::ApproxPrivate: bench_private(db, txns, cfg, t, row); break;
        }
        sink(row);
      }
    }
  }
}

void write_csv_header(std::ostream& out) { out << "mode,D,T,t,k,N,median_ms,mean_ms,stage_breakdown_json\n"; }

void write_csv_row(std::ostream& out, const BenchRow& row) {
  nlohmann::json stages(row.stages);
  std::string js = stages.dump();
  std::string quoted;
  for (char c : js) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
  out << mode_name(row.mode) << ',' << row.db_size << ',' << row.txn_size << ',' << row.t << ',' << row.k << ',';
  if (row.rsa_bits) out << row.rsa_bits;
  out << ',' << row.median_ms << ',' << row.mean_ms << ",\"" << quoted << "\"\n";
}

}  // namespace privrec::cli
