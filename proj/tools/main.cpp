#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "bench.hpp"
#include "options.hpp"
#include "privrec/exact_index.hpp"
#include "privrec/rule_io.hpp"
#include "privrec/transport.hpp"

using namespace privrec;
using namespace privrec::cli;
using nlohmann::json;

namespace {

void add_data_options(CLI::App* app, DataOptions& d) {
  app->add_option("--rules-file", d.rules_path, "SPMF rule file (synthetic rules when omitted)");
  app->add_option("--synthetic", d.synthetic_rules, "number of synthetic rules");
  app->add_option("--universe", d.universe, "synthetic item universe size");
  app->add_option("--seed", d.seed, "seed for data, keys and hashing");
}

void add_query_options(CLI::App* app, QueryOptions& q) {
  app->add_option("--criterion", q.criterion, "top, top1, topk, all or any")
      ->check(CLI::IsMember({"top", "top1", "topk", "all", "any"}));
  app->add_option("--k", q.k, "number of rules kept");
  app->add_option("--w", q.w, "minimum rule weight");
  app->add_option("--t", q.t, "maximum antecedent length");
  app->add_option("--ordering", q.ordering, "weight, length, length-weight or weight-length")
      ->check(CLI::IsMember({"weight", "length", "length-weight", "weight-length"}));
  app->add_option("--cap", q.cap, "recommended items");
}

json to_json(const RecommendationList& list) {
  json out = json::array();
  for (const auto& r : list) out.push_back({{"item", r.item}, {"weight", r.weight}});
  return out;
}

json to_json(const ClientStats& s) {
  return {{"ots", s.ots},           {"anonymized_items", s.anonymized_items},
          {"fetches", s.fetches},   {"hits", s.hits},
          {"records", s.records},   {"kept_rules", s.kept_rules},
          {"sort_rounds", s.sort_rounds},
          {"comparisons", s.comparisons},
          {"messages", s.messages}, {"bytes_sent", s.bytes_sent},
          {"bytes_received", s.bytes_received},
          {"stage_ms", s.clock.ms}};
}

int cmd_gen(const DataOptions& d, std::size_t min_len, std::size_t max_len, const std::string& out) {
  SyntheticSpec spec;
  spec.rules = d.synthetic_rules;
  spec.universe = d.universe;
  spec.min_len = min_len;
  spec.max_len = max_len;
  spec.seed = d.seed;
  auto db = gen_synthetic(spec);
  if (out.empty() || out == "-") {
    write_spmf(std::cout, db);
  } else {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write " + out);
    write_spmf(f, db);
  }
  std::cerr << "generated " << db.size() << " rules over " << db.universe_size() << " items\n";
  return 0;
}

int cmd_load_check(const std::string& path, std::size_t universe, bool index) {
  LoadReport report;
  LoadOptions opts;
  opts.universe_size = universe;
  auto db = load_rules(path, opts, &report);
  std::map<std::string, std::size_t> lengths;
  for (const auto& r : db.rules()) ++lengths[std::to_string(r.antecedent.size())];
  json out{{"path", path},
           {"lines", report.lines},
           {"parsed_rules", report.parsed_rules},
           {"merged_duplicates", report.merged_duplicates},
           {"rules", db.size()},
           {"universe", db.universe_size()},
           {"max_weight", db.max_weight()},
           {"antecedent_lengths", lengths},
           {"default_items", db.global_frequent_items().vec()}};
  if (index) {
    auto idx = ExactIndex::prep(db, {});
    out["index"] = {{"L", idx.hashing().L},
                    {"first_level_draws", idx.stats().first_level_draws},
                    {"second_level_draws", idx.stats().second_level_draws},
                    {"sum_squares", idx.stats().sum_squares}};
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

ServerConfig server_config(unsigned rsa_bits, unsigned ot_dims, unsigned sig_bits, std::optional<double> delta,
                           std::uint32_t theta, std::uint64_t seed, bool seeded) {
  ServerConfig sc;
  sc.rsa_bits = rsa_bits;
  sc.ot_dims = ot_dims;
  sc.theta = theta;
  sc.lsh = lsh_params(sig_bits, delta, 3, seed);
  if (seeded) sc.seed = seed;
  return sc;
}

int cmd_serve(const DataOptions& d, const ServerConfig& sc, const std::string& host, std::uint16_t port) {
  auto db = load_database(d);
  std::cerr << "loaded " << db.size() << " rules; generating " << sc.rsa_bits << "-bit key\n";

  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  PrivateServer server(std::move(db), sc);
  TcpServer tcp(server, host, port, sc.max_payload, [](const std::string& line) { std::cerr << line << "\n"; });
  std::cerr << "listening on " << host << ":" << tcp.port() << "\n";
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&sigs, &sig);
    tcp.stop();
  });
  tcp.run();
  // run() also returns on accept failure; release the waiter either way
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  std::cerr << "served " << tcp.connections_served() << " connections\n";
  return 0;
}

struct QueryArgs {
  std::string mode = "exact-plain";
  std::string items;
  std::string transactions;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  bool local = false;
  unsigned rsa_bits = 1024;
  unsigned ot_dims = 2;
  unsigned sig_bits = 32;
  std::optional<double> recall_delta;
  std::optional<std::uint64_t> client_seed;
};

int cmd_query(const DataOptions& d, const QueryOptions& qo, const QueryArgs& a) {
  const Mode mode = parse_mode(a.mode);
  std::vector<Transaction> txns;
  if (!a.items.empty()) txns.push_back(parse_item_list(a.items));
  if (!a.transactions.empty()) {
    auto more = load_transactions(a.transactions);
    txns.insert(txns.end(), more.begin(), more.end());
  }
  if (txns.empty()) throw std::invalid_argument("give --items or --transactions");

  const OrderingFunction f{parse_ordering(qo.ordering), {}, {}};
  std::optional<RuleDatabase> db;
  if (!is_private(mode) || a.local) db = load_database(d);

  if (mode == Mode::ExactPlain) {
    auto idx = ExactIndex::prep(*db, {.seed = d.seed});
    const auto c = make_criterion(qo);
    for (const auto& t : txns) {
      ExactQueryStats st;
      auto rules = exact_query(t, idx, c, kDefaultSubsetCap, &st);
      auto list = rules.empty() ? default_recommendation(*db) : collate_capacitated(rules, qo.cap);
      json rj = json::array();
      for (const auto& r : rules) rj.push_back({{"id", r.id}, {"weight", r.weight}});
      std::cout << json{{"mode", mode_name(mode)}, {"transaction", t.vec()}, {"rules", rj},
                        {"items", to_json(list)}, {"default", rules.empty()},
                        {"fetches", st.fetches}, {"hits", st.hits}}
                       .dump()
                << "\n";
    }
    return 0;
  }
  if (mode == Mode::ApproxPlain) {
    if (qo.criterion != "top1" && qo.criterion != "topk")
      throw std::invalid_argument("approximate mode answers top1 or topk");
    const std::size_t k = qo.criterion == "top1" ? 1 : qo.k;
    const auto params = lsh_params(a.sig_bits, a.recall_delta, txns.front().size(), d.seed);
    auto topk = topk_prep(*db, k, params, d.seed);
    for (const auto& t : txns) {
      auto rules = query_topk(t, topk, *db, f, k);
      auto list = rules.empty() ? default_recommendation(*db) : collate_capacitated(rules, qo.cap);
      json rj = json::array();
      for (const auto& r : rules) rj.push_back({{"id", r.id}, {"weight", r.weight}});
      std::cout << json{{"mode", mode_name(mode)}, {"transaction", t.vec()}, {"rules", rj},
                        {"items", to_json(list)}, {"default", rules.empty()}}
                       .dump()
                << "\n";
    }
    return 0;
  }

  PrivateQuery q;
  q.mode = mode == Mode::ApproxPrivate ? PrivateMode::Approx : PrivateMode::Exact;
  q.w = qo.w;
  q.t = qo.t;
  q.k = qo.k;
  q.f = f;
  q.cap = qo.cap;
  ClientConfig cc;
  cc.rsa_bits = a.rsa_bits;
  cc.seed = a.client_seed;

  std::unique_ptr<PrivateServer> local;
  if (a.local)
    local = std::make_unique<PrivateServer>(
        std::move(*db), server_config(a.rsa_bits, a.ot_dims, a.sig_bits, a.recall_delta, 1, d.seed, true));
  for (const auto& t : txns) {
    std::unique_ptr<Channel> ch;
    if (local) ch = std::make_unique<LoopbackChannel>(*local);
    else ch = std::make_unique<TcpChannel>(a.host, a.port ? a.port : default_port());
    auto res = run_private_query(*ch, t, q, cc);
    std::cout << json{{"mode", mode_name(mode)}, {"transaction", t.vec()}, {"items", to_json(res.items)},
                      {"default", res.used_default}, {"session", res.session}, {"stats", to_json(res.stats)}}
                     .dump()
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy-preserving association rule recommendations"};
  app.require_subcommand(1);

  DataOptions data;
  QueryOptions query;

  auto* gen = app.add_subcommand("gen", "write a synthetic rule set in SPMF format");
  std::size_t min_len = 1, max_len = 5;
  std::string gen_out;
  gen->add_option("--rules", data.synthetic_rules, "number of rules");
  gen->add_option("--universe", data.universe, "item universe size");
  gen->add_option("--min-len", min_len, "shortest antecedent");
  gen->add_option("--max-len", max_len, "longest antecedent");
  gen->add_option("--seed", data.seed, "generator seed");
  gen->add_option("--out", gen_out, "output path, stdout by default");

  auto* check = app.add_subcommand("load-check", "parse a rule file and report what was loaded");
  std::string check_path;
  std::size_t check_universe = 0;
  bool check_index = false;
  check->add_option("path", check_path, "SPMF rule file")->required()->check(CLI::ExistingFile);
  check->add_option("--universe", check_universe, "item universe size, largest id by default");
  check->add_flag("--index", check_index, "also build the exact index");

  auto* serve = app.add_subcommand("serve", "run the private recommendation server");
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  unsigned rsa_bits = 1024, ot_dims = 2, sig_bits = 32;
  std::uint32_t theta = 1;
  std::optional<double> recall_delta;
  add_data_options(serve, data);
  serve->add_option("--host", host, "IPv4 address to bind");
  serve->add_option("--port", port, "TCP port (PRIVREC_PORT or 7878 by default)");
  serve->add_option("--rsa-bits", rsa_bits, "server modulus size")->check(CLI::Range(256u, 8192u));
  serve->add_option("--ot-dims", ot_dims, "OT table dimensions")->check(CLI::Range(1u, 4u));
  serve->add_option("--sig-bits", sig_bits, "widest LSH signature")->check(CLI::Range(1u, 64u));
  serve->add_option("--recall-delta", recall_delta, "size LSH repetitions for this miss probability");
  serve->add_option("--theta", theta, "minimum item frequency kept by anonymization");

  auto* q = app.add_subcommand("query", "run queries in plain or private mode");
  QueryArgs qa;
  add_data_options(q, data);
  add_query_options(q, query);
  q->add_option("--mode", qa.mode, "exact-plain, approx-plain, exact-private or approx-private")
      ->check(CLI::IsMember({"exact-plain", "approx-plain", "exact-private", "approx-private"}));
  q->add_option("--items", qa.items, "transaction as a comma or space separated item list");
  q->add_option("--transactions", qa.transactions, "file with one transaction per line");
  q->add_option("--host", qa.host, "server address for private modes");
  q->add_option("--port", qa.port, "server port (PRIVREC_PORT or 7878 by default)");
  q->add_flag("--local", qa.local, "run the private server in process");
  q->add_option("--rsa-bits", qa.rsa_bits, "client modulus size")->check(CLI::Range(256u, 8192u));
  q->add_option("--ot-dims", qa.ot_dims, "OT table dimensions for --local")->check(CLI::Range(1u, 4u));
  q->add_option("--sig-bits", qa.sig_bits, "widest LSH signature")->check(CLI::Range(1u, 64u));
  q->add_option("--recall-delta", qa.recall_delta, "size LSH repetitions for this miss probability");
  q->add_option("--client-seed", qa.client_seed, "seed for client keys and randomness");

  auto* bench = app.add_subcommand("bench", "latency sweep written as CSV");
  BenchConfig bc;
  std::string bench_mode = "exact-plain", bench_out;
  bench->add_option("--mode", bench_mode, "exact-plain, approx-plain, exact-private or approx-private")
      ->check(CLI::IsMember({"exact-plain", "approx-plain", "exact-private", "approx-private"}));
  bench->add_option("--D", bc.db_sizes, "rule counts")->delimiter(',');
  bench->add_option("--T", bc.txn_sizes, "transaction lengths")->delimiter(',');
  bench->add_option("--t", bc.t_values, "maximum antecedent lengths")->delimiter(',');
  bench->add_option("--k", bc.query.k, "rules kept (approx modes: top-k)");
  bench->add_option("--w", bc.query.w, "minimum rule weight");
  bench->add_option("--criterion", bc.query.criterion, "exact-plain criterion")
      ->check(CLI::IsMember({"top", "top1", "topk", "all", "any"}));
  bench->add_option("--ordering", bc.query.ordering, "ordering function")
      ->check(CLI::IsMember({"weight", "length", "length-weight", "weight-length"}));
  bench->add_option("--cap", bc.query.cap, "recommended items");
  bench->add_option("--rsa-bits", bc.rsa_bits, "modulus size N for private modes")->check(CLI::Range(256u, 8192u));
  bench->add_option("--ot-dims", bc.ot_dims, "OT table dimensions")->check(CLI::Range(1u, 4u));
  bench->add_option("--sig-bits", bc.sig_bits, "widest LSH signature")->check(CLI::Range(1u, 64u));
  bench->add_option("--recall-delta", bc.recall_delta, "size LSH repetitions for this miss probability");
  bench->add_option("--reps", bc.repetitions, "queries per configuration")->check(CLI::PositiveNumber);
  bench->add_option("--universe", bc.universe, "synthetic item universe size");
  bench->add_option("--seed", bc.seed, "seed for data, queries and keys");
  bench->add_option("--out", bench_out, "CSV path, stdout by default");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen(data, min_len, max_len, gen_out);
    if (*check) return cmd_load_check(check_path, check_universe, check_index);
    if (*serve) {
      const bool seeded = serve->count("--seed") > 0;
      return cmd_serve(data, server_config(rsa_bits, ot_dims, sig_bits, recall_delta, theta, data.seed, seeded), host,
                       port ? port : default_port());
    }
    if (*q) return cmd_query(data, query, qa);
    if (*bench) {
      bc.mode = parse_mode(bench_mode);
      std::ofstream file;
      if (!bench_out.empty()) {
        file.open(bench_out);
        if (!file) throw std::runtime_error("cannot write " + bench_out);
      }
      std::ostream& out = bench_out.empty() ? std::cout : file;
      write_csv_header(out);
      run_bench(bc, [&](const BenchRow& row) {
        write_csv_row(out, row);
        out.flush();
        std::cerr << mode_name(row.mode) << " D=" << row.db_size << " T=" << row.txn_size << " t=" << row.t
                  << " median " << row.median_ms << " ms\n";
      });
      return 0;
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
