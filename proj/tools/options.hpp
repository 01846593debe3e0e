#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "privrec/lsh.hpp"
#include "privrec/protocol.hpp"
#include "privrec/rules.hpp"

namespace privrec::cli {

enum class Mode { ExactPlain, ApproxPlain, ExactPrivate, ApproxPrivate };

Mode parse_mode(const std::string& name);
const char* mode_name(Mode m);
inline bool is_private(Mode m) { return m == Mode::ExactPrivate || m == Mode::ApproxPrivate; }
inline bool is_approx(Mode m) { return m == Mode::ApproxPlain || m == Mode::ApproxPrivate; }

struct QueryOptions {
  std::string criterion = "all";
  std::size_t k = 3;
  Weight w = 0;
  std::size_t t = 3;
  std::string ordering = "length-weight";
  std::size_t cap = 3;
};

Criterion make_criterion(const QueryOptions& q);

// Rules from an SPMF file, or a synthetic database when path is empty.
struct DataOptions {
  std::string rules_path;
  std::size_t synthetic_rules = 1000;
  std::size_t universe = 10000;
  std::size_t min_len = 1;
  std::size_t max_len = 5;
  std::uint64_t seed = 1;
};

RuleDatabase load_database(const DataOptions& d);

// LSH levels no wider than sig_bits; a recall schedule for queries of
// query_len items when delta is set.
LshParams lsh_params(unsigned sig_bits, std::optional<double> recall_delta, std::size_t query_len,
                     std::uint64_t seed);

// count transactions of exactly len items, each holding some antecedent.
std::vector<Transaction> sample_transactions(const RuleDatabase& db, std::size_t len, std::size_t count,
                                             std::uint64_t seed);

}  // namespace privrec::cli
