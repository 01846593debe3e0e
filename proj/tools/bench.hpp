#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "options.hpp"

namespace privrec::cli {

struct BenchConfig {
  Mode mode = Mode::ExactPlain;
  std::vector<std::size_t> db_sizes{1000};
  std::vector<std::size_t> txn_sizes{5};
  std::vector<std::size_t> t_values{3};
  QueryOptions query;
  unsigned rsa_bits = 1024;
  unsigned ot_dims = 2;
  unsigned sig_bits = 32;
  std::optional<double> recall_delta;
  std::size_t repetitions = 10;
  std::size_t universe = 10000;
  std::uint64_t seed = 1;
};

struct BenchRow {
  Mode mode;
  std::size_t db_size = 0;
  std::size_t txn_size = 0;
  std::size_t t = 0;
  std::size_t k = 0;
  unsigned rsa_bits = 0;  // 0 for plain modes
  double median_ms = 0;
  double mean_ms = 0;
  std::map<std::string, double> stages;  // mean per query, plus counters
};

// Runs every (D, |T|, t) combination in order, calling sink after each.
void run_bench(const BenchConfig& cfg, const std::function<void(const BenchRow&)>& sink);

void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, const BenchRow& row);

}  // namespace privrec::cli
