#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "privrec/rules.hpp"

namespace privrec {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct LoadOptions {
  std::int64_t weight_scale = 10000;
  std::size_t universe_size = 0;    // 0: largest id seen
  std::size_t frequent_items = 10;  // size of the default recommendation list
};

struct LoadReport {
  std::size_t lines = 0;
  std::size_t parsed_rules = 0;
  std::size_t merged_duplicates = 0;
};

// SPMF association-rule output: "a1 a2 ==> c1 c2 #SUP: s #CONF: x".
RuleDatabase parse_spmf(std::istream& in, const LoadOptions& opts = {}, LoadReport* report = nullptr);
RuleDatabase load_rules(const std::string& path, const LoadOptions& opts = {}, LoadReport* report = nullptr);
void write_spmf(std::ostream& out, const RuleDatabase& db, std::int64_t weight_scale = 10000);

std::vector<Transaction> parse_transactions(std::istream& in);
std::vector<Transaction> load_transactions(const std::string& path);
Transaction parse_item_list(const std::string& text);

// Items ranked by how many rules mention them, ties by smaller id.
ItemSet most_frequent_items(const std::vector<AssociationRule>& rules, std::size_t universe_size,
                            std::size_t count);

struct SyntheticSpec {
  std::size_t rules = 1000;
  std::size_t universe = 10000;
  std::size_t min_len = 1;
  std::size_t max_len = 5;
  double zipf_s = 1.0;
  Weight min_weight = 1;
  Weight max_weight = 10000;
  std::size_t min_consequent = 1;
  std::size_t max_consequent = 3;
  std::size_t frequent_items = 10;
  std::uint64_t seed = 1;
};

RuleDatabase gen_synthetic(const SyntheticSpec& spec);

// Samples from Zipf(s) over [1, n] by inverting a precomputed CDF.
class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double s);
  template <class Rng>
  ItemId operator()(Rng& rng) const {
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return sample(u);
  }
  ItemId sample(double u) const;

 private:
  std::vector<double> cdf_;
};

}  // namespace privrec
