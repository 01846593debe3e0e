#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <gmpxx.h>

#include "privrec/bytes.hpp"
#include "privrec/damgard_jurik.hpp"
#include "privrec/random.hpp"

namespace privrec {

using ComparisonPair = std::pair<std::uint32_t, std::uint32_t>;
using ComparisonPairList = std::vector<ComparisonPair>;

// Batcher odd-even mergesort over the next power of two, keeping only
// comparators inside [0, n). Depends on n alone.
ComparisonPairList comparison_pairs(std::size_t n);

// Compare-exchange rule shared by evaluation and replay: the element at x must
// end up ranked before the one at y. An outcome is sign(v[x] - v[y]) of the
// elements currently at those positions; equal values keep lower original
// index first.
inline bool network_swaps(std::int8_t outcome, std::uint32_t id_x, std::uint32_t id_y) {
  return outcome < 0 || (outcome == 0 && id_x > id_y);
}

template <class T>
std::vector<std::int8_t> evaluate_network(std::span<const T> values) {
  const auto pairs = comparison_pairs(values.size());
  std::vector<std::uint32_t> id(values.size());
  for (std::uint32_t i = 0; i < id.size(); ++i) id[i] = i;
  std::vector<std::int8_t> out;
  out.reserve(pairs.size());
  for (auto [x, y] : pairs) {
    const T& a = values[id[x]];
    const T& b = values[id[y]];
    std::int8_t o = a < b ? -1 : (b < a ? 1 : 0);
    out.push_back(o);
    if (network_swaps(o, id[x], id[y])) std::swap(id[x], id[y]);
  }
  return out;
}

// Replays the network from outcomes only. perm[r] is the original index of
// the element ranked r (descending, ties by original index).
std::vector<std::uint32_t> apply_sort(std::size_t n, std::span<const std::int8_t> outcomes);

// Plaintext reference: stable descending order.
template <class T>
std::vector<std::uint32_t> descending_order(std::span<const T> values) {
  std::vector<std::uint32_t> perm(values.size());
  for (std::uint32_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::stable_sort(perm.begin(), perm.end(), [&](auto a, auto b) { return values[b] < values[a]; });
  return perm;
}

struct RandCoefficients {
  mpz_class a = 1;
  mpz_class b = 0;
};

// a in [1, 2^32), b in [0, 2^32).
RandCoefficients draw_rand_coefficients(RandomSource& rng);

// (a*T1 + b, a*T2 + b) under one shared (a, b). Plaintexts must lie in
// [0, bound]; throws std::range_error if a*bound + b reaches n^s.
std::pair<Ciphertext, Ciphertext> rand_pair(const DjPublicKey& pk, const Ciphertext& c1, const Ciphertext& c2,
                                            const mpz_class& bound, const RandCoefficients& k,
                                            RandomSource& rng);
std::pair<Ciphertext, Ciphertext> rand_pair(const DjPublicKey& pk, const Ciphertext& c1, const Ciphertext& c2,
                                            const mpz_class& bound, RandomSource& rng);

// Two-party sort of ciphertexts under the responder's key. The client shuffles
// the list, maps every value to a*v + b + r_i where the offsets r_i < a are
// distinct and decrease with the original index, so order is preserved, ties
// resolve to the lower index and the responder never sees equal values.
struct SortRequest {
  std::vector<Ciphertext> values;
};

struct SortOutcomes {
  std::vector<std::int8_t> signs;
};

class PrivateSortClient {
 public:
  // values[i] encrypts an integer in [0, bound].
  PrivateSortClient(const DjPublicKey& responder_pk, std::span<const Ciphertext> values, const mpz_class& bound,
                    RandomSource& rng);

  const SortRequest& request() const { return request_; }
  const RandCoefficients& coefficients() const { return coeff_; }
  // Descending permutation of the original indexes. Throws
  // std::invalid_argument on a malformed outcome list.
  std::vector<std::uint32_t> finish(const SortOutcomes& outcomes) const;

 private:
  SortRequest request_;
  RandCoefficients coeff_;
  std::vector<std::uint32_t> shuffled_;  // position -> original index
};

SortOutcomes private_sort_respond(const DjSecretKey& sk, const SortRequest& req);

void write_sort_request(ByteWriter& w, const DjPublicKey& pk, const SortRequest& req);
SortRequest read_sort_request(ByteReader& r, const DjPublicKey& pk);
void write_sort_outcomes(ByteWriter& w, const SortOutcomes& o);
SortOutcomes read_sort_outcomes(ByteReader& r);

}  // namespace privrec
