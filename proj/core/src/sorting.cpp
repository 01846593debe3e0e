#include "privrec/sorting.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace privrec {

ComparisonPairList comparison_pairs(std::size_t n) {
  ComparisonPairList out;
  if (n < 2) return out;
  if (n > (std::size_t{1} << 31)) throw std::length_error("sorting network too large");
  std::size_t N = 1;
  while (N < n) N <<= 1;
  for (std::size_t p = 1; p < N; p <<= 1)
    for (std::size_t k = p; k >= 1; k >>= 1)
      for (std::size_t j = k % p; j + k < N; j += 2 * k)
        for (std::size_t i = 0; i < k && i + j + k < N; ++i)
          if ((i + j) / (2 * p) == (i + j + k) / (2 * p) && i + j + k < n)
            out.emplace_back(static_cast<std::uint32_t>(i + j), static_cast<std::uint32_t>(i + j + k));
  return out;
}

std::vector<std::uint32_t> apply_sort(std::size_t n, std::span<const std::int8_t> outcomes) {
  const auto pairs = comparison_pairs(n);
  if (outcomes.size() != pairs.size()) throw std::invalid_argument("outcome count does not match the network");
  std::vector<std::uint32_t> id(n);
  std::iota(id.begin(), id.end(), 0u);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const std::int8_t o = outcomes[k];
    if (o < -1 || o > 1) throw std::invalid_argument("outcome outside {-1, 0, 1}");
    auto [x, y] = pairs[k];
    if (network_swaps(o, id[x], id[y])) std::swap(id[x], id[y]);
  }
  return id;
}

RandCoefficients draw_rand_coefficients(RandomSource& rng) {
  RandCoefficients k;
  k.a = static_cast<unsigned long>(rng.between(1, (std::uint64_t{1} << 32) - 1));
  k.b = static_cast<unsigned long>(rng.below(std::uint64_t{1} << 32));
  return k;
}

std::pair<Ciphertext, Ciphertext> rand_pair(const DjPublicKey& pk, const Ciphertext& c1, const Ciphertext& c2,
                                            const mpz_class& bound, const RandCoefficients& k,
                                            RandomSource& rng) {
  if (c1.layer != c2.layer) throw std::invalid_argument("layer mismatch");
  if (k.a < 1 || k.b < 0 || bound < 0) throw std::invalid_argument("bad randomization coefficients");
  if (k.a * bound + k.b >= pk.plaintext_modulus(c1.layer))
    throw std::range_error("randomized value would wrap the plaintext space");
  auto one = [&](const Ciphertext& c) {
    return dj_add(pk, dj_scalar_mul(pk, c, k.a), dj_encrypt(pk, k.b, c.layer, rng));
  };
  return {one(c1), one(c2)};
}

std::pair<Ciphertext, Ciphertext> rand_pair(const DjPublicKey& pk, const Ciphertext& c1, const Ciphertext& c2,
                                            const mpz_class& bound, RandomSource& rng) {
  return rand_pair(pk, c1, c2, bound, draw_rand_coefficients(rng), rng);
}

PrivateSortClient::PrivateSortClient(const DjPublicKey& responder_pk, std::span<const Ciphertext> values,
                                     const mpz_class& bound, RandomSource& rng) {
  const std::size_t n = values.size();
  if (bound < 0) throw std::invalid_argument("negative bound");
  do coeff_ = draw_rand_coefficients(rng); while (coeff_.a < n);
  if (n == 0) return;
  const unsigned s = values[0].layer;
  // a * bound + b + r_max with r_max < a
  if (coeff_.a * (bound + 1) + coeff_.b > responder_pk.plaintext_modulus(s))
    throw std::range_error("randomized value would wrap the plaintext space");

  const std::uint64_t a = coeff_.a.get_ui();
  std::set<std::uint64_t> picked;
  while (picked.size() < n) picked.insert(rng.below(a));
  // offsets decrease with the original index
  std::vector<std::uint64_t> offset(picked.rbegin(), picked.rend());

  shuffled_.resize(n);
  std::iota(shuffled_.begin(), shuffled_.end(), 0u);
  std::shuffle(shuffled_.begin(), shuffled_.end(), rng);

  request_.values.reserve(n);
  for (std::uint32_t orig : shuffled_) {
    const Ciphertext& c = values[orig];
    if (c.layer != s) throw std::invalid_argument("layer mismatch");
    mpz_class add = coeff_.b + static_cast<unsigned long>(offset[orig]);
    request_.values.push_back(
        dj_add(responder_pk, dj_scalar_mul(responder_pk, c, coeff_.a), dj_encrypt(responder_pk, add, s, rng)));
  }
}

std::vector<std::uint32_t> PrivateSortClient::finish(const SortOutcomes& outcomes) const {
  auto ranked = apply_sort(shuffled_.size(), outcomes.signs);
  for (auto& r : ranked) r = shuffled_[r];
  return ranked;
}

SortOutcomes private_sort_respond(const DjSecretKey& sk, const SortRequest& req) {
  std::vector<mpz_class> plain;
  plain.reserve(req.values.size());
  for (const auto& c : req.values) plain.push_back(sk.decrypt(c));
  return {evaluate_network<mpz_class>(plain)};
}

void write_sort_request(ByteWriter& w, const DjPublicKey& pk, const SortRequest& req) {
  w.u32(static_cast<std::uint32_t>(req.values.size()));
  for (const auto& c : req.values) write_ciphertext(w, pk, c);
}

SortRequest read_sort_request(ByteReader& r, const DjPublicKey& pk) {
  SortRequest req;
  std::size_t n = r.count(2 + pk.ciphertext_bytes(1));
  req.values.reserve(n);
  for (std::size_t i = 0; i < n; ++i) req.values.push_back(read_ciphertext(r, pk));
  return req;
}

void write_sort_outcomes(ByteWriter& w, const SortOutcomes& o) {
  w.u32(static_cast<std::uint32_t>(o.signs.size()));
  for (auto s : o.signs) w.u8(static_cast<std::uint8_t>(s));
}

SortOutcomes read_sort_outcomes(ByteReader& r) {
  SortOutcomes o;
  std::size_t n = r.count(1);
  o.signs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto v = static_cast<std::int8_t>(r.u8());
    if (v < -1 || v > 1) throw DecodeError("outcome outside {-1, 0, 1}");
    o.signs.push_back(v);
  }
  return o;
}

}  // namespace privrec
