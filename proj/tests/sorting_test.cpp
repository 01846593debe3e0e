#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "privrec/sorting.hpp"
#include "support.hpp"

namespace privrec {
namespace {


TEST(ComparisonPairs, SmallNetworks) {
  EXPECT_TRUE(comparison_pairs(1).empty());
  EXPECT_EQ(comparison_pairs(2), (ComparisonPairList{{0, 1}}));
  EXPECT_EQ(comparison_pairs(4), (ComparisonPairList{{0, 1}, {2, 3}, {0, 2}, {1, 3}, {1, 2}}));
}

TEST(ComparisonPairs, SizeMatchesRecursiveBatcher) {
  for (std::size_t n = 1; n <= 130; ++n) EXPECT_EQ(comparison_pairs(n).size(), testing::batcher_size(n)) << n;
  EXPECT_EQ(comparison_pairs(8).size(), 19u);
  EXPECT_EQ(comparison_pairs(16).size(), 63u);
}

TEST(ComparisonPairs, SortsEveryZeroOneInput) {
  for (std::size_t n = 1; n <= 14; ++n) {
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      std::vector<int> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = mask >> i & 1;
      auto perm = apply_sort(n, evaluate_network<int>(v));
      for (std::size_t r = 1; r < n; ++r) ASSERT_GE(v[perm[r - 1]], v[perm[r]]);
    }
  }
}

TEST(ApplySort, Examples) {
  std::vector<int> v{3, 1, 2};
  EXPECT_EQ(apply_sort(3, evaluate_network<int>(v)), (std::vector<std::uint32_t>{0, 2, 1}));
  std::vector<int> sorted{9, 5, 1};
  EXPECT_EQ(apply_sort(3, evaluate_network<int>(sorted)), (std::vector<std::uint32_t>{0, 1, 2}));
  std::vector<int> same(7, 4);
  EXPECT_EQ(apply_sort(7, evaluate_network<int>(same)), (std::vector<std::uint32_t>{0, 1, 2, 3, 4, 5, 6}));
  std::vector<std::int8_t> short_list{1};
  EXPECT_THROW(apply_sort(3, short_list), std::invalid_argument);
}

TEST(ApplySort, StableDescendingOnRandomLists) {
  std::mt19937_64 rng(1);
  for (int iter = 0; iter < 500; ++iter) {
    std::size_t n = 1 + rng() % 80;
    std::vector<int> v(n);
    for (auto& x : v) x = static_cast<int>(rng() % 6);
    EXPECT_EQ(apply_sort(n, evaluate_network<int>(v)), descending_order<int>(v));
  }
}

class PrivateSort : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SeededRandom rng(20, "sort-test");
    keys_ = new DjKeyPair(dj_keygen(512, 1, rng));
  }
  static void TearDownTestSuite() { delete keys_; }
  const DjPublicKey& pk() const { return keys_->pk; }
  const DjSecretKey& sk() const { return keys_->sk; }
  SeededRandom rng_{21, "sort-ops"};
  static DjKeyPair* keys_;
};
DjKeyPair* PrivateSort::keys_ = nullptr;

TEST_F(PrivateSort, RandPairArithmetic) {
  auto c1 = dj_encrypt(pk(), 5, 1, rng_), c2 = dj_encrypt(pk(), 9, 1, rng_);
  auto [e1, e2] = rand_pair(pk(), c1, c2, 100, RandCoefficients{3, 7}, rng_);
  EXPECT_EQ(sk().decrypt(e1), 22);
  EXPECT_EQ(sk().decrypt(e2), 34);
  auto c3 = dj_encrypt(pk(), 9, 1, rng_);
  auto [t1, t2] = rand_pair(pk(), c3, c2, 100, rng_);
  EXPECT_EQ(sk().decrypt(t1), sk().decrypt(t2));
  EXPECT_NE(t1.value, t2.value);
  EXPECT_THROW(rand_pair(pk(), c1, c2, pk().n(), RandCoefficients{2, 0}, rng_), std::range_error);
  EXPECT_THROW(rand_pair(pk(), c1, c2, 10, RandCoefficients{0, 0}, rng_), std::invalid_argument);
}

TEST_F(PrivateSort, RandPreservesOrder) {
  const mpz_class bound = mpz_class(1) << 64;
  for (int i = 0; i < 1000; ++i) {
    mpz_class a = rng_.below(bound + 1), b = rng_.below(bound + 1);
    if (i % 10 == 0) b = a;
    auto k = draw_rand_coefficients(rng_);
    EXPECT_GE(k.a, 1);
    EXPECT_LT(k.a, mpz_class(1) << 32);
    EXPECT_LT(k.b, mpz_class(1) << 32);
    auto [e1, e2] = rand_pair(pk(), dj_encrypt(pk(), a, 1, rng_), dj_encrypt(pk(), b, 1, rng_), bound, k, rng_);
    EXPECT_EQ(sgn(mpz_class(sk().decrypt(e1) - sk().decrypt(e2))), sgn(mpz_class(a - b)));
  }
}

TEST_F(PrivateSort, TwoPartyOrderMatchesPlaintext) {
  std::mt19937_64 rng(3);
  for (int iter = 0; iter < 40; ++iter) {
    std::size_t n = 1 + rng() % 24;
    std::vector<long> v(n);
    for (auto& x : v) x = static_cast<long>(rng() % 5);
    std::vector<Ciphertext> cs;
    for (long x : v) cs.push_back(dj_encrypt(pk(), x, 1, rng_));
    PrivateSortClient client(pk(), cs, 4, rng_);
    auto outcomes = private_sort_respond(sk(), client.request());
    EXPECT_EQ(outcomes.signs.size(), comparison_pairs(n).size());
    // the responder never sees a tie
    for (auto s : outcomes.signs) EXPECT_NE(s, 0);
    EXPECT_EQ(client.finish(outcomes), descending_order<long>(v));
  }
}

TEST_F(PrivateSort, ExampleAndDegenerate) {
  std::vector<Ciphertext> cs;
  for (long x : {3, 1, 2}) cs.push_back(dj_encrypt(pk(), x, 1, rng_));
  PrivateSortClient client(pk(), cs, 3, rng_);
  EXPECT_EQ(client.finish(private_sort_respond(sk(), client.request())), (std::vector<std::uint32_t>{0, 2, 1}));

  std::vector<Ciphertext> one{dj_encrypt(pk(), 7, 1, rng_)};
  PrivateSortClient single(pk(), one, 7, rng_);
  auto out = private_sort_respond(sk(), single.request());
  EXPECT_TRUE(out.signs.empty());
  EXPECT_EQ(single.finish(out), (std::vector<std::uint32_t>{0}));

  SortOutcomes bad{{1, 1}};
  EXPECT_THROW(client.finish(bad), std::invalid_argument);
}

TEST_F(PrivateSort, RandomizersDifferAcrossElements) {
  std::vector<Ciphertext> cs;
  for (int i = 0; i < 6; ++i) cs.push_back(dj_encrypt(pk(), 10, 1, rng_));
  PrivateSortClient client(pk(), cs, 10, rng_);
  std::vector<mpz_class> seen;
  for (const auto& c : client.request().values) seen.push_back(sk().decrypt(c));
  std::sort(seen.begin(), seen.end());
  EXPECT_EQ(std::adjacent_find(seen.begin(), seen.end()), seen.end());
  const auto& k = client.coefficients();
  // every value is a*10 + b + r with 0 <= r < a
  for (const auto& s : seen) {
    EXPECT_GE(s, k.a * 10 + k.b);
    EXPECT_LT(s, k.a * 11 + k.b);
  }
}

TEST_F(PrivateSort, WireRoundTrip) {
  std::vector<Ciphertext> cs;
  for (long x : {4, 8, 1, 1}) cs.push_back(dj_encrypt(pk(), x, 1, rng_));
  PrivateSortClient client(pk(), cs, 8, rng_);
  ByteWriter w;
  write_sort_request(w, pk(), client.request());
  auto b = w.take();
  ByteReader r(b);
  auto req = read_sort_request(r, pk());
  EXPECT_TRUE(r.done());
  EXPECT_EQ(req.values, client.request().values);

  auto out = private_sort_respond(sk(), req);
  ByteWriter wo;
  write_sort_outcomes(wo, out);
  auto ob = wo.take();
  ByteReader ro(ob);
  EXPECT_EQ(read_sort_outcomes(ro).signs, out.signs);
  EXPECT_EQ(client.finish(out), (std::vector<std::uint32_t>{1, 0, 2, 3}));
}

}  // namespace
}  // namespace privrec
