#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include <gmpxx.h>

#include "privrec/bytes.hpp"
#include "privrec/exact_index.hpp"
#include "privrec/rule_io.hpp"
#include "support.hpp"

namespace privrec {
namespace {

mpz_class to_mpz(u128 v) {
  mpz_class hi(static_cast<unsigned long>(static_cast<std::uint64_t>(v >> 64)));
  mpz_class lo(static_cast<unsigned long>(static_cast<std::uint64_t>(v)));
  return (hi << 64) + lo;
}

// From-scratch recomputation of L * h_r(x) + h_s(x) with GMP.
std::uint64_t oracle_index(const TwoLevelHashing& h, const std::string& key) {
  const mpz_class p = (mpz_class(1) << 127) - 1;
  mpz_class x = 0;
  for (unsigned char c : h.prefix + key) x = (x * 256 + c) % p;
  auto apply = [&](const UniversalHash& u) {
    mpz_class y = (to_mpz(u.a) * x + to_mpz(u.b)) % p;
    y %= static_cast<unsigned long>(u.range);
    return y.get_ui();
  };
  return h.L * apply(h.h_r) + apply(h.h_s);
}

RuleDatabase three_rules() {
  return RuleDatabase({{1, {1}, {9}, 5}, {2, {1, 2}, {8}, 2}, {3, {4}, {7}, 9}}, 10);
}

TEST(EncodeItemset, Canonical) {
  EXPECT_EQ(encode_itemset(ItemSet::from_unsorted({3, 1, 2})), "1,2,3");
  EXPECT_EQ(encode_itemset({7}), "7");
  EXPECT_EQ(encode_itemset({}), "");
  EXPECT_NE(encode_itemset({1, 23}), encode_itemset({12, 3}));
}

TEST(Subsets, OrderAndCounts) {
  EXPECT_EQ(subsets_up_to({1, 2}, 2), (std::vector<ItemSet>{{1}, {2}, {1, 2}}));
  EXPECT_EQ(subsets_up_to({1, 2, 3}, 1), (std::vector<ItemSet>{{1}, {2}, {3}}));
  EXPECT_EQ(subset_count(10, 3), 175u);
  EXPECT_EQ(subset_count(5, 3), 25u);
  EXPECT_EQ(subset_count(5, 5), 31u);

  Transaction t{2, 4, 6, 8, 10, 12};
  auto all = subsets_up_to(t, 4);
  EXPECT_EQ(all.size(), subset_count(6, 4));
  std::set<ItemSet> uniq(all.begin(), all.end());
  EXPECT_EQ(uniq.size(), all.size());
  EXPECT_TRUE(std::is_sorted(all.begin(), all.end(), [](const ItemSet& a, const ItemSet& b) {
    return a.size() != b.size() ? a.size() < b.size() : a < b;
  }));
}

TEST(IndexOf, Arithmetic) {
  TwoLevelHashing h;
  h.L = 32;
  h.h_r = {1, 3, 32};
  h.h_s = {1, 7, 32};
  EXPECT_EQ(h.index_of_reduced(0), 103u);
  h.h_r.b = 0;
  h.h_s.b = 0;
  EXPECT_EQ(h.index_of_reduced(0), 0u);
  EXPECT_EQ(h.virtual_size(), 32u * 32 + 32);
}

TEST(IndexOf, MatchesScalarRecomputation) {
  SyntheticSpec spec;
  spec.rules = 50;
  spec.seed = 4;
  auto idx = ExactIndex::prep(gen_synthetic(spec), {.seed = 17});
  const auto& h = idx.hashing();
  EXPECT_EQ(oracle_index(h, "1,2,3"), 422539u);
  EXPECT_EQ(idx.index_of("1,2,3"), 422539u);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 500; ++i) {
    auto key = encode_itemset(testing::random_itemset(rng, 1000, 1, 6));
    EXPECT_EQ(idx.index_of(key), oracle_index(h, key));
  }
}

TEST(Mersenne, ModularHelpers) {
  EXPECT_EQ(mulmod_m127(kMersenne127 - 1, 2), kMersenne127 - 2);
  EXPECT_EQ(addmod_m127(kMersenne127 - 1, 1), 0u);
  EXPECT_EQ(reduce_key(std::string_view("\x01\x00", 2)), 256u);
}

TEST(Prep, SingleRule) {
  RuleDatabase db({{1, {5}, {6}, 3}}, 10);
  auto idx = ExactIndex::prep(db, {});
  EXPECT_EQ(idx.hashing().L, 16u);
  EXPECT_EQ(idx.table().size(), 1u);
  auto rec = idx.fetch("5");
  ASSERT_TRUE(rec);
  EXPECT_EQ(rec->rule_id, 1u);
  EXPECT_EQ(rec->consequent, (ItemSet{6}));
  EXPECT_EQ(rec->weight, 3);
}

TEST(Prep, InvariantsOverSeeds) {
  SyntheticSpec spec;
  spec.rules = 100;
  spec.seed = 2;
  auto db = gen_synthetic(spec);
  std::vector<unsigned> r_draws, s_draws;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto idx = ExactIndex::prep(db, {.seed = seed});
    std::set<std::uint64_t> slots;
    for (const auto& e : idx.table().entries()) slots.insert(e.slot);
    EXPECT_EQ(slots.size(), db.size());
    EXPECT_LE(idx.stats().sum_squares, 4 * db.size());
    r_draws.push_back(idx.stats().first_level_draws);
    s_draws.push_back(idx.stats().second_level_draws);
  }
  std::nth_element(r_draws.begin(), r_draws.begin() + 50, r_draws.end());
  std::nth_element(s_draws.begin(), s_draws.begin() + 50, s_draws.end());
  EXPECT_LE(r_draws[50] + s_draws[50], 4u);
}

TEST(Prep, RejectsDuplicateKeysAndBadConfig) {
  std::vector<std::uint64_t> slots;
  BuildStats st;
  EXPECT_THROW(build_two_level_hashing({"1,2", "1,2"}, {}, slots, st), TableBuildError);
  auto empty = build_two_level_hashing({}, {}, slots, st);
  EXPECT_TRUE(slots.empty());
  EXPECT_EQ(empty.L, 16u);
  EXPECT_LT(empty.index_of("1"), empty.virtual_size());
  EXPECT_THROW(ExactIndex::prep(three_rules(), {.fingerprint_bits = 32}), std::invalid_argument);
  EXPECT_THROW(ExactIndex::prep(three_rules(), {.prefix_len = 8}), std::invalid_argument);
}

TEST(Fetch, StoredAbsentAndCollision) {
  RuleDatabase db({{1, {5}, {6}, 3}}, 10);
  auto idx = ExactIndex::prep(db, {.seed = 3});
  EXPECT_TRUE(idx.fetch("5"));
  const auto stored = idx.index_of("5");

  // an unstored key landing on an empty slot, and one colliding with the stored slot
  std::optional<std::string> empty_key, colliding;
  for (int i = 0; i < 2000000 && !(empty_key && colliding); ++i) {
    auto key = "x" + std::to_string(i);
    auto slot = idx.index_of(key);
    if (slot == stored)
      colliding = key;
    else if (!empty_key)
      empty_key = key;
  }
  ASSERT_TRUE(empty_key);
  ASSERT_TRUE(colliding) << "no colliding key found";
  EXPECT_FALSE(idx.table().at_slot(idx.index_of(*empty_key)));
  EXPECT_FALSE(idx.fetch(*empty_key));
  EXPECT_TRUE(idx.table().at_slot(idx.index_of(*colliding)));
  EXPECT_FALSE(idx.fetch(*colliding));
}

TEST(Fingerprint, Widths) {
  Fingerprinter sha(FingerprintAlgorithm::Sha256, 64);
  EXPECT_EQ(sha("abc").size(), 8u);
  // SHA-256("abc") starts ba7816bf8f01cfea
  EXPECT_EQ(sha("abc"), (std::vector<std::uint8_t>{0xba, 0x78, 0x16, 0xbf, 0x8f, 0x01, 0xcf, 0xea}));
  Fingerprinter md5(FingerprintAlgorithm::Md5, 128);
  // MD5("abc") = 900150983cd24fb0...
  EXPECT_EQ(md5("abc")[0], 0x90);
  EXPECT_EQ(md5("abc").size(), 16u);
}

TEST(ExactQuery, ThreeRuleExample) {
  auto db = three_rules();
  auto idx = ExactIndex::prep(db, {});
  for (const Criterion& c : {Criterion{AllAssoc{0, 10}}, Criterion{TopAssoc{1, 3, 1, OrderingFunction::weight_only()}}})
    EXPECT_EQ(exact_query({1, 2}, idx, c), select_rules(db, {1, 2}, c));
}

TEST(ExactQuery, FetchCounts) {
  SyntheticSpec spec;
  spec.rules = 200;
  auto idx = ExactIndex::prep(gen_synthetic(spec), {});
  Transaction t20;
  std::vector<ItemId> v;
  for (ItemId i = 1; i <= 20; ++i) v.push_back(i);
  t20 = ItemSet::from_sorted(v);
  ExactQueryStats st;
  exact_query(t20, idx, AllAssoc{0, 1}, kDefaultSubsetCap, &st);
  EXPECT_EQ(st.fetches, 20u);
  st = {};
  exact_query({1, 2, 3, 4, 5}, idx, AllAssoc{0, 3}, kDefaultSubsetCap, &st);
  EXPECT_EQ(st.fetches, 25u);

  v.clear();
  for (ItemId i = 1; i <= 26; ++i) v.push_back(i);
  EXPECT_THROW(exact_query(ItemSet::from_sorted(v), idx, AllAssoc{0, 1}), std::invalid_argument);
}

TEST(ExactQuery, MatchesSelectRules) {
  std::mt19937_64 rng(8);
  for (int iter = 0; iter < 100; ++iter) {
    auto db = testing::random_db(rng, {});
    auto idx = ExactIndex::prep(db, {.seed = static_cast<std::uint64_t>(iter + 1)});
    auto t = testing::random_itemset(rng, db.universe_size(), 0, 8);
    auto f = OrderingFunction{static_cast<OrderingKind>(iter % 4), {}, {}};
    for (const Criterion& c : {Criterion{TopAssoc{3, 10, 2, f}}, Criterion{Top1Assoc{f}}, Criterion{TopKAssoc{4, f}},
                               Criterion{AllAssoc{5, 3}}, Criterion{AnyAssoc{2, 0, 4}}})
      EXPECT_EQ(exact_query(t, idx, c), select_rules(db, t, c));
  }
}

TEST(ExactIndex, SaveLoadRoundTrip) {
  SyntheticSpec spec;
  spec.rules = 300;
  auto db = gen_synthetic(spec);
  auto idx = ExactIndex::prep(db, {.seed = 5});
  std::stringstream buf;
  idx.save(buf);
  auto back = ExactIndex::load(buf);
  EXPECT_EQ(back.rule_count(), idx.rule_count());
  for (const auto& r : db.rules()) {
    auto key = encode_itemset(r.antecedent);
    ASSERT_EQ(back.index_of(key), idx.index_of(key));
    auto rec = back.fetch(key);
    ASSERT_TRUE(rec);
    EXPECT_EQ(rec->rule_id, r.id);
    EXPECT_EQ(rec->consequent, r.consequent);
  }
  std::stringstream junk("not an index");
  EXPECT_ANY_THROW(ExactIndex::load(junk));
}

TEST(Hashing, WireValidation) {
  auto idx = ExactIndex::prep(three_rules(), {});
  ByteWriter w;
  write_hashing(w, idx.hashing());
  auto bytes = w.take();
  ByteReader r(bytes);
  auto back = read_hashing(r);
  EXPECT_EQ(back.index_of("1,2"), idx.index_of("1,2"));
  EXPECT_EQ(back.prefix, idx.hashing().prefix);

  auto cut = Bytes(bytes.begin(), bytes.end() - 3);
  ByteReader rc(cut);
  EXPECT_THROW(read_hashing(rc), DecodeError);
}

}  // namespace
}  // namespace privrec
