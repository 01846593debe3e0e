#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <gmpxx.h>

#include "privrec/bytes.hpp"
#include "privrec/damgard_jurik.hpp"
#include "privrec/random.hpp"

namespace privrec {

// Mixed-radix layout of an OT database: index i has digit j equal to
// (i / (dims[0] * ... * dims[j-1])) % dims[j], digit 0 varying fastest.
struct OtShape {
  std::uint64_t n = 0;
  std::vector<std::uint64_t> dims;

  unsigned depth() const { return static_cast<unsigned>(dims.size()); }
  // Product of dims, saturating at UINT64_MAX.
  std::uint64_t capacity() const;
  std::uint64_t query_size() const;
  std::vector<std::uint64_t> digits(std::uint64_t i) const;

  friend bool operator==(const OtShape&, const OtShape&) = default;
};

// Near-equal dims with product >= n.
OtShape ot_shape(std::uint64_t n, unsigned d);
// Dims minimizing sum(dims[j] * layer_cost[j]) subject to product >= n.
OtShape ot_shape_weighted(std::uint64_t n, std::span<const double> layer_cost);

// sel[j] holds dims[j] layer-(j+1) ciphertexts encrypting a unit vector.
struct OtQuery {
  std::vector<std::vector<Ciphertext>> sel;
};

// One layer-d ciphertext per block.
struct OtReply {
  std::vector<Ciphertext> blocks;
};

OtQuery ot_query(const DjEncryptor& enc, const OtShape& shape, std::uint64_t i, RandomSource& rng);

// Sparse database entry; absent indexes hold the all-zero block.
struct OtEntry {
  std::uint64_t index = 0;
  std::vector<mpz_class> blocks;
};

// Server side folding state for one client key. Thread-compatible; replies
// for different queries may run concurrently on separate instances.
class OtResponder {
 public:
  OtResponder(DjPublicKey pk, OtShape shape, std::size_t block_count);

  const DjPublicKey& public_key() const { return pk_; }
  const OtShape& shape() const { return shape_; }
  std::size_t block_count() const { return block_count_; }

  // entries sorted by index, every index < shape.n, every block < n.
  // Throws std::invalid_argument on malformed queries or data.
  OtReply reply(const OtQuery& q, std::span<const OtEntry> entries, RandomSource& rng) const;

  void check_query(const OtQuery& q) const;

 private:
  mpz_class fold(const OtQuery& q, std::span<const OtEntry> entries, std::size_t block,
                 std::span<const mpz_class> sel_products, RandomSource& rng) const;

  DjPublicKey pk_;
  OtShape shape_;
  std::size_t block_count_;
  std::vector<std::shared_ptr<const MontgomeryContext>> ctx_;  // index s: modulus n^(s+1)
};

// Dense convenience wrapper: v[i] single-block values.
OtReply ot_reply(const DjPublicKey& pk, const OtShape& shape, const OtQuery& q, std::span<const mpz_class> v,
                 RandomSource& rng);

// Peels the d layers of every block.
std::vector<mpz_class> ot_extract(const DjSecretKey& sk, const OtReply& reply);

// Record bytes to `count` blocks of block_bytes each: block = 0x01 || chunk,
// chunk of block_bytes - 1 bytes; unused blocks are zero. Throws
// std::length_error when the record does not fit.
std::vector<mpz_class> encode_blocks(std::span<const std::uint8_t> data, std::size_t block_bytes,
                                     std::size_t count);
// nullopt for the all-zero (absent) record or any malformed block.
std::optional<Bytes> decode_blocks(std::span<const mpz_class> blocks, std::size_t block_bytes);
std::size_t blocks_needed(std::size_t data_len, std::size_t block_bytes);

void write_ot_query(ByteWriter& w, const DjPublicKey& pk, const OtQuery& q);
OtQuery read_ot_query(ByteReader& r, const DjPublicKey& pk, const OtShape& shape);
void write_ot_reply(ByteWriter& w, const DjPublicKey& pk, const OtReply& rep);
OtReply read_ot_reply(ByteReader& r, const DjPublicKey& pk, unsigned depth, std::size_t block_count);

}  // namespace privrec
