#include "doctest.h"

#include "wmlab/core.hpp"

#include <bit>
#include <set>
#include <unordered_set>

using namespace wmlab;

TEST_CASE("prf_hash is deterministic and separates adjacent digests") {
  RngStream rng(11, 0);
  for (int i = 0; i < 10000; ++i) {
    const WatermarkKey k{rng.next_u64()};
    const std::uint64_t d = rng.next_u64();
    CHECK(prf_hash(k, d) == prf_hash(k, d));
    CHECK(prf_hash(k, d) != prf_hash(k, d ^ 1ULL));
  }
}

TEST_CASE("prf_hash avalanche: single-bit flips change about half the output bits") {
  RngStream rng(12, 0);
  double total = 0.0;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) {
    const WatermarkKey k{rng.next_u64()};
    const std::uint64_t d = rng.next_u64();
    const std::uint64_t flipped = d ^ (1ULL << rng.below(64));
    total += std::popcount(prf_hash(k, d) ^ prf_hash(k, flipped));
  }
  const double mean = total / trials;
  CHECK(mean >= 24.0);
  CHECK(mean <= 40.0);
}

TEST_CASE("context_digest_sum checks length and separates contexts") {
  const TokenSeq one{5};
  CHECK(context_digest_sum(one, 1) == context_digest_sum(TokenSeq{5}, 1));
  CHECK(context_digest_sum(one, 1) == digest_of_sum(5));
  CHECK_THROWS_AS(context_digest_sum(one, 2), Error);
  try {
    context_digest_sum(one, 3);
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }

  RngStream rng(13, 0);
  int collisions = 0;
  for (int i = 0; i < 100000; ++i) {
    TokenSeq a{static_cast<TokenId>(rng.below(4096)), static_cast<TokenId>(rng.below(4096)),
               static_cast<TokenId>(rng.below(4096))};
    TokenSeq b = a;
    const std::size_t pos = rng.below(3);
    b[pos] = static_cast<TokenId>((b[pos] + 1 + rng.below(4095)) % 4096);
    if (context_digest_sum(a, 3) == context_digest_sum(b, 3)) ++collisions;
  }
  CHECK(collisions == 0);
}

TEST_CASE("ordered_digest is order sensitive") {
  const TokenSeq ab{1, 2}, ba{2, 1};
  CHECK(ordered_digest(ab) != ordered_digest(ba));
  CHECK(ordered_digest(ab) == ordered_digest(TokenSeq{1, 2}));
}

TEST_CASE("RngStream reproduces draws bit-exactly per (seed, stream)") {
  RngStream a(42, 3), b(42, 3), c(42, 4);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);
  CHECK(a.counter() == 1000);
}

TEST_CASE("RngStream ranges") {
  RngStream rng(1, 1);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double o = rng.uniform_open();
    CHECK(o > 0.0);
    CHECK(o < 1.0);
    const auto k = rng.below(7);
    CHECK(k < 7);
    seen.insert(k);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("shuffle yields a permutation") {
  std::vector<int> v(100);
  for (int i = 0; i < 100; ++i) v[i] = i;
  RngStream rng(5, 0);
  shuffle(v, rng);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) CHECK(sorted[i] == i);
  bool moved = false;
  for (int i = 0; i < 100; ++i) moved |= v[i] != i;
  CHECK(moved);
}

TEST_CASE("trial seeds are distinct across trials and experiments") {
  std::unordered_set<std::uint64_t> seeds;
  for (std::uint64_t t = 0; t < 1000; ++t) {
    seeds.insert(trial_seed(1, hash_name("power"), t));
    seeds.insert(trial_seed(1, hash_name("fpr-curve"), t));
  }
  CHECK(seeds.size() == 2000);
  CHECK(hash_name("a") != hash_name("b"));
}

TEST_CASE("error codes render") {
  const Error e(ErrorCode::TooFewKept, "x");
  CHECK(std::string(e.what()).find("x") != std::string::npos);
  CHECK(std::string(to_string(ErrorCode::EmptyCorpus)).size() > 0);
}
