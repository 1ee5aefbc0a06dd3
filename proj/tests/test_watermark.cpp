#include "doctest.h"

#include "wmlab/statkit.hpp"
#include "wmlab/watermark.hpp"

#include <cmath>
#include <set>
#include <sstream>

using namespace wmlab;

namespace {

RedGreenParams params_for(std::size_t v, std::size_t h, double delta = 2.0) {
  RedGreenParams p;
  p.vocab_size = v;
  p.h = h;
  p.delta = delta;
  p.key = WatermarkKey{2024};
  return p;
}

// Practically uniform next-token distribution over `v` ids.
MarkovLM uniform_lm(std::size_t v) {
  Corpus c;
  c.vocab = Vocabulary::synthetic(v);
  c.documents.push_back({1, 2, 3, 4});
  return train_markov(c, 1, 1e12);
}

TokenSeq random_text(std::size_t n, std::size_t v, RngStream &rng) {
  TokenSeq t(n);
  for (auto &x : t) x = static_cast<TokenId>(rng.below(v));
  return t;
}

} // namespace

TEST_CASE("greenlist has exactly floor(gamma |vocab|) members and is deterministic") {
  const auto p = params_for(256, 1);
  const TokenSeq ctx{17};
  const auto g = greenlist(p, ctx);
  CHECK(g.size() == 64);
  CHECK(g == greenlist(p, ctx));
  CHECK(std::set<TokenId>(g.begin(), g.end()).size() == 64);
  int count = 0;
  for (TokenId v = 0; v < 256; ++v) {
    const int c = color_of(p, ctx, v);
    count += c;
    CHECK(c == (std::find(g.begin(), g.end(), v) != g.end() ? 1 : 0));
  }
  CHECK(count == 64);
  CHECK_THROWS_AS(greenlist(p, TokenSeq{1, 2}), Error);
  CHECK_THROWS_AS(color_of(p, TokenSeq{}, 3), Error);
}

TEST_CASE("each token is green with frequency gamma across contexts") {
  // Large vocabulary so that token sums rarely coincide across contexts.
  const auto p = params_for(4096, 3);
  RedGreenWatermark wm(p);
  RngStream rng(31, 0);
  int green0 = 0, green_last = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto ctx = random_text(3, 4096, rng);
    green0 += wm.color_of(ctx, 7);
    green_last += wm.color_of(ctx, 4095);
  }
  CHECK(std::abs(green0 / 10000.0 - 0.25) <= 0.02);
  CHECK(std::abs(green_last / 10000.0 - 0.25) <= 0.02);
}

TEST_CASE("SumHash colors are invariant to context order") {
  const auto p = params_for(12, 2);
  RedGreenWatermark wm(p);
  for (TokenId a = 0; a < 12; ++a)
    for (TokenId b = 0; b < 12; ++b)
      for (TokenId v = 0; v < 12; ++v) CHECK(wm.color_of(TokenSeq{a, b}, v) == wm.color_of(TokenSeq{b, a}, v));
}

TEST_CASE("SelfHash colors differ from SumHash colors") {
  auto p = params_for(512, 2);
  RngStream rng(5, 5);
  const auto text = random_text(2000, 512, rng);
  const auto a = color_trace(p, text);
  p.variant = HashVariant::SelfHash;
  const auto b = color_trace(p, text);
  CHECK(a.x != b.x);
  CHECK(a.keep == b.keep);
}

TEST_CASE("zero delta reproduces unwatermarked sampling exactly") {
  const auto lm = uniform_lm(64);
  const auto p = params_for(64, 1, 0.0);
  RngStream r1(3, 0), r2(3, 0);
  CHECK(generate_watermarked(lm, p, TokenSeq{5}, 300, r1) == generate_plain(lm, TokenSeq{5}, 300, r2));
}

TEST_CASE("green fraction under a uniform LM matches the softmax ratio") {
  const auto lm = uniform_lm(256);
  for (double delta : {2.0, 10.0}) {
    const auto p = params_for(256, 1, delta);
    RedGreenWatermark wm(p);
    RngStream rng(17, static_cast<std::uint64_t>(delta));
    const auto text = wm.generate(lm, TokenSeq{1}, 100000, rng);
    std::size_t green = wm.color_of(TokenSeq{1}, text[0]);
    for (std::size_t t = 1; t < text.size(); ++t) green += wm.color_of(TokenSeq{text[t - 1]}, text[t]);
    const double frac = static_cast<double>(green) / static_cast<double>(text.size());
    const double expected = 0.25 * std::exp(delta) / (0.25 * std::exp(delta) + 0.75);
    if (delta == 2.0) {
      CHECK(expected == doctest::Approx(0.7112).epsilon(1e-3));
      CHECK(std::abs(frac - expected) <= 0.01);
    } else {
      CHECK(frac >= 0.98);
    }
  }
}

TEST_CASE("green fraction is nondecreasing in delta") {
  const auto lm = uniform_lm(128);
  double prev = -1.0;
  for (double delta : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    const auto p = params_for(128, 2, delta);
    RedGreenWatermark wm(p);
    std::size_t green = 0, n = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      RngStream rng(100 + s, 0);
      TokenSeq text{1, 2};
      const auto gen = wm.generate(lm, text, 500, rng);
      text.insert(text.end(), gen.begin(), gen.end());
      const auto tr = wm.trace(text);
      for (std::size_t t = 2; t < text.size(); ++t, ++n) green += tr.x[t] > 0.5;
    }
    const double frac = static_cast<double>(green) / static_cast<double>(n);
    CHECK(frac >= prev);
    prev = frac;
  }
}

TEST_CASE("generation preconditions") {
  const auto lm = uniform_lm(64);
  RngStream rng(1, 1);
  CHECK_THROWS_AS(generate_watermarked(lm, params_for(64, 2), TokenSeq{1}, 10, rng), Error);
  CHECK_THROWS_AS(generate_watermarked(lm, params_for(64, 1), TokenSeq{1}, 0, rng), Error);
  CHECK_THROWS_AS(generate_watermarked(lm, params_for(128, 1), TokenSeq{1}, 5, rng), Error);
}

TEST_CASE("color_trace dedup keeps first occurrence of each context") {
  // a b a b a b with h = 1: only (a -> b) at t=1 and (b -> a) at t=2 survive.
  const TokenSeq text{1, 2, 1, 2, 1, 2};
  const auto tr = color_trace(params_for(16, 1), text);
  CHECK(tr.keep == std::vector<std::uint8_t>{0, 1, 1, 0, 0, 0});
  CHECK(tr.kept() == 2);
  CHECK(tr.size() == 6);

  const TokenSeq distinct{1, 2, 3, 4, 5, 6, 7};
  const auto all = color_trace(params_for(16, 2), distinct);
  CHECK(all.keep == std::vector<std::uint8_t>{0, 0, 1, 1, 1, 1, 1});

  auto p = params_for(16, 1);
  p.dedup = DedupMode::HPlus1Gram;
  CHECK(color_trace(p, text).keep == std::vector<std::uint8_t>{0, 1, 1, 0, 0, 0});
  p.dedup = DedupMode::None;
  CHECK(color_trace(p, text).kept() == 5);

  CHECK_THROWS_AS(color_trace(params_for(16, 3), TokenSeq{1, 2, 3}), Error);
}

TEST_CASE("hplus1gram dedup differs from hgram dedup") {
  const TokenSeq text{1, 2, 1, 3, 1, 2};
  auto p = params_for(16, 1);
  CHECK(color_trace(p, text).keep == std::vector<std::uint8_t>{0, 1, 1, 0, 1, 0});
  p.dedup = DedupMode::HPlus1Gram;
  CHECK(color_trace(p, text).keep == std::vector<std::uint8_t>{0, 1, 1, 1, 1, 0});
}

TEST_CASE("trace depends only on the tokens") {
  const auto lm = uniform_lm(64);
  const auto p = params_for(64, 1);
  RngStream rng(2, 2);
  const auto text = generate_watermarked(lm, p, TokenSeq{9}, 200, rng);
  const auto a = color_trace(p, text);
  const auto b = color_trace(p, text);
  CHECK(a.x == b.x);
  CHECK(a.keep == b.keep);
  const auto ra = detect_z(p, text), rb = detect_z(p, text);
  CHECK(ra.z == rb.z);
}

TEST_CASE("detector arithmetic") {
  CHECK(z_from_counts(40, 100, 0.25) == doctest::Approx(3.4641016151377544).epsilon(1e-12));
  CHECK(z_from_counts(47, 100, 0.25) == doctest::Approx(5.080682368868707).epsilon(1e-12));
  CHECK(z_from_counts(25, 100, 0.25) == 0.0);
  CHECK_THROWS_AS(z_from_counts(0, 0, 0.25), Error);

  WatermarkTrace tr;
  tr.x.assign(101, 0.0);
  tr.keep.assign(101, 1);
  tr.keep[0] = 0;
  for (int i = 1; i <= 40; ++i) tr.x[i] = 1.0;
  RedGreenWatermark wm(params_for(64, 1));
  const auto r = wm.detect(tr);
  CHECK(r.n_kept == 100);
  CHECK(r.n_green == 40);
  CHECK(r.z == doctest::Approx(3.4641).epsilon(1e-4));
  CHECK_FALSE(r.watermarked);
  for (int i = 41; i <= 47; ++i) tr.x[i] = 1.0;
  CHECK(wm.detect(tr).watermarked);
}

TEST_CASE("watermarked text is detected and plain text is not") {
  const auto lm = uniform_lm(256);
  const auto p = params_for(256, 1, 2.0);
  RedGreenWatermark wm(p);
  RngStream rng(6, 0);
  const auto text = wm.generate(lm, TokenSeq{3}, 400, rng);
  CHECK(wm.detect(text).z > 4.0);
  const auto plain = generate_plain(lm, TokenSeq{3}, 400, rng);
  CHECK(wm.detect(plain).z < 4.0);
}

TEST_CASE("detector z over unwatermarked text is standard normal") {
  const auto p = params_for(512, 2);
  RedGreenWatermark wm(p);
  std::vector<double> zs;
  for (int i = 0; i < 2000; ++i) {
    RngStream rng(5000 + i, 0);
    const auto text = random_text(502, 512, rng);
    zs.push_back(wm.detect(text).z);
  }
  CHECK(stat::ks_test_std_normal(zs).p_value >= 0.01);
}

TEST_CASE("parameter validation and names") {
  auto p = params_for(64, 1);
  p.gamma = 1.0;
  CHECK_THROWS_AS(RedGreenWatermark{p}, Error);
  p = params_for(64, 0);
  CHECK_THROWS_AS(RedGreenWatermark{p}, Error);
  p = params_for(3, 1);
  p.gamma = 0.25;
  CHECK_THROWS_AS(RedGreenWatermark{p}, Error);
  CHECK(parse_hash_variant(to_string(HashVariant::SelfHash)) == HashVariant::SelfHash);
  CHECK(parse_dedup_mode(to_string(DedupMode::HPlus1Gram)) == DedupMode::HPlus1Gram);
  CHECK_THROWS_AS(parse_dedup_mode("bogus"), Error);
}
