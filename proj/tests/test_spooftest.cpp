#include "doctest.h"

#include "wmlab/altschemes.hpp"
#include "wmlab/spooftest.hpp"
#include "wmlab/statkit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

using namespace wmlab;

namespace {

Corpus corpus_of(const std::string &text) {
  std::istringstream in(text);
  return parse_corpus(in);
}

Sample sample_of(std::vector<double> x, std::vector<double> y) {
  Sample s;
  s.keep.assign(x.size(), 1);
  s.x = std::move(x);
  s.y = std::move(y);
  return s;
}

// Brute-force unordered-gram count: compare sorted windows token by token.
std::uint64_t naive_gram_count(const std::vector<TokenSeq> &docs, TokenSeq gram) {
  std::sort(gram.begin(), gram.end());
  std::uint64_t n = 0;
  for (const auto &d : docs)
    for (std::size_t t = 0; t + gram.size() <= d.size(); ++t) {
      TokenSeq w(d.begin() + static_cast<std::ptrdiff_t>(t), d.begin() + static_cast<std::ptrdiff_t>(t + gram.size()));
      std::sort(w.begin(), w.end());
      n += w == gram;
    }
  return n;
}

} // namespace

TEST_CASE("frequency tables") {
  const auto c = corpus_of("a b\n");
  const auto a = *c.vocab.find("a"), b = *c.vocab.find("b");
  const auto ng = build_frequency_table(c, FrequencyKind::UnorderedNgram, 1);
  CHECK(ng.count_of(unordered_key(TokenSeq{a, b})) == 1);
  CHECK(unordered_key(TokenSeq{a, b}) == unordered_key(TokenSeq{b, a}));

  const auto u = build_frequency_table(corpus_of("a a b\n"), FrequencyKind::Unigram, 1);
  const auto c2 = corpus_of("a a b\n");
  CHECK(u.frequency(*c2.vocab.find("a")) == doctest::Approx(2.0 / 3.0));
  CHECK(u.frequency(*c2.vocab.find("b")) == doctest::Approx(1.0 / 3.0));
  CHECK(u.frequency(999) == 0.0);

  CHECK_THROWS_AS(build_frequency_table(std::vector<TokenSeq>{}, FrequencyKind::Unigram, 1), Error);
  CHECK_THROWS_AS(build_frequency_table(std::vector<TokenSeq>{{1}}, FrequencyKind::UnorderedNgram, 1), Error);
}

TEST_CASE("frequency tables match a naive scan on 100 random corpora") {
  RngStream rng(61, 0);
  for (int c = 0; c < 100; ++c) {
    const std::size_t h = 1 + rng.below(3);
    std::vector<TokenSeq> docs(1 + rng.below(4));
    for (auto &d : docs) {
      d.resize(h + 1 + rng.below(30));
      for (auto &t : d) t = static_cast<TokenId>(rng.below(5));
    }
    const auto ng = build_frequency_table(docs, FrequencyKind::UnorderedNgram, h);
    const auto uni = build_frequency_table(docs, FrequencyKind::Unigram, h);
    for (int q = 0; q < 20; ++q) {
      TokenSeq gram(h + 1);
      for (auto &t : gram) t = static_cast<TokenId>(rng.below(5));
      CHECK(ng.count_of(unordered_key(gram)) == naive_gram_count(docs, gram));
      CHECK(uni.count_of(gram[0]) == naive_gram_count(docs, TokenSeq{gram[0]}));
    }
  }
}

TEST_CASE("ngram_score against a hand-counted reference") {
  // Reference docs: [1 2 3] [2 1 4] [3 3 1]; unordered bigrams:
  // {1,2}:2 {2,3}:1 {1,4}:1 {3,3}:1 {1,3}:1
  const std::vector<TokenSeq> ref{{1, 2, 3}, {2, 1, 4}, {3, 3, 1}};
  const auto table = build_frequency_table(ref, FrequencyKind::UnorderedNgram, 1);
  const TokenSeq text{2, 1, 3, 5, 4};
  const auto y = ngram_score(table, text, 1);
  CHECK(y.y == std::vector<double>{0, 2, 1, 0, 0});
  for (std::size_t t = 1; t < text.size(); ++t)
    CHECK(y.y[t] == static_cast<double>(naive_gram_count(ref, TokenSeq{text[t - 1], text[t]})));
  CHECK_THROWS_AS(ngram_score(table, text, 2), Error);
  const auto uni = build_frequency_table(ref, FrequencyKind::Unigram, 1);
  CHECK_THROWS_AS(ngram_score(uni, text, 1), Error);
}

TEST_CASE("unigram_score reads the token h positions back") {
  const std::vector<TokenSeq> ref{{1, 1, 2, 3}};
  const auto table = build_frequency_table(ref, FrequencyKind::Unigram, 1);
  const TokenSeq text{1, 2, 7, 3, 1};
  const auto y1 = unigram_score(table, text, 1);
  CHECK(y1.y == std::vector<double>{0, 0.5, 0.25, 0.0, 0.25});
  const auto y2 = unigram_score(table, text, 2);
  CHECK(y2.y == std::vector<double>{0, 0, 0.5, 0.25, 0.0});
  // Shifting the text by one shifts the score by one.
  const TokenSeq shifted{9, 1, 2, 7, 3, 1};
  const auto ys = unigram_score(table, shifted, 1);
  for (std::size_t t = 1; t < text.size(); ++t) CHECK(ys.y[t + 1] == y1.y[t]);
}

TEST_CASE("statistic_S basics") {
  std::vector<double> x, y;
  for (int i = 0; i < 30; ++i) x.push_back(i % 3), y.push_back(std::exp(i % 3));
  CHECK(statistic_S(sample_of(x, y)) == doctest::Approx(std::atanh(stat::kRhoClamp)));
  CHECK(statistic_S(sample_of({1, 0, 1, 0}, {4, 1, 3, 2}), 4) == doctest::Approx(1.4436354751788103).epsilon(1e-12));
  CHECK_THROWS_AS(statistic_S(sample_of({1, 0, 1, 0}, {4, 1, 3, 2})), Error);

  try {
    statistic_S(sample_of(std::vector<double>(30, 1.0), y));
    CHECK(false);
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::ConstantColors);
  }
  try {
    statistic_S(sample_of(x, std::vector<double>(30, 2.0)));
    CHECK(false);
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::ConstantScores);
  }
  auto s = sample_of(x, y);
  std::fill(s.keep.begin() + 10, s.keep.end(), 0);
  try {
    statistic_S(s);
    CHECK(false);
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::TooFewKept);
  }
}

TEST_CASE("statistic_S invariances") {
  RngStream rng(5, 0);
  std::vector<double> x(500), y(500);
  for (std::size_t i = 0; i < 500; ++i) {
    x[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
    y[i] = static_cast<double>(rng.below(20)) + 0.1 * x[i] * rng.below(3);
  }
  const double base = statistic_S(sample_of(x, y));
  for (auto g : {+[](double v) { return std::log1p(v); }, +[](double v) { return 3.0 * v - 7.0; },
                 +[](double v) { return v * v * v; }}) {
    std::vector<double> gy(y.size());
    std::transform(y.begin(), y.end(), gy.begin(), g);
    CHECK(statistic_S(sample_of(x, gy)) == base);
  }
  CHECK(statistic_S(sample_of(y, x)) == doctest::Approx(base).epsilon(1e-14));
}

TEST_CASE("statistic_S under independence is near zero") {
  RngStream rng(6, 0);
  std::vector<double> x(10000), y(10000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform() < 0.25, y[i] = rng.uniform();
  CHECK(std::abs(statistic_S(sample_of(x, y))) < 0.05);
}

TEST_CASE("standard_test arithmetic") {
  auto r = standard_test(sample_of({1, 0, 1, 0, 1, 0, 1, 0, 1, 1, 0, 0, 1, 0, 1, 0, 1, 0, 0, 1},
                                   {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20}));
  CHECK(r.z == doctest::Approx(r.S / std::sqrt(1.06 / 17.0)));
  CHECK(r.p >= 0.0);
  CHECK(r.p <= 1.0);
  CHECK(p_value(0.0, Sidedness::TwoSided) == 1.0);
  CHECK(p_value(1.0, Sidedness::TwoSided) == doctest::Approx(0.31731050786291415).epsilon(1e-12));
  CHECK(p_value(0.1 / std::sqrt(1.06 / 106.0), Sidedness::TwoSided) == doctest::Approx(0.3173105).epsilon(1e-6));
  CHECK(p_value(1.0, Sidedness::OneSided) == doctest::Approx(0.15865525393145707).epsilon(1e-12));
}

TEST_CASE("standard_test is calibrated under constructed independence") {
  std::vector<double> zs, ps;
  for (int trial = 0; trial < 5000; ++trial) {
    RngStream rng(10000 + trial, 0);
    Sample s;
    s.x.resize(1000), s.y.resize(1000), s.keep.assign(1000, 1);
    for (std::size_t i = 0; i < 1000; ++i) s.x[i] = rng.uniform() < 0.25, s.y[i] = rng.uniform();
    const auto r = standard_test(s);
    zs.push_back(r.z);
    ps.push_back(r.p);
  }
  CHECK(stat::ks_test_std_normal(zs).p_value >= 0.01);
  CHECK(stat::ks_test_uniform(ps).p_value >= 0.01);
}

TEST_CASE("reprompt_test arithmetic") {
  Sample a = sample_of({}, {});
  // Equal statistics give z = 0.
  std::vector<double> x, y;
  for (int i = 0; i < 50; ++i) x.push_back(i % 2), y.push_back((i * 7) % 11);
  const auto same = reprompt_test(sample_of(x, y), sample_of(x, y));
  CHECK(same.z == 0.0);
  CHECK(same.p == 1.0);
  // z = 0.2 / sqrt(2 * 1.06 / 212) = 2.0
  CHECK(0.2 / std::sqrt(2 * 1.06 / 212.0) == doctest::Approx(2.0));
  CHECK(p_value(2.0, Sidedness::TwoSided) == doctest::Approx(0.04550026389635839).epsilon(1e-12));
  const auto r = reprompt_test(sample_of(x, y), sample_of(y, x));
  CHECK(r.n_kept == 50);
  CHECK(r.n_kept_regen == 50);
  Sample k = sample_of(x, y);
  k.scheme = Scheme::Aar;
  CHECK_THROWS_AS(reprompt_test(sample_of(x, y), k), Error);
}

TEST_CASE("concatenate keeps per-text masks and rejects mixed schemes") {
  const auto s1 = sample_of({1, 0, 1}, {1, 2, 3});
  auto s2 = sample_of({0, 1}, {5, 4});
  s2.keep[0] = 0;
  const auto one = concatenate({s1});
  CHECK(one.x == s1.x);
  CHECK(one.keep == s1.keep);
  const auto both = concatenate({s1, s2});
  CHECK(both.kept() == s1.kept() + s2.kept());
  CHECK(both.x == std::vector<double>{1, 0, 1, 0, 1});
  s2.scheme = Scheme::Kth;
  CHECK_THROWS_AS(concatenate({s1, s2}), Error);
  CHECK(slice(s1, 1).x == std::vector<double>{0, 1});
}

TEST_CASE("text-level reprompting: identical regeneration, short segments, csv") {
  SyntheticLanguage lang(SyntheticLanguageConfig{256, 1.0, 64, 0.02, 8});
  RngStream rng(8, 0);
  const auto human = lang.sample_corpus(200, 200, rng);
  const auto lm = train_markov(human, 2, 0.01);
  RedGreenParams p;
  p.vocab_size = 256;
  const RedGreenWatermark wm(p);
  const auto table = build_frequency_table(human, FrequencyKind::UnorderedNgram, 1);
  const ScoreFn score = [&](const TokenSeq &t) { return ngram_score(table, t, 1); };
  const TraceFn trace = [&](const TokenSeq &t, std::size_t) { return wm.trace(t); };

  std::vector<TokenSeq> originals, regen;
  for (int i = 0; i < 3; ++i) {
    originals.push_back(wm.generate(lm, human.documents[i], 300, rng));
    regen.emplace_back(originals.back().begin() + 25, originals.back().end());
  }
  const auto r = reprompt_test(originals, regen, 25, score, trace);
  CHECK(r.z == 0.0);
  CHECK(r.c == 25);
  CHECK(r.segment_S.size() == 3);
  CHECK_THROWS_AS(reprompt_test(originals, regen, 300, score, trace), Error);
  CHECK_THROWS_AS(reprompt_test(originals, {regen[0]}, 25, score, trace), Error);

  const auto st = standard_test(originals, score, trace);
  CHECK(st.method == TestMethod::Standard);
  CHECK(TestReport::csv_header() == "method,scheme,h,T,n_kept,S,z,p,seed,spoofer");
  const auto row = st.csv_row();
  CHECK(std::count(row.begin(), row.end(), ',') == 9);
  CHECK(row.rfind("standard,redgreen,", 0) == 0);
}

TEST_CASE("reprompting null is standard normal on genuine watermarked text") {
  SyntheticLanguage lang(SyntheticLanguageConfig{512, 1.0, 64, 0.02, 12});
  RngStream rng(12, 0);
  const auto human = lang.sample_corpus(600, 250, rng);
  MarkovOptions o;
  o.order = 3;
  o.alpha = 0.01;
  o.min_context_count = 2;
  const auto lm = train_markov(human, o);
  RedGreenParams p;
  p.vocab_size = 512;
  p.h = 2;
  const RedGreenWatermark wm(p);
  const auto table = build_frequency_table(lang.sample_corpus(600, 250, rng), FrequencyKind::UnorderedNgram, 2);
  const ScoreFn score = [&](const TokenSeq &t) { return ngram_score(table, t, 2); };
  const TraceFn trace = [&](const TokenSeq &t, std::size_t) { return wm.trace(t); };
  std::vector<double> zs;
  for (int trial = 0; trial < 2000; ++trial) {
    RngStream r(trial_seed(3, 4, trial), 0);
    const auto &prompt = human.documents[trial % human.documents.size()];
    const TokenSeq pr(prompt.begin(), prompt.begin() + 5);
    std::vector<TokenSeq> orig{wm.generate(lm, pr, 275, r)};
    const TokenSeq prefix(orig[0].begin(), orig[0].begin() + 25);
    std::vector<TokenSeq> regen{wm.generate(lm, prefix, 250, r)};
    zs.push_back(reprompt_test(orig, regen, 25, score, trace).z);
  }
  CHECK(std::abs(stat::mean(zs)) < 0.1);
  CHECK(stat::ks_test_std_normal(zs).p_value >= 0.01);
}
