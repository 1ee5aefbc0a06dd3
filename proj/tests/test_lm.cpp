#include "doctest.h"

#include "wmlab/lm.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace wmlab;

namespace {

Corpus corpus_of(const std::string &text) {
  std::istringstream in(text);
  return parse_corpus(in);
}

TokenSeq tokens(const Corpus &c, std::initializer_list<const char *> syms) {
  TokenSeq out;
  for (const char *s : syms) out.push_back(*c.vocab.find(s));
  return out;
}

} // namespace

TEST_CASE("ingest_corpus builds a vocabulary with a reserved unknown id") {
  const auto c = corpus_of("a b a\n");
  CHECK(c.documents.size() == 1);
  CHECK(c.vocab.size() == 3);
  CHECK(c.vocab.symbol(Vocabulary::kUnk) == "<unk>");
  CHECK(c.documents[0] == tokens(c, {"a", "b", "a"}));
}

TEST_CASE("ingest_corpus: empty input and frozen vocabularies") {
  CHECK_THROWS_AS(corpus_of(""), Error);
  CHECK_THROWS_AS(corpus_of("\n\n"), Error);
  CHECK_THROWS_AS(ingest_corpus("/nonexistent/corpus.txt"), Error);

  Vocabulary v;
  const TokenId a = v.intern("a");
  v.freeze();
  std::istringstream in("a b\n");
  const auto c = parse_corpus(in, v);
  CHECK(c.documents[0] == TokenSeq{a, Vocabulary::kUnk});
  CHECK(c.vocab.size() == 2);
}

TEST_CASE("corpus round-trips through a file") {
  const auto c = corpus_of("a b c\nc b\n");
  const auto path = std::filesystem::temp_directory_path() / "wmlab_corpus_roundtrip.txt";
  write_corpus(path, c.documents, c.vocab);
  const auto back = ingest_corpus(path, c.vocab);
  CHECK(back.documents == c.documents);
  std::filesystem::remove(path);
}

TEST_CASE("train_markov conditional probabilities") {
  SUBCASE("deterministic chain") {
    const auto c = corpus_of("a b a b\n");
    const auto lm = train_markov(c, 1, 1e-9);
    const auto ctx = tokens(c, {"a"});
    CHECK(lm.probability(ctx, tokens(c, {"b"})[0]) == doctest::Approx(1.0).epsilon(1e-6));
    const auto l = lm.logits(ctx);
    CHECK(std::max_element(l.begin(), l.end()) - l.begin() == static_cast<long>(tokens(c, {"b"})[0]));
  }
  SUBCASE("additive smoothing by hand count") {
    const auto c = corpus_of("a a a b\n");
    const auto lm = train_markov(c, 1, 1.0);
    // (count(a,a) + 1) / (count(a,.) + |vocab|); |vocab| counts the reserved id.
    const double v = static_cast<double>(c.vocab.size());
    CHECK(lm.probability(tokens(c, {"a"}), tokens(c, {"a"})[0]) == doctest::Approx(3.0 / (3.0 + v)));
    CHECK(lm.probability(tokens(c, {"a"}), tokens(c, {"b"})[0]) == doctest::Approx(2.0 / (3.0 + v)));
  }
  SUBCASE("unseen context without back-off is uniform") {
    const auto c = corpus_of("a a a b\n");
    MarkovOptions o;
    o.order = 1;
    o.alpha = 1.0;
    o.backoff = false;
    const auto lm = train_markov(c, o);
    for (TokenId t = 0; t < 3; ++t) CHECK(lm.probability(tokens(c, {"b"}), t) == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("unseen context with back-off uses the unigram table") {
    const auto c = corpus_of("a a a b\n");
    const auto lm = train_markov(c, 1, 1.0);
    CHECK(lm.effective_order(tokens(c, {"b"})) == 0);
    CHECK(lm.probability(tokens(c, {"b"}), tokens(c, {"a"})[0]) == doctest::Approx(4.0 / 7.0));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(train_markov(corpus_of("a b\n"), 2, 1.0), Error);
    CHECK_THROWS_AS(train_markov(corpus_of("a b c\n"), 0, 1.0), Error);
    CHECK_THROWS_AS(train_markov(corpus_of("a b c\n"), 1, 0.0), Error);
  }
}

TEST_CASE("train_markov reproduces empirical frequencies as alpha vanishes") {
  SyntheticLanguage lang(SyntheticLanguageConfig{64, 1.0, 8, 0.02, 3});
  RngStream rng(3, 0);
  const auto c = lang.sample_corpus(20, 200, rng);
  const auto lm = train_markov(c, 2, 1e-9);
  std::map<std::pair<TokenId, TokenId>, std::map<TokenId, double>> counts;
  for (const auto &d : c.documents)
    for (std::size_t t = 2; t < d.size(); ++t) counts[{d[t - 2], d[t - 1]}][d[t]] += 1.0;
  double worst = 0.0;
  for (const auto &[ctx, row] : counts) {
    double total = 0.0;
    for (const auto &[tok, n] : row) total += n;
    const TokenSeq context{ctx.first, ctx.second};
    for (const auto &[tok, n] : row) worst = std::max(worst, std::abs(lm.probability(context, tok) - n / total));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("documents do not share n-grams across boundaries") {
  const auto c = corpus_of("a b\nc d\n");
  const auto lm = train_markov(c, 1, 1e-9);
  CHECK(lm.probability(tokens(c, {"b"}), tokens(c, {"c"})[0]) < 0.5);
  CHECK(lm.effective_order(tokens(c, {"b"})) == 0);
}

TEST_CASE("logits: softmax normalisation and temperature") {
  SyntheticLanguage lang(SyntheticLanguageConfig{128, 1.0, 32, 0.02, 4});
  RngStream rng(4, 0);
  const auto c = lang.sample_corpus(30, 300, rng);
  const auto lm = train_markov(c, 2, 0.01);
  const TokenSeq ctx = c.documents[0];
  auto l = lm.logits(ctx);
  for (double v : l) CHECK(std::isfinite(v));
  auto p = l;
  softmax_inplace(p);
  double s = 0;
  for (double v : p) s += v;
  CHECK(std::abs(s - 1.0) < 1e-12);

  const double e05 = softmax_entropy(lm.with_temperature(0.5).logits(ctx));
  const double e1 = softmax_entropy(lm.logits(ctx));
  const double e2 = softmax_entropy(lm.with_temperature(2.0).logits(ctx));
  CHECK(e05 < e1);
  CHECK(e1 < e2);

  const auto hot = lm.with_temperature(1e6).logits(ctx);
  const auto [mn, mx] = std::minmax_element(hot.begin(), hot.end());
  CHECK(*mx - *mn < 1e-3);
  CHECK_THROWS_AS(lm.with_temperature(0.0), Error);
}

TEST_CASE("mean per-step entropy is monotone in temperature") {
  SyntheticLanguage lang(SyntheticLanguageConfig{256, 1.0, 64, 0.02, 5});
  RngStream rng(5, 0);
  const auto c = lang.sample_corpus(40, 300, rng);
  const auto lm = train_markov(c, 2, 0.01);
  double prev = -1.0;
  for (double tau : {0.5, 1.0, 2.0}) {
    const auto m = lm.with_temperature(tau);
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t d = 0; d < 5; ++d)
      for (std::size_t t = 2; t < c.documents[d].size(); ++t) {
        total += softmax_entropy(m.logits(std::span<const TokenId>(c.documents[d].data(), t)));
        ++n;
      }
    const double mean = total / static_cast<double>(n);
    CHECK(mean > prev);
    prev = mean;
  }
}

TEST_CASE("sample draws from softmax") {
  RngStream rng(8, 0);
  std::vector<double> onehot{-50, 50, -50, -50};
  int hits = 0;
  for (int i = 0; i < 10000; ++i) hits += sample(onehot, rng) == 1;
  CHECK(hits > 9990);

  std::vector<double> flat(4, 0.0);
  std::vector<int> freq(4, 0);
  for (int i = 0; i < 100000; ++i) ++freq[sample(flat, rng)];
  for (int f : freq) CHECK(std::abs(f / 100000.0 - 0.25) < 0.02);

  RngStream a(9, 1), b(9, 1);
  std::vector<double> l{0.1, 0.7, -0.3, 1.2, 0.0};
  for (int i = 0; i < 100; ++i) CHECK(sample(l, a) == sample(l, b));
}

TEST_CASE("MarkovLM save and load preserve logits") {
  SyntheticLanguage lang(SyntheticLanguageConfig{64, 1.0, 8, 0.02, 6});
  RngStream rng(6, 0);
  const auto c = lang.sample_corpus(10, 100, rng);
  MarkovOptions o;
  o.order = 3;
  o.alpha = 0.05;
  o.temperature = 0.7;
  o.min_context_count = 2;
  const auto lm = train_markov(c, o);
  std::stringstream ss;
  lm.save(ss);
  const auto back = MarkovLM::load(ss);
  CHECK(back.order() == 3);
  CHECK(back.vocab_size() == lm.vocab_size());
  CHECK(back.options().min_context_count == 2);
  for (std::size_t d = 0; d < 3; ++d) {
    const auto &doc = c.documents[d];
    for (std::size_t t = 0; t < 40; ++t) {
      const std::span<const TokenId> ctx(doc.data(), t);
      CHECK(lm.logits(ctx) == back.logits(ctx));
    }
  }
  std::stringstream bad("not a model");
  CHECK_THROWS_AS(MarkovLM::load(bad), Error);
}

TEST_CASE("generate_plain is reproducible and uses the model") {
  const auto c = corpus_of("a b a b a b a b\n");
  const auto lm = train_markov(c, 1, 1e-9);
  RngStream r1(1, 0), r2(1, 0);
  const auto g1 = generate_plain(lm, tokens(c, {"a"}), 20, r1);
  const auto g2 = generate_plain(lm, tokens(c, {"a"}), 20, r2);
  CHECK(g1 == g2);
  CHECK(g1.size() == 20);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == tokens(c, {i % 2 == 0 ? "b" : "a"})[0]);
}

TEST_CASE("SyntheticLanguage emits valid tokens with proper transition rows") {
  SyntheticLanguage lang(SyntheticLanguageConfig{100, 1.0, 16, 0.02, 9});
  CHECK(lang.vocab().size() == 100);
  RngStream rng(2, 2);
  const auto doc = lang.sample_document(500, rng);
  CHECK(doc.size() == 500);
  for (TokenId t : doc) {
    CHECK(t > 0);
    CHECK(t < 100);
  }
  for (TokenId prev : {1u, 17u, 99u}) {
    double s = 0.0;
    for (TokenId n = 0; n < 100; ++n) s += lang.transition_probability(prev, n);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}
