#pragma once

// Corpus ingestion, a back-off Markov language model and a synthetic
// ground-truth language used to produce "human" corpora.

#include "wmlab/core.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace wmlab {

/// Symbol table. Id 0 is always the reserved unknown token.
class Vocabulary {
public:
  static constexpr TokenId kUnk = 0;
  static constexpr std::string_view kUnkSymbol = "<unk>";

  Vocabulary();

  /// `size` ids in total: <unk> plus w1 .. w{size-1}.
  static Vocabulary synthetic(std::size_t size);

  /// Id of `symbol`, adding it when the vocabulary is not frozen; kUnk otherwise.
  TokenId intern(std::string_view symbol);
  std::optional<TokenId> find(std::string_view symbol) const;
  const std::string &symbol(TokenId id) const;

  std::size_t size() const noexcept { return symbols_.size(); }
  bool frozen() const noexcept { return frozen_; }
  void freeze() noexcept { frozen_ = true; }

private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, TokenId> ids_;
  bool frozen_ = false;
};

struct Corpus {
  std::vector<TokenSeq> documents;
  Vocabulary vocab;

  std::size_t total_tokens() const noexcept;
};

/// One document per line, whitespace-delimited symbols. Empty lines are skipped.
Corpus ingest_corpus(const std::filesystem::path &path, std::optional<Vocabulary> vocab = std::nullopt);
Corpus parse_corpus(std::istream &in, std::optional<Vocabulary> vocab = std::nullopt);
void write_corpus(const std::filesystem::path &path, const std::vector<TokenSeq> &docs, const Vocabulary &vocab);
void write_corpus(std::ostream &out, const std::vector<TokenSeq> &docs, const Vocabulary &vocab);

struct MarkovOptions {
  std::size_t order = 2;
  double alpha = 0.01;
  double temperature = 1.0;
  /// Contexts observed fewer times than this back off to the next lower order.
  std::uint32_t min_context_count = 1;
  /// When false an unseen full-order context yields the uniform distribution.
  bool backoff = true;
};

/// Additively smoothed k-th order Markov model with back-off to shorter
/// contexts. Immutable after training.
class MarkovLM {
public:
  std::size_t vocab_size() const noexcept { return vocab_.size(); }
  const Vocabulary &vocab() const noexcept { return vocab_; }
  std::size_t order() const noexcept { return opts_.order; }
  double alpha() const noexcept { return opts_.alpha; }
  double temperature() const noexcept { return opts_.temperature; }
  const MarkovOptions &options() const noexcept { return opts_; }

  /// Same counts, different sampling temperature.
  MarkovLM with_temperature(double tau) const;

  /// log P(.|context) / tau. Only the last `order()` tokens are read.
  std::vector<double> logits(std::span<const TokenId> context) const;
  void logits_into(std::span<const TokenId> context, std::vector<double> &out) const;

  /// Untempered smoothed probability.
  double probability(std::span<const TokenId> context, TokenId token) const;

  /// Length of the context actually used after back-off.
  std::size_t effective_order(std::span<const TokenId> context) const;

  void save(std::ostream &out) const;
  static MarkovLM load(std::istream &in);
  void save(const std::filesystem::path &path) const;
  static MarkovLM load(const std::filesystem::path &path);

  friend MarkovLM train_markov(const Corpus &, const MarkovOptions &);

private:
  struct Entry {
    TokenId token;
    std::uint32_t count;
  };
  struct ContextSlice {
    std::uint64_t total = 0;
    std::uint32_t offset = 0;
    std::uint32_t length = 0;
  };
  struct Table {
    std::unordered_map<std::uint64_t, ContextSlice> contexts;
    std::vector<Entry> entries;
  };

  const ContextSlice *lookup(std::span<const TokenId> context, std::size_t &table_index) const;

  MarkovOptions opts_;
  Vocabulary vocab_;
  std::vector<Table> tables_; // index = context length
};

MarkovLM train_markov(const Corpus &corpus, const MarkovOptions &opts);
inline MarkovLM train_markov(const Corpus &corpus, std::size_t k, double alpha) {
  MarkovOptions o;
  o.order = k;
  o.alpha = alpha;
  return train_markov(corpus, o);
}

/// Draw from softmax(logits).
TokenId sample(std::span<const double> logits, RngStream &rng);

/// softmax in place; returns the normaliser log-sum-exp.
double softmax_inplace(std::vector<double> &v);

/// Shannon entropy (nats) of softmax(logits).
double softmax_entropy(std::span<const double> logits);

/// Unwatermarked continuation of `prompt`.
TokenSeq generate_plain(const MarkovLM &lm, const TokenSeq &prompt, std::size_t length, RngStream &rng);

struct SyntheticLanguageConfig {
  std::size_t vocab_size = 512;
  double zipf_exponent = 1.0;
  std::size_t max_branching = 64;
  double unigram_mix = 0.02;
  std::uint64_t seed = 7;
};

/// First-order ground-truth chain with Zipfian unigram mass and log-uniform
/// per-state branching, so that state entropies span near-deterministic to diffuse.
class SyntheticLanguage {
public:
  explicit SyntheticLanguage(const SyntheticLanguageConfig &cfg);

  const Vocabulary &vocab() const noexcept { return vocab_; }
  const SyntheticLanguageConfig &config() const noexcept { return cfg_; }

  TokenSeq sample_document(std::size_t length, RngStream &rng) const;
  Corpus sample_corpus(std::size_t documents, std::size_t doc_length, RngStream &rng) const;
  double transition_probability(TokenId prev, TokenId next) const;

private:
  TokenId draw_unigram(RngStream &rng) const;

  SyntheticLanguageConfig cfg_;
  Vocabulary vocab_;
  std::vector<double> unigram_cdf_;
  std::vector<double> unigram_;
  std::vector<std::vector<TokenId>> successors_;
  std::vector<std::vector<double>> successor_cdf_;
};

} // namespace wmlab
