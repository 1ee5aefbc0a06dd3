#pragma once

// Simulated learning-based spoofers. A spoofer queries the provider for a
// dataset D of watermarked text, turns (h+1)-gram statistics of D into a
// knowledge table and biases its own sampler toward tokens it believes green.
// Its color knowledge is therefore limited to contexts seen in D.

#include "wmlab/lm.hpp"
#include "wmlab/watermark.hpp"

#include <filesystem>
#include <map>
#include <memory>

namespace wmlab {

struct SpoofDataset {
  std::vector<TokenSeq> documents;
  Vocabulary vocab;
  std::size_t total_tokens = 0;
  /// Generation provenance, persisted in the sidecar file.
  std::map<std::string, std::string> meta;
};

SpoofDataset make_dataset(std::vector<TokenSeq> documents, Vocabulary vocab);

/// Documents produced by the provider with the true key. Document i continues
/// prompts[i % prompts.size()]. With `filter_detected`, documents that do not
/// pass the detector are dropped (and counted in meta).
SpoofDataset build_dataset(const MarkovLM &lm, const RedGreenParams &params, const std::vector<TokenSeq> &prompts,
                           std::size_t n_docs, std::size_t doc_len, RngStream &rng, bool filter_detected = false);

/// Corpus line format at `path`, key=value sidecar at `path` + ".meta".
void save_dataset(const std::filesystem::path &path, const SpoofDataset &ds);
SpoofDataset load_dataset(const std::filesystem::path &path, const Vocabulary &vocab);

enum class SpooferKind { Oracle, Stealing, Distill };
enum class KnowledgeMode { Indicator, Frequency, RatioScore };

const char *to_string(SpooferKind k);
const char *to_string(KnowledgeMode m);
SpooferKind parse_spoofer_kind(std::string_view s);
KnowledgeMode parse_knowledge_mode(std::string_view s);

struct SpooferConfig {
  SpooferKind kind = SpooferKind::Stealing;
  KnowledgeMode mode = KnowledgeMode::RatioScore;
  double beta = 4.0;
  /// Assumed watermark context size.
  std::size_t h = 1;
  HashVariant variant = HashVariant::SumHash;
  std::size_t distill_order = 0; ///< 0 means h
  double distill_alpha = 0.01;
  std::uint32_t distill_min_count = 1;
  double epsilon = 0.5;
  /// Only the Oracle spoofer reads this: the true parameters used to color its known grams.
  std::optional<RedGreenParams> oracle_params;

  void validate() const;
};

/// Ordered (h+1)-gram statistics of D, grouped by h-token context.
class KnowledgeTable {
public:
  struct Known {
    TokenId token;
    double value;
  };

  KnowledgeMode mode() const noexcept { return mode_; }
  std::size_t h() const noexcept { return h_; }
  std::size_t distinct_grams() const noexcept { return grams_; }
  double lambda() const noexcept { return lambda_; }

  /// Indicator: 0/1; Frequency: raw count in D; RatioScore: score in [0, 1].
  double value(std::span<const TokenId> context, TokenId token) const;
  /// Raw count of the gram in D regardless of mode.
  std::uint32_t count(std::span<const TokenId> context, TokenId token) const;

  /// Known continuations of the last h tokens of `context`; empty when unseen.
  std::span<const Known> known(std::span<const TokenId> context) const;

  /// Distilled model, present when learned for a Distill spoofer.
  const MarkovLM *distilled() const noexcept { return distilled_.get(); }

  friend KnowledgeTable learn_knowledge(const SpoofDataset &, const SpooferConfig &, const Corpus *);

private:
  struct Row {
    std::vector<Known> known;
    std::vector<std::uint32_t> counts;
  };

  KnowledgeMode mode_ = KnowledgeMode::Indicator;
  std::size_t h_ = 1;
  std::size_t grams_ = 0;
  double lambda_ = 0.0;
  std::unordered_map<std::uint64_t, Row> rows_;
  std::shared_ptr<const MarkovLM> distilled_;
};

/// RatioScore requires `base`; Distill also trains the distilled model.
KnowledgeTable learn_knowledge(const SpoofDataset &dataset, const SpooferConfig &cfg, const Corpus *base = nullptr);

/// Continuation of `prompt` by the spoofer.
TokenSeq spoof_generate(const MarkovLM &aux_lm, const KnowledgeTable &knowledge, const SpooferConfig &cfg,
                        const TokenSeq &prompt, std::size_t length, RngStream &rng);

/// Fraction of `texts` the detector flags.
double spoof_success_rate(const RedGreenParams &params, const std::vector<TokenSeq> &texts);

} // namespace wmlab
