#pragma once

// Red-Green watermarking: keyed vocabulary partition, logit biasing during
// generation, per-position color traces with repeated-context dedup, and the
// detector Z-score.

#include "wmlab/core.hpp"
#include "wmlab/lm.hpp"

#include <unordered_map>

namespace wmlab {

enum class HashVariant { SumHash, SelfHash };
enum class DedupMode { HGram, HPlus1Gram, None };
enum class Scheme { RedGreen, Aar, Kth };

const char *to_string(HashVariant v);
const char *to_string(DedupMode m);
const char *to_string(Scheme s);
HashVariant parse_hash_variant(std::string_view s);
DedupMode parse_dedup_mode(std::string_view s);

struct RedGreenParams {
  std::size_t h = 1;
  double gamma = 0.25;
  double delta = 2.0;
  double rho = 4.0;
  HashVariant variant = HashVariant::SumHash;
  WatermarkKey key{15485863};
  std::size_t vocab_size = 512;
  DedupMode dedup = DedupMode::HGram;

  void validate() const;
  std::size_t green_count() const;
};

/// Per-position watermark statistic. Positions before the first full context
/// are never kept.
struct WatermarkTrace {
  std::vector<double> x;
  std::vector<std::uint8_t> keep;
  Scheme scheme = Scheme::RedGreen;

  std::size_t size() const noexcept { return x.size(); }
  std::size_t kept() const noexcept;
};

struct DetectionReport {
  std::size_t n_green = 0;
  std::size_t n_kept = 0;
  double z = 0.0;
  bool watermarked = false;
};

/// First-occurrence mask over `text`: position t >= h is kept unless its key
/// (the h preceding tokens, or those plus ω_t) already appeared earlier.
std::vector<std::uint8_t> dedup_mask(const TokenSeq &text, std::size_t h, DedupMode mode);

/// Detector arithmetic on counts.
double z_from_counts(std::size_t n_green, std::size_t n_kept, double gamma);

/// Red-Green scheme bound to one parameter set. Holds a greenlist cache keyed
/// by token sum; instances are not safe for concurrent use.
class RedGreenWatermark {
public:
  explicit RedGreenWatermark(RedGreenParams params);

  const RedGreenParams &params() const noexcept { return params_; }

  std::vector<TokenId> greenlist(std::span<const TokenId> context) const;
  bool color_of(std::span<const TokenId> context, TokenId token) const;

  /// Adds delta to each green logit in place; `context` is the last h tokens.
  void bias_logits(std::span<const TokenId> context, std::vector<double> &logits) const;

  TokenSeq generate(const MarkovLM &lm, const TokenSeq &prompt, std::size_t length, RngStream &rng) const;
  WatermarkTrace trace(const TokenSeq &text) const;
  DetectionReport detect(const TokenSeq &text) const;
  DetectionReport detect(const WatermarkTrace &trace) const;

private:
  const std::vector<std::uint8_t> &partition_for_sum(std::uint64_t sum) const;

  RedGreenParams params_;
  mutable std::unordered_map<std::uint64_t, std::vector<std::uint8_t>> cache_;
};

std::vector<TokenId> greenlist(const RedGreenParams &params, std::span<const TokenId> context);
int color_of(const RedGreenParams &params, std::span<const TokenId> context, TokenId token);
TokenSeq generate_watermarked(const MarkovLM &lm, const RedGreenParams &params, const TokenSeq &prompt,
                              std::size_t length, RngStream &rng);
WatermarkTrace color_trace(const RedGreenParams &params, const TokenSeq &text);
DetectionReport detect_z(const RedGreenParams &params, const TokenSeq &text);

} // namespace wmlab
