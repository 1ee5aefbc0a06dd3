#pragma once

// Spoofing-discovery tests. The defender pairs each position's watermark
// statistic x_t with a score y_t approximating how likely a spoofer was to
// know that position's color, and tests their rank correlation. The Standard
// test assumes independence under genuine text; the Reprompting test instead
// subtracts the correlation of a provider-regenerated continuation.

#include "wmlab/lm.hpp"
#include "wmlab/watermark.hpp"

#include <functional>
#include <string>

namespace wmlab {

enum class FrequencyKind { Unigram, UnorderedNgram };

struct FrequencyTable {
  FrequencyKind kind = FrequencyKind::Unigram;
  std::size_t h = 1; ///< gram length is h + 1 for UnorderedNgram
  std::unordered_map<std::uint64_t, std::uint64_t> counts;
  std::uint64_t total = 0;

  std::uint64_t count_of(std::uint64_t key) const;
  /// Unigram relative frequency; 0 for unseen tokens.
  double frequency(TokenId token) const;
};

/// Sorted-multiset key of a token window.
std::uint64_t unordered_key(std::span<const TokenId> window);

FrequencyTable build_frequency_table(const std::vector<TokenSeq> &documents, FrequencyKind kind, std::size_t h);
FrequencyTable build_frequency_table(const Corpus &corpus, FrequencyKind kind, std::size_t h);

/// Per-position defender score aligned with a WatermarkTrace (y_t = 0 for t < h).
struct ScoreSeq {
  std::vector<double> y;
};

ScoreSeq ngram_score(const FrequencyTable &table, const TokenSeq &text, std::size_t h);
ScoreSeq unigram_score(const FrequencyTable &table, const TokenSeq &text, std::size_t h);

/// Aligned (x, y, keep) triple; the unit the statistic consumes.
struct Sample {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<std::uint8_t> keep;
  Scheme scheme = Scheme::RedGreen;

  std::size_t kept() const noexcept;
};

Sample make_sample(const WatermarkTrace &trace, const ScoreSeq &score);
/// Positions [from, end) of `s`.
Sample slice(const Sample &s, std::size_t from);
/// In-order concatenation; dedup stays per text. Throws MixedSchemes.
Sample concatenate(const std::vector<Sample> &parts);

inline constexpr std::size_t kMinKept = 20;

/// arctanh of the clamped Spearman correlation of x and y on kept positions.
double statistic_S(const Sample &s, std::size_t min_kept = kMinKept);
double statistic_S(const WatermarkTrace &trace, const ScoreSeq &score, std::size_t min_kept = kMinKept);

enum class TestMethod { Standard, Reprompting };
enum class Sidedness { TwoSided, OneSided };

const char *to_string(TestMethod m);
const char *to_string(Sidedness s);
Sidedness parse_sidedness(std::string_view s);

double p_value(double z, Sidedness sidedness);

struct TestReport {
  TestMethod method = TestMethod::Standard;
  Scheme scheme = Scheme::RedGreen;
  Sidedness sidedness = Sidedness::TwoSided;
  double S = 0.0;
  double z = 0.0;
  double p = 1.0;
  std::size_t n_kept = 0;
  // Reprompting diagnostics.
  std::size_t c = 0;
  std::size_t regen_tokens = 0;
  double S_regen = 0.0;
  std::size_t n_kept_regen = 0;
  std::vector<double> segment_S;
  // Provenance columns of the CSV row.
  std::size_t h = 0;
  std::size_t T = 0;
  std::uint64_t seed = 0;
  std::string spoofer = "none";

  static std::string csv_header();
  std::string csv_row() const;
};

TestReport standard_test(const Sample &s, Sidedness sidedness = Sidedness::TwoSided, std::size_t min_kept = kMinKept);

/// z = (S(original) - S(regenerated)) / sqrt(v(n1) + v(n2)), v(n) = 1.06 / (n - 3).
TestReport reprompt_test(const Sample &original, const Sample &regenerated, Sidedness sidedness = Sidedness::TwoSided,
                         std::size_t min_kept = kMinKept);

/// Trace of a full text whose watermark query began at `query_start`.
using TraceFn = std::function<WatermarkTrace(const TokenSeq &text, std::size_t query_start)>;
using ScoreFn = std::function<ScoreSeq(const TokenSeq &text)>;

/// Reprompting over a set of texts. `regenerated[i]` continues the first c
/// tokens of `originals[i]`; both sides are traced with the shared prefix and
/// sliced at c, so dedup treats them identically.
TestReport reprompt_test(const std::vector<TokenSeq> &originals, const std::vector<TokenSeq> &regenerated,
                         std::size_t c, const ScoreFn &score, const TraceFn &trace,
                         Sidedness sidedness = Sidedness::TwoSided, std::size_t min_kept = kMinKept);

/// Standard test over the concatenation of `texts`.
TestReport standard_test(const std::vector<TokenSeq> &texts, const ScoreFn &score, const TraceFn &trace,
                         Sidedness sidedness = Sidedness::TwoSided, std::size_t min_kept = kMinKept);

} // namespace wmlab
