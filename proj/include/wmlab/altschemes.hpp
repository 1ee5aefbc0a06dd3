#pragma once

// Distortion-free schemes whose per-position statistic is continuous: AAR
// (hashed-context uniform scores, argmax r^{1/p}) and KTH (cyclic key sequence
// with a random shift per query). Both emit a WatermarkTrace that the spoofing
// tests consume without knowing the scheme.

#include "wmlab/lm.hpp"
#include "wmlab/watermark.hpp"

#include <optional>

namespace wmlab {

struct AarParams {
  std::size_t h = 3;
  WatermarkKey key{15485863};
  std::size_t vocab_size = 512;
  DedupMode dedup = DedupMode::HGram;

  void validate() const;
};

enum class KthAlignment { ShiftOnly, Levenshtein };
const char *to_string(KthAlignment a);
KthAlignment parse_kth_alignment(std::string_view s);

struct KthParams {
  std::size_t n_key = 256;
  std::size_t shifts = 256;
  WatermarkKey key{15485863};
  std::size_t vocab_size = 512;
  KthAlignment alignment = KthAlignment::ShiftOnly;
  /// Context length used for dedup and for the defender's n-gram score.
  std::size_t pseudo_h = 5;
  DedupMode dedup = DedupMode::HGram;
  /// Edit cost of the Levenshtein alignment.
  double gap_penalty = 1.0;
  /// Cyclic rotation applied to the key rows.
  std::size_t row_offset = 0;

  void validate() const;
  /// Shift value of the m-th allowed shift, m in [0, shifts).
  std::size_t shift_value(std::size_t m) const;
};

/// Uniform in (0,1) addressed by (seed, index); O(1), no state.
double keyed_uniform(std::uint64_t seed, std::uint64_t index) noexcept;

std::vector<double> aar_r_vector(const AarParams &params, std::span<const TokenId> context);
double aar_r(const AarParams &params, std::span<const TokenId> context, TokenId token);

/// argmax_i log(r_i) / p_i, i.e. argmax r_i^{1/p_i}; tokens with p_i = 0 never win.
TokenId exponential_argmax(std::span<const double> r, std::span<const double> probs);

TokenSeq aar_generate(const MarkovLM &lm, const AarParams &params, const TokenSeq &prompt, std::size_t length);
WatermarkTrace aar_trace(const AarParams &params, const TokenSeq &text);

double kth_xi(const KthParams &params, std::size_t row, TokenId token);

/// One query: draws a shift among the allowed ones, step j reads key row
/// (j + shift) mod n_key. The drawn shift is written to `shift_out` if given.
TokenSeq kth_generate(const MarkovLM &lm, const KthParams &params, const TokenSeq &prompt, std::size_t length,
                      RngStream &rng, std::size_t *shift_out = nullptr);

struct KthAlignmentResult {
  WatermarkTrace trace;
  std::size_t shift = 0;
  /// Total alignment cost; lower means stronger evidence.
  double cost = 0.0;
};

/// Aligns `text` (a single query's continuation) against every allowed shift.
KthAlignmentResult kth_align(const KthParams &params, const TokenSeq &text);
WatermarkTrace kth_trace(const KthParams &params, const TokenSeq &text);

} // namespace wmlab
