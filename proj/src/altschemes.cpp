#include "wmlab/altschemes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wmlab {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t aar_seed(const AarParams &params, std::span<const TokenId> context) {
  if (context.size() != params.h) {
    throw Error(ErrorCode::LengthMismatch,
                "AAR context has " + std::to_string(context.size()) + " tokens, expected " + std::to_string(params.h));
  }
  return prf_hash(params.key, ordered_digest(context));
}

std::uint64_t kth_row_seed(const KthParams &params, std::size_t row) {
  const std::size_t r = (row + params.row_offset) % params.n_key;
  return prf_hash(params.key, mix64(static_cast<std::uint64_t>(r) + 0x4b54480000000000ULL));
}

// -log(1 - xi), the per-position evidence.
double kth_evidence(double xi) { return -std::log1p(-xi); }

} // namespace

const char *to_string(KthAlignment a) { return a == KthAlignment::ShiftOnly ? "shift" : "levenshtein"; }

KthAlignment parse_kth_alignment(std::string_view s) {
  if (s == "shift") return KthAlignment::ShiftOnly;
  if (s == "levenshtein") return KthAlignment::Levenshtein;
  throw Error(ErrorCode::InvalidArgument, "unknown KTH alignment '" + std::string(s) + "'");
}

void AarParams::validate() const {
  if (h < 1) throw Error(ErrorCode::InvalidArgument, "AAR context size h must be >= 1");
  if (vocab_size < 2) throw Error(ErrorCode::InvalidArgument, "vocabulary size must be >= 2");
}

void KthParams::validate() const {
  if (n_key < 1) throw Error(ErrorCode::InvalidArgument, "KTH key length must be >= 1");
  if (shifts < 1 || shifts > n_key) throw Error(ErrorCode::InvalidArgument, "KTH shift count must lie in [1, n_key]");
  if (vocab_size < 2) throw Error(ErrorCode::InvalidArgument, "vocabulary size must be >= 2");
  if (pseudo_h < 1) throw Error(ErrorCode::InvalidArgument, "KTH pseudo context length must be >= 1");
  if (!(gap_penalty >= 0.0)) throw Error(ErrorCode::InvalidArgument, "gap penalty must be >= 0");
}

std::size_t KthParams::shift_value(std::size_t m) const { return m * (n_key / shifts); }

double keyed_uniform(std::uint64_t seed, std::uint64_t index) noexcept {
  const std::uint64_t bits = mix64(seed + (index + 1) * kGolden);
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

std::vector<double> aar_r_vector(const AarParams &params, std::span<const TokenId> context) {
  const std::uint64_t seed = aar_seed(params, context);
  std::vector<double> r(params.vocab_size);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = keyed_uniform(seed, i);
  return r;
}

double aar_r(const AarParams &params, std::span<const TokenId> context, TokenId token) {
  return keyed_uniform(aar_seed(params, context), token);
}

TokenId exponential_argmax(std::span<const double> r, std::span<const double> probs) {
  if (r.size() != probs.size() || r.empty()) throw Error(ErrorCode::LengthMismatch, "score and probability sizes differ");
  TokenId best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!(probs[i] > 0.0)) continue;
    const double v = std::log(r[i]) / probs[i];
    if (v > best_val) {
      best_val = v;
      best = static_cast<TokenId>(i);
    }
  }
  return best;
}

TokenSeq aar_generate(const MarkovLM &lm, const AarParams &params, const TokenSeq &prompt, std::size_t length) {
  params.validate();
  if (prompt.size() < params.h) throw Error(ErrorCode::TextTooShort, "prompt shorter than context size h");
  if (lm.vocab_size() != params.vocab_size)
    throw Error(ErrorCode::InvalidArgument, "LM vocabulary size differs from watermark vocabulary size");
  TokenSeq context = prompt;
  context.reserve(prompt.size() + length);
  std::vector<double> probs;
  std::vector<double> r(params.vocab_size);
  for (std::size_t i = 0; i < length; ++i) {
    lm.logits_into(context, probs);
    softmax_inplace(probs);
    const std::uint64_t seed =
        aar_seed(params, std::span<const TokenId>(context.data() + context.size() - params.h, params.h));
    for (std::size_t v = 0; v < r.size(); ++v) r[v] = keyed_uniform(seed, v);
    context.push_back(exponential_argmax(r, probs));
  }
  return TokenSeq(context.begin() + static_cast<std::ptrdiff_t>(prompt.size()), context.end());
}

WatermarkTrace aar_trace(const AarParams &params, const TokenSeq &text) {
  params.validate();
  if (text.size() <= params.h) throw Error(ErrorCode::TextTooShort, "text must be longer than h");
  WatermarkTrace tr;
  tr.scheme = Scheme::Aar;
  tr.x.assign(text.size(), 0.0);
  tr.keep = dedup_mask(text, params.h, params.dedup);
  for (std::size_t t = params.h; t < text.size(); ++t) {
    tr.x[t] = -std::log(aar_r(params, std::span<const TokenId>(text.data() + t - params.h, params.h), text[t]));
  }
  return tr;
}

double kth_xi(const KthParams &params, std::size_t row, TokenId token) {
  return keyed_uniform(kth_row_seed(params, row % params.n_key), token);
}

TokenSeq kth_generate(const MarkovLM &lm, const KthParams &params, const TokenSeq &prompt, std::size_t length,
                      RngStream &rng, std::size_t *shift_out) {
  params.validate();
  if (lm.vocab_size() != params.vocab_size)
    throw Error(ErrorCode::InvalidArgument, "LM vocabulary size differs from watermark vocabulary size");
  const std::size_t shift = params.shift_value(static_cast<std::size_t>(rng.below(params.shifts)));
  if (shift_out) *shift_out = shift;
  TokenSeq context = prompt;
  context.reserve(prompt.size() + length);
  std::vector<double> probs;
  std::vector<double> xi(params.vocab_size);
  for (std::size_t j = 0; j < length; ++j) {
    lm.logits_into(context, probs);
    softmax_inplace(probs);
    const std::uint64_t seed = kth_row_seed(params, (j + shift) % params.n_key);
    for (std::size_t v = 0; v < xi.size(); ++v) xi[v] = keyed_uniform(seed, v);
    context.push_back(exponential_argmax(xi, probs));
  }
  return TokenSeq(context.begin() + static_cast<std::ptrdiff_t>(prompt.size()), context.end());
}

namespace {

KthAlignmentResult align_shift_only(const KthParams &params, const TokenSeq &text) {
  const std::size_t n = text.size();
  // evidence[row][t] would be n_key x n; rows are evaluated on demand instead.
  KthAlignmentResult best;
  best.cost = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < params.shifts; ++m) {
    const std::size_t shift = params.shift_value(m);
    double cost = 0.0;
    for (std::size_t t = 0; t < n; ++t) cost -= kth_evidence(kth_xi(params, t + shift, text[t]));
    if (cost < best.cost) {
      best.cost = cost;
      best.shift = shift;
    }
  }
  best.trace.x.resize(n);
  for (std::size_t t = 0; t < n; ++t) best.trace.x[t] = kth_evidence(kth_xi(params, t + best.shift, text[t]));
  return best;
}

KthAlignmentResult align_levenshtein(const KthParams &params, const TokenSeq &text) {
  const std::size_t n = text.size();
  const std::size_t k = n; // key window length
  const double gap = params.gap_penalty;
  KthAlignmentResult best;
  best.cost = std::numeric_limits<double>::infinity();
  std::vector<double> dp((n + 1) * (k + 1));
  std::vector<std::uint8_t> move((n + 1) * (k + 1));
  std::vector<double> match(n * k);
  std::vector<double> best_x;
  const auto at = [k](std::size_t i, std::size_t j) { return i * (k + 1) + j; };
  for (std::size_t m = 0; m < params.shifts; ++m) {
    const std::size_t shift = params.shift_value(m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) match[i * k + j] = -kth_evidence(kth_xi(params, j + shift, text[i]));
    for (std::size_t j = 0; j <= k; ++j) dp[at(0, j)] = static_cast<double>(j) * gap, move[at(0, j)] = 2;
    for (std::size_t i = 1; i <= n; ++i) {
      dp[at(i, 0)] = static_cast<double>(i) * gap;
      move[at(i, 0)] = 1;
      for (std::size_t j = 1; j <= k; ++j) {
        // 0: match, 1: text token unmatched, 2: key row skipped.
        double c = dp[at(i - 1, j - 1)] + match[(i - 1) * k + (j - 1)];
        std::uint8_t mv = 0;
        if (const double ins = dp[at(i - 1, j)] + gap; ins < c) c = ins, mv = 1;
        if (const double del = dp[at(i, j - 1)] + gap; del < c) c = del, mv = 2;
        dp[at(i, j)] = c;
        move[at(i, j)] = mv;
      }
    }
    // Trailing key rows are free to leave unused.
    std::size_t end_j = 0;
    double cost = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j <= k; ++j) {
      if (dp[at(n, j)] < cost) cost = dp[at(n, j)], end_j = j;
    }
    if (cost < best.cost) {
      best.cost = cost;
      best.shift = shift;
      best_x.assign(n, 0.0);
      std::size_t i = n, j = end_j;
      while (i > 0) {
        const std::uint8_t mv = move[at(i, j)];
        if (mv == 0) {
          best_x[i - 1] = -match[(i - 1) * k + (j - 1)];
          --i, --j;
        } else if (mv == 1 || j == 0) {
          --i;
        } else {
          --j;
        }
      }
    }
  }
  best.trace.x = std::move(best_x);
  return best;
}

} // namespace

KthAlignmentResult kth_align(const KthParams &params, const TokenSeq &text) {
  params.validate();
  if (text.empty()) throw Error(ErrorCode::TextTooShort, "KTH trace needs a nonempty text");
  KthAlignmentResult r =
      params.alignment == KthAlignment::ShiftOnly ? align_shift_only(params, text) : align_levenshtein(params, text);
  r.trace.scheme = Scheme::Kth;
  r.trace.keep = dedup_mask(text, params.pseudo_h, params.dedup);
  return r;
}

WatermarkTrace kth_trace(const KthParams &params, const TokenSeq &text) { return kth_align(params, text).trace; }

} // namespace wmlab
