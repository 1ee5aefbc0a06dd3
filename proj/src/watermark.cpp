#include "wmlab/watermark.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace wmlab {

const char *to_string(HashVariant v) { return v == HashVariant::SumHash ? "sumhash" : "selfhash"; }

const char *to_string(DedupMode m) {
  switch (m) {
  case DedupMode::HGram: return "hgram";
  case DedupMode::HPlus1Gram: return "hplus1gram";
  case DedupMode::None: return "none";
  }
  return "?";
}

const char *to_string(Scheme s) {
  switch (s) {
  case Scheme::RedGreen: return "redgreen";
  case Scheme::Aar: return "aar";
  case Scheme::Kth: return "kth";
  }
  return "?";
}

HashVariant parse_hash_variant(std::string_view s) {
  if (s == "sumhash") return HashVariant::SumHash;
  if (s == "selfhash") return HashVariant::SelfHash;
  throw Error(ErrorCode::InvalidArgument, "unknown hash variant '" + std::string(s) + "'");
}

DedupMode parse_dedup_mode(std::string_view s) {
  if (s == "hgram") return DedupMode::HGram;
  if (s == "hplus1gram") return DedupMode::HPlus1Gram;
  if (s == "none") return DedupMode::None;
  throw Error(ErrorCode::InvalidArgument, "unknown dedup mode '" + std::string(s) + "'");
}

void RedGreenParams::validate() const {
  if (h < 1) throw Error(ErrorCode::InvalidArgument, "context size h must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error(ErrorCode::InvalidArgument, "gamma must lie in (0,1)");
  if (vocab_size < 2) throw Error(ErrorCode::InvalidArgument, "vocabulary size must be >= 2");
  if (green_count() == 0) throw Error(ErrorCode::InvalidArgument, "gamma * |vocab| rounds to zero green tokens");
}

std::size_t RedGreenParams::green_count() const {
  return static_cast<std::size_t>(std::floor(gamma * static_cast<double>(vocab_size)));
}

std::size_t WatermarkTrace::kept() const noexcept {
  return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), std::uint8_t{1}));
}

std::vector<std::uint8_t> dedup_mask(const TokenSeq &text, std::size_t h, DedupMode mode) {
  std::vector<std::uint8_t> keep(text.size(), 0);
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(text.size());
  for (std::size_t t = h; t < text.size(); ++t) {
    if (mode == DedupMode::None) {
      keep[t] = 1;
      continue;
    }
    const std::size_t width = mode == DedupMode::HGram ? h : h + 1;
    const std::span<const TokenId> window(text.data() + t - h, width);
    keep[t] = seen.insert(ordered_digest(window)).second ? 1 : 0;
  }
  return keep;
}

double z_from_counts(std::size_t n_green, std::size_t n_kept, double gamma) {
  if (n_kept == 0) throw Error(ErrorCode::NoKeptPositions, "detector needs at least one kept position");
  const double n = static_cast<double>(n_kept);
  return (static_cast<double>(n_green) - gamma * n) / std::sqrt(n * gamma * (1.0 - gamma));
}

RedGreenWatermark::RedGreenWatermark(RedGreenParams params) : params_(params) { params_.validate(); }

const std::vector<std::uint8_t> &RedGreenWatermark::partition_for_sum(std::uint64_t sum) const {
  if (auto it = cache_.find(sum); it != cache_.end()) return it->second;
  const std::size_t v = params_.vocab_size;
  const std::size_t m = params_.green_count();
  RngStream rng(prf_hash(params_.key, digest_of_sum(sum)), 0);
  std::vector<TokenId> perm(v);
  for (std::size_t i = 0; i < v; ++i) perm[i] = static_cast<TokenId>(i);
  // Forward Fisher-Yates; only the first m slots are needed.
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(v - i));
    std::swap(perm[i], perm[j]);
  }
  std::vector<std::uint8_t> green(v, 0);
  for (std::size_t i = 0; i < m; ++i) green[perm[i]] = 1;
  return cache_.emplace(sum, std::move(green)).first->second;
}

namespace {

void check_context(std::span<const TokenId> context, std::size_t h) {
  if (context.size() != h) {
    throw Error(ErrorCode::LengthMismatch,
                "context has " + std::to_string(context.size()) + " tokens, expected h=" + std::to_string(h));
  }
}

std::uint64_t token_sum(std::span<const TokenId> s) {
  std::uint64_t sum = 0;
  for (TokenId t : s) sum += t;
  return sum;
}

} // namespace

bool RedGreenWatermark::color_of(std::span<const TokenId> context, TokenId token) const {
  check_context(context, params_.h);
  if (token >= params_.vocab_size) throw Error(ErrorCode::InvalidArgument, "token outside vocabulary");
  if (params_.variant == HashVariant::SumHash) return partition_for_sum(token_sum(context))[token] != 0;
  // SelfHash: the candidate replaces the oldest context token in its own digest.
  const std::uint64_t sum = token_sum(context.subspan(1)) + token;
  return partition_for_sum(sum)[token] != 0;
}

std::vector<TokenId> RedGreenWatermark::greenlist(std::span<const TokenId> context) const {
  check_context(context, params_.h);
  std::vector<TokenId> out;
  out.reserve(params_.green_count());
  if (params_.variant == HashVariant::SumHash) {
    const auto &part = partition_for_sum(token_sum(context));
    for (std::size_t v = 0; v < part.size(); ++v)
      if (part[v]) out.push_back(static_cast<TokenId>(v));
  } else {
    for (std::size_t v = 0; v < params_.vocab_size; ++v)
      if (color_of(context, static_cast<TokenId>(v))) out.push_back(static_cast<TokenId>(v));
  }
  return out;
}

void RedGreenWatermark::bias_logits(std::span<const TokenId> context, std::vector<double> &logits) const {
  check_context(context, params_.h);
  const std::size_t v = std::min(logits.size(), params_.vocab_size);
  const double delta = params_.delta;
  if (params_.variant == HashVariant::SumHash) {
    const auto &part = partition_for_sum(token_sum(context));
    for (std::size_t i = 0; i < v; ++i)
      if (part[i]) logits[i] += delta;
  } else {
    const std::uint64_t base = token_sum(context.subspan(1));
    for (std::size_t i = 0; i < v; ++i)
      if (partition_for_sum(base + i)[i]) logits[i] += delta;
  }
}

TokenSeq RedGreenWatermark::generate(const MarkovLM &lm, const TokenSeq &prompt, std::size_t length,
                                     RngStream &rng) const {
  if (length == 0) throw Error(ErrorCode::InvalidArgument, "generation length must be positive");
  if (prompt.size() < params_.h) throw Error(ErrorCode::TextTooShort, "prompt shorter than context size h");
  if (lm.vocab_size() != params_.vocab_size)
    throw Error(ErrorCode::InvalidArgument, "LM vocabulary size differs from watermark vocabulary size");
  TokenSeq context = prompt;
  context.reserve(prompt.size() + length);
  std::vector<double> logits;
  for (std::size_t i = 0; i < length; ++i) {
    lm.logits_into(context, logits);
    if (params_.delta != 0.0) {
      bias_logits(std::span<const TokenId>(context.data() + context.size() - params_.h, params_.h), logits);
    }
    context.push_back(sample(logits, rng));
  }
  return TokenSeq(context.begin() + static_cast<std::ptrdiff_t>(prompt.size()), context.end());
}

WatermarkTrace RedGreenWatermark::trace(const TokenSeq &text) const {
  const std::size_t h = params_.h;
  if (text.size() <= h) throw Error(ErrorCode::TextTooShort, "text must be longer than h");
  WatermarkTrace tr;
  tr.scheme = Scheme::RedGreen;
  tr.x.assign(text.size(), 0.0);
  tr.keep = dedup_mask(text, h, params_.dedup);
  for (std::size_t t = h; t < text.size(); ++t) {
    tr.x[t] = color_of(std::span<const TokenId>(text.data() + t - h, h), text[t]) ? 1.0 : 0.0;
  }
  return tr;
}

DetectionReport RedGreenWatermark::detect(const WatermarkTrace &tr) const {
  DetectionReport r;
  for (std::size_t t = 0; t < tr.size(); ++t) {
    if (!tr.keep[t]) continue;
    ++r.n_kept;
    if (tr.x[t] > 0.5) ++r.n_green;
  }
  r.z = z_from_counts(r.n_green, r.n_kept, params_.gamma);
  r.watermarked = r.z > params_.rho;
  return r;
}

DetectionReport RedGreenWatermark::detect(const TokenSeq &text) const { return detect(trace(text)); }

std::vector<TokenId> greenlist(const RedGreenParams &params, std::span<const TokenId> context) {
  return RedGreenWatermark(params).greenlist(context);
}

int color_of(const RedGreenParams &params, std::span<const TokenId> context, TokenId token) {
  return RedGreenWatermark(params).color_of(context, token) ? 1 : 0;
}

TokenSeq generate_watermarked(const MarkovLM &lm, const RedGreenParams &params, const TokenSeq &prompt,
                              std::size_t length, RngStream &rng) {
  return RedGreenWatermark(params).generate(lm, prompt, length, rng);
}

WatermarkTrace color_trace(const RedGreenParams &params, const TokenSeq &text) {
  return RedGreenWatermark(params).trace(text);
}

DetectionReport detect_z(const RedGreenParams &params, const TokenSeq &text) {
  return RedGreenWatermark(params).detect(text);
}

} // namespace wmlab
