#include "wmlab/core.hpp"

#include <numbers>

namespace wmlab {

const char *to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::InvalidArgument: return "InvalidArgument";
  case ErrorCode::LengthMismatch: return "LengthMismatch";
  case ErrorCode::EmptyCorpus: return "EmptyCorpus";
  case ErrorCode::Io: return "Io";
  case ErrorCode::TextTooShort: return "TextTooShort";
  case ErrorCode::NoKeptPositions: return "NoKeptPositions";
  case ErrorCode::ConstantScores: return "ConstantScores";
  case ErrorCode::ConstantColors: return "ConstantColors";
  case ErrorCode::TooFewKept: return "TooFewKept";
  case ErrorCode::SegmentTooShort: return "SegmentTooShort";
  case ErrorCode::MixedSchemes: return "MixedSchemes";
  case ErrorCode::EmptyDataset: return "EmptyDataset";
  case ErrorCode::NoSpoofsPassed: return "NoSpoofsPassed";
  case ErrorCode::InvalidMoments: return "InvalidMoments";
  }
  return "Unknown";
}

std::uint64_t context_digest_sum(std::span<const TokenId> context, std::size_t h) {
  if (context.size() != h) {
    throw Error(ErrorCode::LengthMismatch,
                "context has " + std::to_string(context.size()) + " tokens, expected " + std::to_string(h));
  }
  std::uint64_t sum = 0;
  for (TokenId t : context) sum += t;
  return digest_of_sum(sum);
}

std::uint64_t ordered_digest(std::span<const TokenId> window) noexcept {
  std::uint64_t acc = 0x243f6a8885a308d3ULL ^ window.size();
  for (TokenId t : window) acc = combine64(acc, t);
  return acc;
}

std::uint64_t RngStream::below(std::uint64_t n) noexcept {
  if (n <= 1) return 0;
  unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(next_u64()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double RngStream::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform_open();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t hash_name(std::string_view name) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

} // namespace wmlab
