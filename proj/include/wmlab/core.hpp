#pragma once

// Shared domain types, the keyed mixing function and counter-based randomness.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wmlab {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

struct WatermarkKey {
  std::uint64_t value = 0;
};

enum class ErrorCode {
  InvalidArgument,
  LengthMismatch,
  EmptyCorpus,
  Io,
  TextTooShort,
  NoKeptPositions,
  ConstantScores,
  ConstantColors,
  TooFewKept,
  SegmentTooShort,
  MixedSchemes,
  EmptyDataset,
  NoSpoofsPassed,
  InvalidMoments,
};

const char *to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t combine64(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a ^ (mix64(b) + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

/// Keyed pseudorandom function: two mixing rounds over key XOR digest.
constexpr std::uint64_t prf_hash(WatermarkKey key, std::uint64_t context_digest) noexcept {
  return mix64(mix64(key.value ^ context_digest) + 0x9e3779b97f4a7c15ULL);
}

/// SumHash digest: the mixed, unweighted sum of the token ids in the window.
/// Throws LengthMismatch when the window does not hold exactly `h` tokens.
std::uint64_t context_digest_sum(std::span<const TokenId> context, std::size_t h);

/// Digest of a raw token sum. Shared by SumHash and SelfHash so that
/// greenlists can be cached by sum.
constexpr std::uint64_t digest_of_sum(std::uint64_t sum) noexcept { return mix64(sum + 0x5851f42d4c957f2dULL); }

/// Order-sensitive 64-bit digest of a token window (dedup keys, n-gram tables).
std::uint64_t ordered_digest(std::span<const TokenId> window) noexcept;

/// Counter-based random stream: draw i is a pure function of (seed, stream, i).
class RngStream {
public:
  RngStream(std::uint64_t seed, std::uint64_t stream) noexcept
      : base_(combine64(mix64(seed), stream)), seed_(seed), stream_(stream) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept { return mix64(base_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }

  /// Uniform in [0, 1) with 53 bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in the open interval (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n) noexcept;

  double normal() noexcept;
  double exponential() noexcept { return -std::log(uniform_open()); }

  /// Derived independent stream.
  RngStream fork(std::uint64_t tag) const noexcept { return RngStream(combine64(seed_, stream_), tag); }

private:
  std::uint64_t base_;
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// In-place Fisher-Yates shuffle driven by an RngStream.
template <typename T> void shuffle(std::vector<T> &v, RngStream &rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

/// Trial seed derivation: mix(masterSeed, experimentId, trialIndex).
constexpr std::uint64_t trial_seed(std::uint64_t master, std::uint64_t experiment, std::uint64_t trial) noexcept {
  return combine64(combine64(mix64(master), experiment), trial);
}

std::uint64_t hash_name(std::string_view name) noexcept;

} // namespace wmlab
