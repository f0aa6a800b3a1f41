#pragma once

// Keyed, splittable pseudo-random streams.
//
// A single 64-bit private key determines every draw made by a transform.
// Streams are derived from (key, label) pairs; each stream is a plain value
// that advances in place and never touches global state. Copies evolve
// independently.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace linac {

/// 64-bit secret seed of the keyed transforms.
struct PrivateKey {
  std::int64_t value = 0;

  friend bool operator==(PrivateKey, PrivateKey) = default;
};

/// Purpose tag folded into a stream's seed.
enum class StreamPurpose : std::uint8_t {
  kInit,
  kShuffleEpoch,
  kShuffle,
  kAttack,
  kTraining,
  kData,
};

struct StreamLabel {
  StreamPurpose purpose = StreamPurpose::kInit;
  std::uint64_t index = 0;

  static constexpr StreamLabel init() { return {StreamPurpose::kInit, 0}; }
  static constexpr StreamLabel shuffle_epoch(std::uint64_t epoch) {
    return {StreamPurpose::kShuffleEpoch, epoch};
  }
  static constexpr StreamLabel shuffle() { return {StreamPurpose::kShuffle, 0}; }
  static constexpr StreamLabel attack(std::uint64_t i = 0) {
    return {StreamPurpose::kAttack, i};
  }
  static constexpr StreamLabel training(std::uint64_t i = 0) {
    return {StreamPurpose::kTraining, i};
  }
  static constexpr StreamLabel data(std::uint64_t i = 0) {
    return {StreamPurpose::kData, i};
  }
};

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

/// SplitMix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

constexpr std::string_view purpose_name(StreamPurpose p) {
  switch (p) {
    case StreamPurpose::kInit: return "init";
    case StreamPurpose::kShuffleEpoch: return "shuffle-epoch";
    case StreamPurpose::kShuffle: return "shuffle";
    case StreamPurpose::kAttack: return "attack";
    case StreamPurpose::kTraining: return "training";
    case StreamPurpose::kData: return "data";
  }
  return "unknown";
}

constexpr std::uint64_t label_hash(StreamLabel label) {
  return mix64(fnv1a(purpose_name(label.purpose)) ^ mix64(label.index + kGolden));
}

}  // namespace detail

/// SplitMix64 stream. Value type: copying forks an identical sequence.
class RngStream {
 public:
  constexpr RngStream() = default;
  constexpr explicit RngStream(std::uint64_t state) : state_(state) {}

  constexpr std::uint64_t state() const { return state_; }

  constexpr std::uint64_t next_u64() {
    state_ += detail::kGolden;
    return detail::mix64(state_);
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller on two uniforms; the sine branch is dropped.
  double next_gaussian() {
    const double u1 = 1.0 - next_uniform();  // (0, 1]
    const double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Unbiased integer in [0, bound). bound must be > 0.
  std::uint64_t next_below(std::uint64_t bound) {
    // Lemire's multiply-shift with rejection.
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Child stream keyed by `tag`; the parent is not advanced.
  constexpr RngStream fork(std::uint64_t tag) const {
    return RngStream(detail::mix64(state_ ^ detail::mix64(tag + detail::kGolden)));
  }

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t state_ = 0;
};

inline constexpr RngStream derive_stream(PrivateKey key, StreamLabel label) {
  const auto k = static_cast<std::uint64_t>(key.value);
  return RngStream(detail::mix64(k) ^ detail::label_hash(label));
}

/// Fisher-Yates shuffle of 0..n-1.
inline std::vector<std::size_t> permutation(RngStream& s, std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(s.next_below(i));
    std::swap(out[i - 1], out[j]);
  }
  return out;
}

}  // namespace linac
