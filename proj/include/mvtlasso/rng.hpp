#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace mvtlasso {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A generator is identified by a 64-bit key (the user seed) and a 64-bit
/// stream id; the block counter walks the remaining 64 bits of the counter.
/// Distinct (seed, stream) pairs give statistically independent sequences,
/// so every (view, column) pair can own a stream and be sampled in any order.
/// Satisfies UniformRandomBitGenerator.
class Philox {
 public:
  using result_type = std::uint64_t;

  explicit Philox(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (lane_ == 2) {
      block_ = generate(counter_++);
      lane_ = 0;
    }
    const auto lo = block_[2 * lane_];
    const auto hi = block_[2 * lane_ + 1];
    ++lane_;
    return (static_cast<std::uint64_t>(hi) << 32) | lo;
  }

  /// Uniform double in the open interval (0, 1).
  double uniform() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

 private:
  using Block = std::array<std::uint32_t, 4>;

  static void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept {
    const std::uint64_t prod = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(prod >> 32);
    lo = static_cast<std::uint32_t>(prod);
  }

  Block generate(std::uint64_t block_index) const noexcept {
    Block ctr{static_cast<std::uint32_t>(block_index), static_cast<std::uint32_t>(block_index >> 32),
              static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    std::array<std::uint32_t, 2> key = key_;
    for (int round = 0; round < 10; ++round) {
      std::uint32_t hi0, lo0, hi1, lo1;
      mulhilo(0xD2511F53u, ctr[0], hi0, lo0);
      mulhilo(0xCD9E8D57u, ctr[2], hi1, lo1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += 0x9E3779B9u;
      key[1] += 0xBB67AE85u;
    }
    return ctr;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  Block block_{};
  int lane_ = 2;
};

/// Packs a purpose tag and two indices into one stream id. Purpose tags keep
/// e.g. signal loadings and mixing matrices of the same view apart.
constexpr std::uint64_t stream_id(std::uint32_t purpose, std::uint32_t a, std::uint32_t b = 0) noexcept {
  return (static_cast<std::uint64_t>(purpose & 0xFFu) << 56) |
         (static_cast<std::uint64_t>(a & 0xFFFFFFu) << 32) | b;
}

namespace stream_purpose {
inline constexpr std::uint32_t kGeneric = 0;
inline constexpr std::uint32_t kTheta = 1;
inline constexpr std::uint32_t kSignal = 2;
inline constexpr std::uint32_t kNoise = 3;
inline constexpr std::uint32_t kMixing = 4;
inline constexpr std::uint32_t kIca = 5;
inline constexpr std::uint32_t kRank = 6;
inline constexpr std::uint32_t kSubsample = 7;
inline constexpr std::uint32_t kBench = 8;
}  // namespace stream_purpose

}  // namespace mvtlasso
