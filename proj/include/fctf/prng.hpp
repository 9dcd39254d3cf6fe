#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace fctf {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
/// Stateless: the same (counter, key) always yields the same block.
struct Philox4x32 {
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Block apply(Block ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Sequential view over a Philox key. Streams are derived hierarchically
/// (corpus seed -> identity -> clip -> purpose) with child(), so any leaf can
/// be regenerated without replaying its siblings.
class RandomStream {
 public:
  explicit constexpr RandomStream(std::uint64_t key) : key_(key) {}

  [[nodiscard]] constexpr std::uint64_t key() const { return key_; }

  [[nodiscard]] constexpr RandomStream child(std::uint64_t tag) const {
    const auto block = Philox4x32::apply(
        {static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32), 0x243F6A88u,
         0x85A308D3u},
        split(key_));
    return RandomStream(std::uint64_t{block[0]} | (std::uint64_t{block[1]} << 32));
  }

  constexpr std::uint32_t next_u32() {
    if (used_ == 4) {
      buffer_ = Philox4x32::apply({static_cast<std::uint32_t>(counter_),
                                   static_cast<std::uint32_t>(counter_ >> 32), 0u, 0u},
                                  split(key_));
      ++counter_;
      used_ = 0;
    }
    return buffer_[used_++];
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    const std::uint64_t hi = next_u32() >> 5;  // 27 bits
    const std::uint64_t lo = next_u32() >> 6;  // 26 bits
    return static_cast<double>((hi << 26) | lo) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<double>(hi - lo + 1);
    auto v = lo + static_cast<std::int64_t>(std::floor(uniform() * span));
    return v > hi ? hi : v;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  static constexpr Philox4x32::Key split(std::uint64_t k) {
    return {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  Philox4x32::Block buffer_{};
  int used_ = 4;
};

/// 64-bit FNV-1a, used for manifest hashes and parameter checksums.
class Fnv1a64 {
 public:
  void update(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      hash_ ^= bytes[i];
      hash_ *= 0x100000001B3ull;
    }
  }
  [[nodiscard]] std::uint64_t digest() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xCBF29CE484222325ull;
};

}  // namespace fctf
