#pragma once

#include <cstdint>

namespace lrs {

/// Counter-based random stream keyed by (seed, stream id).
///
/// Draw n of stream s depends only on (seed, s, n), so streams can be
/// consumed from any thread in any order and still reproduce bit-exactly.
class KeyedStream {
public:
  KeyedStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  /// Raw 64-bit value for an explicit counter.
  std::uint64_t bits_at(std::uint64_t counter) const;

  std::uint64_t next_bits() { return bits_at(counter_++); }
  /// Uniform in the open interval (0, 1).
  double uniform();
  double gaussian();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t counter() const { return counter_; }

private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Stream ids reserved for particular draws, so two uses never collide.
namespace streams {
inline constexpr std::uint64_t subspace = 0xA000'0000'0000'0000ULL;
inline constexpr std::uint64_t weights = 0xA100'0000'0000'0000ULL;
inline constexpr std::uint64_t support = 0xA200'0000'0000'0000ULL;
inline constexpr std::uint64_t values = 0xA300'0000'0000'0000ULL;
inline constexpr std::uint64_t samples = 0xB000'0000'0000'0000ULL;
inline constexpr std::uint64_t dp_noise = 0xC000'0000'0000'0000ULL;
inline constexpr std::uint64_t init = 0xD000'0000'0000'0000ULL;
} // namespace streams

} // namespace lrs
