#include "lrs/rng.hpp"

#include <cmath>
#include <numbers>

namespace lrs {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

} // namespace

std::uint64_t KeyedStream::bits_at(std::uint64_t counter) const {
  // Three rounds of mixing keep nearby keys decorrelated.
  const std::uint64_t key = splitmix64(seed_ ^ splitmix64(stream_));
  return splitmix64(key ^ splitmix64(counter + 0x632BE59BD9B4E019ULL));
}

double KeyedStream::uniform() {
  // 53 random mantissa bits, shifted off zero.
  return (static_cast<double>(next_bits() >> 11) + 0.5) * 0x1.0p-53;
}

double KeyedStream::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t KeyedStream::below(std::uint64_t n) {
  if (n <= 1) return 0;
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = next_bits();
  while (x >= limit) x = next_bits();
  return x % n;
}

} // namespace lrs
