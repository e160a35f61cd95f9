#include "metastack/rng.hpp"

#include <cmath>

namespace metastack {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

std::uint64_t RngStream::next_u64() {
  return mix64(key_ + (counter_++) * kGolden);
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

double RngStream::uniform() {
  // (0, 1]: strictly positive so log() is always finite.
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double RngStream::gaussian() {
  double u1 = uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

RngStream RngStream::substream(std::string_view label) const {
  return RngStream(mix64(key_ ^ (fnv1a64(label) * kGolden)));
}

RngStream RngStream::substream(std::uint64_t index) const {
  return RngStream(mix64(key_ ^ mix64(index + 0x5851F42D4C957F2Dull)));
}

RngStream root_stream(std::uint64_t seed, std::string_view label) {
  return RngStream(mix64(seed)).substream(label);
}

}  // namespace metastack
