#pragma once

#include <cstdint>
#include <cstddef>
#include <string_view>

namespace metastack {

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(std::string_view s);

// Counter-based random stream: draw i is a pure function of (key, i), so a
// stream can be forked by name or index without consuming any state from its
// parent. One root seed spawns named substreams (env, policy-init,
// rollout workers, diagnostics) and parallel workers cannot perturb
// reproducibility.
class RngStream {
 public:
  RngStream() : key_(0) {}
  explicit RngStream(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64();
  std::uint64_t uniform_index(std::uint64_t n);  // [0, n)
  double uniform();                              // (0, 1]
  double uniform(double lo, double hi);
  double gaussian();                             // N(0,1), Box-Muller, 2 draws

  // Forks are independent of the draws already made on this stream.
  RngStream substream(std::string_view label) const;
  RngStream substream(std::uint64_t index) const;

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

RngStream root_stream(std::uint64_t seed, std::string_view label);

}  // namespace metastack
