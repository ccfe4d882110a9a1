#pragma once

#include <cstdint>
#include <string_view>

namespace qppo {

/// Counter-based 64-bit generator. Output n of stream (seed, stream_id) is
/// splitmix64(key + n * golden) where key mixes seed and stream_id, so any
/// draw is reproducible from (seed, stream_id, draw index) alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream_id = 0);

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Unbiased integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);
  /// Box-Muller without caching: each call consumes exactly two draws.
  double normal(double mean = 0.0, double stddev = 1.0);

  /// Child stream keyed by a label; distinct labels give unrelated streams.
  Rng derive(std::string_view label) const;
  Rng derive(std::string_view label, std::uint64_t index) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }
  std::uint64_t draws() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);

/// In-place Fisher-Yates driven by Rng::below (platform independent, unlike
/// std::shuffle).
template <typename RandomIt>
void shuffle(RandomIt first, RandomIt last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = rng.below(i);
    using std::swap;
    swap(first[i - 1], first[j]);
  }
}

}  // namespace qppo
