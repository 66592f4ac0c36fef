#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace ppm {

/// Platform-independent random source.
///
/// std::mt19937_64 output is fully specified by the standard, but the
/// std::*_distribution adaptors are not, so draws are derived here directly
/// from the engine to keep runs bit-reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi] (inclusive), unbiased.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  bool bernoulli(double p) { return uniform() < p; }
  /// Index drawn with probability proportional to `weights`.
  std::size_t categorical(std::span<const double> weights);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i - 1)));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer; used to derive independent child seeds from a root.
std::uint64_t mix_seed(std::uint64_t x);
/// Child seed `index` of stream `stream` under `root`:
/// mix_seed(mix_seed(root ^ stream_tag) + index).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index);

}  // namespace ppm
