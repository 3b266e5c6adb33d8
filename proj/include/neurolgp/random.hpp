#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace neurolgp {

/// Seeded random source with platform-independent conversions.
///
/// The standard distributions are implementation-defined, so every draw used by
/// the library goes through the conversions below. Copying an Rng snapshots its
/// stream, which is how training checkpoints are made resumable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  /// Uniform integer in [lo, hi].
  std::size_t between(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal draw (Box-Muller, no cached second value).
  double normal();

  /// Index drawn from unnormalized non-negative weights.
  std::size_t categorical(std::span<const double> weights);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  bool operator==(const Rng&) const = default;

 private:
  std::mt19937_64 engine_;
};

/// Mixes a master seed with a list of tags into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags);

}  // namespace neurolgp
