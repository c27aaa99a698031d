#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace xma {

/// FNV-1a, 64 bit. Stable across platforms and runs.
std::uint64_t stable_hash(std::string_view bytes);

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Seed for one (run seed, item, index) triple. Adding items never perturbs
/// the seeds of other items.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view item_id,
                          std::uint64_t index);

/// Seeded PRNG on top of mt19937_64, whose output sequence is fixed by the
/// standard. Distributions are implemented here rather than with <random>
/// distributions, which are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Uniform in [0, 1) with 53 random bits.
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  bool bernoulli(double p) { return uniform01() < p; }

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      auto j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace xma
