#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace camtrap {

/// SplitMix64 finaliser. Used to derive independent stream seeds from (seed, key) pairs.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key) noexcept;

/// Portable deterministic generator.
///
/// std::mt19937_64 has a fully specified output sequence, but the standard
/// distributions and std::shuffle do not, so every derived quantity (uniform
/// doubles, bounded integers, Gaussians, permutations) is computed here from raw
/// engine output. Results are bitwise reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace camtrap
