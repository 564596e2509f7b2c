#pragma once

// Counter-based random streams. A stream is a key derived from a seed and a
// list of stream coordinates (replicate index, n-index, ...); draw k of a
// stream is a pure function of (key, k), so results never depend on the
// order in which replicates are scheduled.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>
#include <vector>

namespace ustat {

namespace detail {

inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Key for the stream addressed by (seed, coordinates...).
inline std::uint64_t stream_key(std::uint64_t seed, std::initializer_list<std::uint64_t> coordinates) {
  std::uint64_t key = detail::mix64(seed ^ 0x5851f42d4c957f2dULL);
  for (auto c : coordinates) key = detail::mix64(key ^ detail::mix64(c + 0x2545f4914f6cdd1dULL));
  return key;
}

class RandomStream {
public:
  explicit RandomStream(std::uint64_t key, std::uint64_t start = 0) noexcept : key_(key), counter_(start) {}
  RandomStream(std::uint64_t seed, std::initializer_list<std::uint64_t> coordinates)
      : RandomStream(stream_key(seed, coordinates)) {}

  std::uint64_t next_u64() noexcept {
    return detail::mix64(key_ ^ detail::mix64(counter_++));
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double a, double b) noexcept { return a + (b - a) * uniform(); }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept {
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

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) noexcept {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(bound)) % bound;
  }

  std::uint64_t counter() const noexcept { return counter_; }

private:
  std::uint64_t key_;
  std::uint64_t counter_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Inverse-CDF sampler for a finite distribution.
class CategoricalSampler {
public:
  explicit CategoricalSampler(std::span<const double> weights) : cumulative_(weights.size()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      cumulative_[i] = acc;
    }
    for (auto& c : cumulative_) c /= acc;
    cumulative_.back() = 1.0;
  }

  int operator()(RandomStream& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return static_cast<int>(std::min<std::ptrdiff_t>(it - cumulative_.begin(),
                                                     static_cast<std::ptrdiff_t>(cumulative_.size()) - 1));
  }

private:
  std::vector<double> cumulative_;
};

}  // namespace ustat
