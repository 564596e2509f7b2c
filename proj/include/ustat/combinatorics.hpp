#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "ustat/errors.hpp"

namespace ustat {

namespace detail {

inline std::uint64_t exact_binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t result = 1;
  for (std::uint64_t j = 1; j <= k; ++j) {
    // result * (n - k + j) is divisible by j at every step
    result = result * (n - k + j) / j;
  }
  return result;
}

}  // namespace detail

/// log C(n, k) via log-gamma; -inf when the coefficient vanishes.
inline double log_binomial(double n, double k) {
  if (k < 0 || k > n) return -INFINITY;
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

/// Binomial coefficient C(n, k) as a double, zero outside 0 <= k <= n.
///
/// Arguments up to 20 are evaluated in exact integer arithmetic; small k uses
/// a running product and everything else goes through log-gamma.
inline double binomial(long long n, long long k) {
  if (n < 0 || k < 0 || k > n) return 0.0;
  if (n <= 20) {
    return static_cast<double>(detail::exact_binomial(static_cast<std::uint64_t>(n),
                                                      static_cast<std::uint64_t>(k)));
  }
  const long long kk = std::min(k, n - k);
  if (kk <= 30) {
    double result = 1.0;
    for (long long j = 1; j <= kk; ++j) {
      result *= static_cast<double>(n - kk + j) / static_cast<double>(j);
    }
    return result < 9e15 ? std::round(result) : result;
  }
  return std::exp(log_binomial(static_cast<double>(n), static_cast<double>(k)));
}

inline double factorial(int n) {
  if (n < 0) throw ParameterError("factorial of a negative integer");
  if (n <= 20) {
    std::uint64_t f = 1;
    for (int j = 2; j <= n; ++j) f *= static_cast<std::uint64_t>(j);
    return static_cast<double>(f);
  }
  return std::exp(std::lgamma(n + 1.0));
}

/// Multinomial coefficient total! / prod(parts!); zero if any part is negative
/// or the parts do not add up to total.
inline double multinomial(int total, std::initializer_list<int> parts) {
  int sum = 0;
  for (int part : parts) {
    if (part < 0) return 0.0;
    sum += part;
  }
  if (sum != total || total < 0) return 0.0;
  double result = 1.0;
  int remaining = total;
  for (int part : parts) {
    result *= binomial(remaining, part);
    remaining -= part;
  }
  return result;
}

inline double log_multinomial(int total, std::initializer_list<int> parts) {
  double result = std::lgamma(total + 1.0);
  for (int part : parts) {
    if (part < 0) return -INFINITY;
    result -= std::lgamma(part + 1.0);
  }
  return result;
}

/// Calls f(const std::vector<int>&) for every strictly increasing k-subset of
/// {0, ..., n-1}, in lexicographic order.
template <typename F>
void for_each_subset(int n, int k, F&& f) {
  if (k < 0 || k > n) return;
  std::vector<int> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    f(static_cast<const std::vector<int>&>(idx));
    int pos = k - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n - k + pos) --pos;
    if (pos < 0) return;
    ++idx[static_cast<std::size_t>(pos)];
    for (int j = pos + 1; j < k; ++j) {
      idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
}

inline int ceil_half(int t) { return (t + 1) / 2; }

}  // namespace ustat
