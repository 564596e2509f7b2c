#pragma once

// Exact Hoeffding decomposition of symmetric U-statistics over a finite
// alphabet: the projections g_k, the degenerate kernels psi_s, both variance
// formulas and the Hoeffding rank.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ustat/combinatorics.hpp"
#include "ustat/errors.hpp"
#include "ustat/tensor.hpp"

namespace ustat {

/// Threshold on exact variances for the Hoeffding rank.
inline constexpr double kRankTolerance = 1e-10;

/// Cap on m^n for exhaustive enumeration of all samples.
inline constexpr std::uint64_t kMaxEnumeratedSamples = 1'000'000;

/// g_k(y_1..y_k) = E[psi(y_1..y_k, X_1..X_{p-k})]: the trailing p-k
/// coordinates are integrated out against mu.
inline Tensor compute_g(const Tensor& psi, const DiscreteMeasure& mu, int k) {
  detail::require_alphabet(psi, mu);
  const int p = psi.order();
  if (k < 0 || k > p) {
    throw ParameterError("projection order " + std::to_string(k) + " outside [0, " + std::to_string(p) + "]");
  }
  const auto w = mu.product_weights(p - k);
  Tensor out = Tensor::zeros(k, psi.alphabet());
  const std::size_t inner = w.size();
  for (std::size_t y = 0; y < out.size(); ++y) {
    double acc = 0.0;
    const std::size_t base = y * inner;
    for (std::size_t z = 0; z < inner; ++z) acc += psi[base + z] * w[z];
    out[y] = acc;
  }
  return out;
}

inline Tensor compute_g(const SymmetricKernel& psi, const DiscreteMeasure& mu, int k) {
  return compute_g(psi.tensor(), mu, k);
}

/// The projections and degenerate components of one kernel.
struct HoeffdingSet {
  SymmetricKernel source;
  std::vector<Tensor> g;                ///< g_0 .. g_p, g_k of order k
  std::vector<SymmetricKernel> psi;     ///< psi_0 .. psi_p, psi_0 = g_0
  double route_discrepancy = 0.0;       ///< max |alternating-sum route - recursive route|
  double max_degeneracy_defect = 0.0;   ///< over psi_1 .. psi_p

  int order() const noexcept { return source.order(); }
  double mean() const { return g.front().scalar_value(); }
};

namespace detail {

/// Sum over all k-subsets I of the s coordinates of f(x_I), for every
/// subset size k, returned per k. Coordinates are taken from `symbols`.
template <typename Lookup>
double subset_sum(std::span<const int> symbols, int k, Lookup&& lookup) {
  double acc = 0.0;
  std::vector<int> sub(static_cast<std::size_t>(k));
  for_each_subset(static_cast<int>(symbols.size()), k, [&](const std::vector<int>& idx) {
    for (int j = 0; j < k; ++j) sub[static_cast<std::size_t>(j)] = symbols[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
    acc += lookup(std::span<const int>(sub));
  });
  return acc;
}

}  // namespace detail

/// Full decomposition. Computes psi_s both as the alternating sum over the g_k
/// and through the recursion on lower psi_k; the two routes must agree.
inline HoeffdingSet decompose(const SymmetricKernel& kernel, const DiscreteMeasure& mu) {
  detail::require_alphabet(kernel.tensor(), mu);
  const int p = kernel.order();
  const int m = kernel.alphabet();

  std::vector<Tensor> g;
  g.reserve(static_cast<std::size_t>(p + 1));
  for (int k = 0; k <= p; ++k) g.push_back(compute_g(kernel, mu, k));
  const double g0 = g[0].scalar_value();

  // psi_s = sum_k (-1)^{s-k} sum_{|I|=k} g_k(x_I)
  std::vector<Tensor> alternating;
  alternating.push_back(Tensor::scalar(g0, m));
  for (int s = 1; s <= p; ++s) {
    Tensor out = Tensor::zeros(s, m);
    std::vector<int> sym(static_cast<std::size_t>(s));
    for (std::size_t i = 0; i < out.size(); ++i) {
      out.unravel(i, sym);
      double acc = 0.0;
      for (int k = 0; k <= s; ++k) {
        const double sign = ((s - k) % 2 == 0) ? 1.0 : -1.0;
        acc += sign * detail::subset_sum(sym, k, [&](std::span<const int> sub) { return g[static_cast<std::size_t>(k)].at(sub); });
      }
      out[i] = acc;
    }
    alternating.push_back(std::move(out));
  }

  // psi_s = g_s - g_0 - sum_{k=1}^{s-1} sum_{|I|=k} psi_k(x_I)
  std::vector<Tensor> recursive;
  recursive.push_back(Tensor::scalar(g0, m));
  for (int s = 1; s <= p; ++s) {
    Tensor out = Tensor::zeros(s, m);
    std::vector<int> sym(static_cast<std::size_t>(s));
    for (std::size_t i = 0; i < out.size(); ++i) {
      out.unravel(i, sym);
      double acc = g[static_cast<std::size_t>(s)][i] - g0;
      for (int k = 1; k < s; ++k) {
        acc -= detail::subset_sum(sym, k, [&](std::span<const int> sub) { return recursive[static_cast<std::size_t>(k)].at(sub); });
      }
      out[i] = acc;
    }
    recursive.push_back(std::move(out));
  }

  double discrepancy = 0.0;
  double defect = 0.0;
  for (int s = 1; s <= p; ++s) {
    discrepancy = std::max(discrepancy, max_abs_difference(alternating[static_cast<std::size_t>(s)], recursive[static_cast<std::size_t>(s)]));
    defect = std::max(defect, degeneracy_defect(alternating[static_cast<std::size_t>(s)], mu).max_abs());
  }
  const double scale = std::max(1.0, kernel.tensor().max_abs());
  if (discrepancy > 1e-10 * scale) {
    throw ContractViolation("hoeffding.routes", "alternating-sum and recursive kernels differ by " + std::to_string(discrepancy));
  }
  if (defect > kDegeneracyTolerance * scale) {
    throw ContractViolation("hoeffding.degeneracy", "component kernel has degeneracy defect " + std::to_string(defect));
  }

  std::vector<SymmetricKernel> psi;
  psi.reserve(alternating.size());
  for (auto& t : alternating) psi.push_back(SymmetricKernel::trusted(std::move(t)));
  return HoeffdingSet{kernel, std::move(g), std::move(psi), discrepancy, defect};
}

/// Top component psi_p of the decomposition of an arbitrary symmetric kernel.
inline SymmetricKernel top_component(const SymmetricKernel& kernel, const DiscreteMeasure& mu) {
  if (kernel.order() == 0) return kernel;
  return decompose(kernel, mu).psi.back();
}

/// Symbol counts of a sample.
inline std::vector<std::int64_t> symbol_counts(std::span<const int> sample, int alphabet) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(alphabet), 0);
  for (int x : sample) {
    if (x < 0 || x >= alphabet) throw DimensionError("sample symbol outside the alphabet");
    ++counts[static_cast<std::size_t>(x)];
  }
  return counts;
}

/// J_p(psi) from symbol counts: sums psi over multisets of symbols weighted by
/// the number of index p-subsets realising each multiset. Cost O(m^p), not O(n^p).
inline double ustat_from_counts(const Tensor& psi, std::span<const std::int64_t> counts) {
  const int p = psi.order();
  if (p == 0) return 0.0;
  const int m = psi.alphabet();
  std::int64_t n = 0;
  for (auto c : counts) n += c;
  if (n < p) throw ParameterError("sample size " + std::to_string(n) + " below kernel order " + std::to_string(p));

  std::vector<int> tuple;
  tuple.reserve(static_cast<std::size_t>(p));
  double total = 0.0;
  // depth-first over symbols, choosing a multiplicity for each
  auto recurse = [&](auto&& self, int symbol, int remaining, double weight) -> void {
    if (remaining == 0) {
      total += weight * psi.at(tuple);
      return;
    }
    if (symbol == m) return;
    const std::int64_t available = counts[static_cast<std::size_t>(symbol)];
    for (int k = 0; k <= remaining && k <= available; ++k) {
      for (int j = 0; j < k; ++j) tuple.push_back(symbol);
      self(self, symbol + 1, remaining - k, weight * binomial(available, k));
      for (int j = 0; j < k; ++j) tuple.pop_back();
    }
  };
  recurse(recurse, 0, p, 1.0);
  return total;
}

/// The U-statistic J_p(psi): the sum of psi over all increasing index p-tuples.
/// Order 0 gives 0.
inline double ustat_value(const Tensor& psi, std::span<const int> sample) {
  if (psi.order() == 0) return 0.0;
  if (static_cast<int>(sample.size()) < psi.order()) {
    throw ParameterError("sample size " + std::to_string(sample.size()) + " below kernel order " + std::to_string(psi.order()));
  }
  const auto counts = symbol_counts(sample, psi.alphabet());
  return ustat_from_counts(psi, counts);
}

inline double ustat_value(const SymmetricKernel& psi, std::span<const int> sample) {
  return ustat_value(psi.tensor(), sample);
}

/// sum_{s=0}^p C(n-s, p-s) J_s(psi_s) with the s = 0 summand taken as the mean
/// C(n, p) psi_0 itself.
inline double hoeffding_reconstruction(const HoeffdingSet& set, std::span<const int> sample) {
  const int p = set.order();
  const auto n = static_cast<long long>(sample.size());
  if (n < p) throw ParameterError("sample size below kernel order");
  const auto counts = symbol_counts(sample, set.source.alphabet());
  double total = binomial(n, p) * set.mean();
  for (int s = 1; s <= p; ++s) {
    total += binomial(n - s, p - s) * ustat_from_counts(set.psi[static_cast<std::size_t>(s)].tensor(), counts);
  }
  return total;
}

/// |J_p(psi)(x) - sum_s C(n-s, p-s) J_s(psi_s)(x)|.
inline double reconstruct_check(const HoeffdingSet& set, std::span<const int> sample) {
  return std::abs(ustat_value(set.source, sample) - hoeffding_reconstruction(set, sample));
}

inline double reconstruct_check(const SymmetricKernel& psi, const DiscreteMeasure& mu, std::span<const int> sample) {
  return reconstruct_check(decompose(psi, mu), sample);
}

/// Variance of J_p(psi) by the two classical routes.
struct VariancePair {
  double hoeffding = 0.0;  ///< sum_s C(n-s,p-s)^2 C(n,s) Var(psi_s)
  double g_based = 0.0;    ///< C(n,p) sum_k C(p,k) C(n-p,p-k) Var(g_k)
  double lower_bound = 0.0;  ///< C(n,p) Var(psi(X_1..X_p))
};

inline double component_variance(const Tensor& f, const DiscreteMeasure& mu) {
  const double mean = expectation(f, mu);
  return std::max(0.0, inner_product(f, f, mu) - mean * mean);
}

inline VariancePair variance(const HoeffdingSet& set, const DiscreteMeasure& mu, long long n) {
  const int p = set.order();
  if (n < p) throw ParameterError("sample size " + std::to_string(n) + " below kernel order " + std::to_string(p));
  VariancePair out;
  for (int s = 1; s <= p; ++s) {
    const double v = component_variance(set.psi[static_cast<std::size_t>(s)].tensor(), mu);
    const double c = binomial(n - s, p - s);
    out.hoeffding += c * c * binomial(n, s) * v;
  }
  double acc = 0.0;
  for (int k = 1; k <= p; ++k) {
    acc += binomial(p, k) * binomial(n - p, p - k) * component_variance(set.g[static_cast<std::size_t>(k)], mu);
  }
  out.g_based = binomial(n, p) * acc;
  out.lower_bound = binomial(n, p) * component_variance(set.source.tensor(), mu);

  if (std::abs(out.hoeffding - out.g_based) > 1e-9 * (1.0 + out.g_based)) {
    throw ContractViolation("hoeffding.variance", "component and projection formulas disagree: " +
                                                      std::to_string(out.hoeffding) + " vs " + std::to_string(out.g_based));
  }
  const double slack = 1e-9 * (1.0 + out.lower_bound);
  if (out.hoeffding + slack < out.lower_bound || out.g_based + slack < out.lower_bound) {
    throw ContractViolation("hoeffding.variance_lower_bound", "variance below C(n,p) Var(psi)");
  }
  return out;
}

inline VariancePair variance(const SymmetricKernel& psi, const DiscreteMeasure& mu, long long n) {
  return variance(decompose(psi, mu), mu, n);
}

/// Smallest s with Var(psi_s) > kRankTolerance, cross-checked against the
/// smallest k with Var(g_k) > kRankTolerance; nullopt if every variance vanishes.
inline std::optional<int> hoeffding_rank(const SymmetricKernel& kernel, const DiscreteMeasure& mu) {
  // centering leaves every psi_s (s >= 1) and Var(g_k) unchanged; done for the record
  const double mean = expectation(kernel.tensor(), mu);
  const auto centered = SymmetricKernel::trusted(kernel.tensor() - Tensor::constant(kernel.order(), kernel.alphabet(), mean));
  const auto set = decompose(centered, mu);
  std::optional<int> by_psi;
  std::optional<int> by_g;
  for (int s = 1; s <= set.order(); ++s) {
    if (!by_psi && component_variance(set.psi[static_cast<std::size_t>(s)].tensor(), mu) > kRankTolerance) by_psi = s;
    if (!by_g && component_variance(set.g[static_cast<std::size_t>(s)], mu) > kRankTolerance) by_g = s;
  }
  if (by_psi != by_g) {
    throw ContractViolation("hoeffding.rank", "component and projection ranks disagree");
  }
  return by_psi;
}

/// Calls f(sample, probability) for every sample in {0..m-1}^n.
template <typename F>
void for_each_sample(const DiscreteMeasure& mu, int n, F&& f) {
  const int m = mu.alphabet();
  double states = std::pow(static_cast<double>(m), n);
  if (states > static_cast<double>(kMaxEnumeratedSamples)) {
    throw CapacityError("exhaustive enumeration of " + std::to_string(m) + "^" + std::to_string(n) +
                        " samples exceeds the 10^6 cap");
  }
  std::vector<int> x(static_cast<std::size_t>(n), 0);
  while (true) {
    double prob = 1.0;
    for (int v : x) prob *= mu[static_cast<std::size_t>(v)];
    f(static_cast<std::span<const int>>(x), prob);
    int pos = n - 1;
    while (pos >= 0 && x[static_cast<std::size_t>(pos)] == m - 1) {
      x[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) return;
    ++x[static_cast<std::size_t>(pos)];
  }
}

}  // namespace ustat
