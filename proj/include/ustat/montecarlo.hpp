#pragma once

// Replicated U-statistics, distances of their normalized law to N(0, 1) and
// log-log rate fitting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ustat/combinatorics.hpp"
#include "ustat/errors.hpp"
#include "ustat/hoeffding.hpp"
#include "ustat/normal.hpp"
#include "ustat/parallel.hpp"
#include "ustat/rng.hpp"
#include "ustat/tensor.hpp"

namespace ustat {

enum class NormalizationSource { Exact, Empirical };

inline const char* to_string(NormalizationSource s) { return s == NormalizationSource::Exact ? "exact" : "empirical"; }

struct Normalization {
  double mean = 0.0;
  double sd = 1.0;
  NormalizationSource source = NormalizationSource::Empirical;
};

/// Normalized replicate values (J - mean) / sd, one per replicate.
struct ReplicateSet {
  std::vector<double> values;
  long long n = 0;
  std::uint64_t seed = 0;
  Normalization normalization;
};

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

/// Sample mean and standard deviation (denominator R - 1).
inline MeanSd mean_sd(const std::vector<double>& v) {
  MeanSd out;
  if (v.empty()) return out;
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return out;
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return out;
}

namespace detail {

inline ReplicateSet normalize_replicates(std::vector<double> raw, long long n, std::uint64_t seed,
                                         std::optional<Normalization> exact) {
  Normalization norm;
  if (exact) {
    norm = *exact;
  } else {
    const auto ms = mean_sd(raw);
    norm = {ms.mean, ms.sd, NormalizationSource::Empirical};
  }
  if (!(norm.sd > 0.0)) throw PreconditionError("replicates have zero standard deviation; cannot normalize");
  for (auto& v : raw) v = (v - norm.mean) / norm.sd;
  return ReplicateSet{std::move(raw), n, seed, norm};
}

inline void require_replicates(long long n, int p, std::uint64_t replicates) {
  if (n < p) throw ParameterError("sample size below kernel order");
  if (replicates < 2) throw ParameterError("at least two replicates are required");
}

}  // namespace detail

/// Replicates of J_p(psi) for an i.i.d. mu-sample of size n. Replicate j
/// uses the stream (seed, j); J is evaluated from symbol counts.
inline ReplicateSet simulate(const SymmetricKernel& psi, const DiscreteMeasure& mu, long long n,
                             std::uint64_t replicates, std::uint64_t seed, NormalizationSource normalization,
                             int threads = 0) {
  detail::require_alphabet(psi.tensor(), mu);
  const int p = psi.order();
  detail::require_replicates(n, p, replicates);
  std::optional<Normalization> exact;
  if (normalization == NormalizationSource::Exact) {
    const double v = variance(psi, mu, n).hoeffding;
    if (!(v > 0.0)) throw PreconditionError("U-statistic has zero variance; exact normalization impossible");
    exact = Normalization{binomial(n, p) * expectation(psi.tensor(), mu), std::sqrt(v), NormalizationSource::Exact};
  }
  const CategoricalSampler draw(mu.weights());
  const int m = mu.alphabet();
  std::vector<double> raw(replicates);
  parallel_for(replicates, resolve_threads(threads), [&](std::size_t j) {
    RandomStream rng(seed, {static_cast<std::uint64_t>(j)});
    std::vector<std::int64_t> counts(static_cast<std::size_t>(m), 0);
    for (long long i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(draw(rng))];
    raw[j] = ustat_from_counts(psi.tensor(), counts);
  });
  return detail::normalize_replicates(std::move(raw), n, seed, exact);
}

/// Largest n for direct enumeration of p-subsets of a continuous sample.
inline long long max_enumerated_n(int p) {
  switch (p) {
    case 1: return std::numeric_limits<long long>::max();
    case 2: return 10'000;
    case 3: return 500;
    default: return 60;
  }
}

/// Replicates for a kernel evaluated pointwise. Point i of replicate j is
/// written by spec.sampler(stream_key(seed, {j}), i, ...). Only empirical
/// normalization is available.
inline ReplicateSet simulate(const ContinuousKernelSpec& spec, long long n, std::uint64_t replicates,
                             std::uint64_t seed, NormalizationSource normalization, int threads = 0) {
  if (normalization == NormalizationSource::Exact) {
    throw ConfigurationError("exact normalization needs a discrete kernel; use empirical normalization");
  }
  const int p = spec.order;
  detail::require_replicates(n, p, replicates);
  if (p < 1) throw ParameterError("kernel order must be positive");
  if (n > max_enumerated_n(p)) {
    throw CapacityError("direct enumeration caps n at " + std::to_string(max_enumerated_n(p)) + " for order " +
                        std::to_string(p));
  }
  const int dim = spec.dimension;
  std::vector<double> raw(replicates);
  parallel_for(replicates, resolve_threads(threads), [&](std::size_t j) {
    const auto key = stream_key(seed, {static_cast<std::uint64_t>(j)});
    std::vector<double> points(static_cast<std::size_t>(n * dim));
    for (long long i = 0; i < n; ++i) {
      spec.sampler(key, static_cast<std::uint64_t>(i),
                   std::span<double>(points.data() + i * dim, static_cast<std::size_t>(dim)));
    }
    std::vector<double> args(static_cast<std::size_t>(p * dim));
    double total = 0.0;
    for_each_subset(static_cast<int>(n), p, [&](const std::vector<int>& idx) {
      for (int a = 0; a < p; ++a) {
        std::copy_n(points.data() + static_cast<std::size_t>(idx[static_cast<std::size_t>(a)]) * dim, dim,
                    args.data() + static_cast<std::size_t>(a) * dim);
      }
      total += spec.evaluator(args);
    });
    raw[j] = total;
  });
  return detail::normalize_replicates(std::move(raw), n, seed, std::nullopt);
}

/// Wraps already-computed raw statistics (e.g. subgraph counts).
inline ReplicateSet replicates_from_values(std::vector<double> raw, long long n, std::uint64_t seed,
                                           std::optional<Normalization> exact = std::nullopt) {
  if (raw.size() < 2) throw ParameterError("at least two replicates are required");
  return detail::normalize_replicates(std::move(raw), n, seed, exact);
}

struct DistanceEstimate {
  double estimate = 0.0;
  double bootstrap_se = 0.0;
};

inline constexpr int kBootstrapResamples = 200;
inline constexpr std::size_t kMinDistanceReplicates = 100;

namespace detail {

inline std::vector<double> normal_scores(std::size_t count) {
  std::vector<double> q(count);
  for (std::size_t j = 0; j < count; ++j) {
    q[j] = normal_quantile((static_cast<double>(j) + 0.5) / static_cast<double>(count));
  }
  return q;
}

inline double coupling_distance(std::vector<double> sorted_values, const std::vector<double>& scores) {
  std::sort(sorted_values.begin(), sorted_values.end());
  double total = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j) total += std::abs(sorted_values[j] - scores[j]);
  return total / static_cast<double>(scores.size());
}

}  // namespace detail

/// Quantile-coupling estimate (1/R) sum_j |v_(j) - Phi^{-1}((j - 1/2)/R)| of
/// d_W(law of the replicates, N(0,1)), with a bootstrap standard error.
inline DistanceEstimate wasserstein_to_normal(const ReplicateSet& rep, int bootstrap = kBootstrapResamples) {
  const std::size_t r = rep.values.size();
  if (r < kMinDistanceReplicates) {
    throw CapacityError("Wasserstein estimate needs at least 100 replicates; got " + std::to_string(r));
  }
  const auto scores = detail::normal_scores(r);
  DistanceEstimate out;
  out.estimate = detail::coupling_distance(rep.values, scores);
  if (bootstrap > 1) {
    std::vector<double> boot(static_cast<std::size_t>(bootstrap));
    std::vector<double> resample(r);
    for (int b = 0; b < bootstrap; ++b) {
      RandomStream rng(rep.seed, {0xb0075ULL, static_cast<std::uint64_t>(rep.n), static_cast<std::uint64_t>(b)});
      for (auto& v : resample) v = rep.values[rng.below(r)];
      boot[static_cast<std::size_t>(b)] = detail::coupling_distance(resample, scores);
    }
    out.bootstrap_se = mean_sd(boot).sd;
  }
  return out;
}

/// Mean and spread of the estimator when the replicates are exactly N(0,1)
/// draws of the same size: the level below which estimates carry no signal.
inline DistanceEstimate wasserstein_null_level(std::size_t replicates, std::uint64_t seed, int trials = 50) {
  if (replicates < kMinDistanceReplicates) throw CapacityError("null level needs at least 100 replicates");
  const auto scores = detail::normal_scores(replicates);
  std::vector<double> est(static_cast<std::size_t>(trials));
  std::vector<double> values(replicates);
  for (int t = 0; t < trials; ++t) {
    RandomStream rng(seed, {0x9a11ULL, static_cast<std::uint64_t>(t)});
    for (auto& v : values) v = rng.normal();
    est[static_cast<std::size_t>(t)] = detail::coupling_distance(values, scores);
  }
  const auto ms = mean_sd(est);
  return {ms.mean, ms.sd};
}

/// |mean of g over the replicates - E g(Z)|. E g(Z) is the closed form when
/// given, otherwise an average over gaussian_r draws from the stream (seed).
inline double smooth_distance(const ReplicateSet& rep, const std::function<double(double)>& g, std::uint64_t gaussian_r,
                              std::uint64_t seed, std::optional<double> closed_form = std::nullopt) {
  if (rep.values.size() < kMinDistanceReplicates) throw CapacityError("smooth distance needs at least 100 replicates");
  double lhs = 0.0;
  for (double v : rep.values) lhs += g(v);
  lhs /= static_cast<double>(rep.values.size());
  double rhs;
  if (closed_form) {
    rhs = *closed_form;
  } else {
    if (gaussian_r == 0) throw ParameterError("gaussian_r must be positive without a closed form");
    RandomStream rng(seed, {0x5a007ULL});
    rhs = 0.0;
    for (std::uint64_t j = 0; j < gaussian_r; ++j) rhs += g(rng.normal());
    rhs /= static_cast<double>(gaussian_r);
  }
  return std::abs(lhs - rhs);
}

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
};

/// Least-squares fit of log(ds) against log(ns).
inline RateFit rate_fit(const std::vector<double>& ns, const std::vector<double>& ds, std::size_t min_points = 4) {
  if (ns.size() != ds.size()) throw DimensionError("rate fit needs equally many sizes and distances");
  if (ns.size() < min_points) {
    throw ParameterError("rate fit needs at least " + std::to_string(min_points) + " points");
  }
  const std::size_t k = ns.size();
  std::vector<double> x(k), y(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (!(ns[i] > 0.0) || !(ds[i] > 0.0)) throw ParameterError("rate fit needs positive sizes and distances");
    x[i] = std::log(ns[i]);
    y[i] = std::log(ds[i]);
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(k);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(k);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw ParameterError("rate fit needs at least two distinct sizes");
  RateFit out;
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  if (k > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double e = y[i] - out.intercept - out.slope * x[i];
      rss += e * e;
    }
    out.stderr_slope = std::sqrt(rss / static_cast<double>(k - 2) / sxx);
  }
  return out;
}

}  // namespace ustat
