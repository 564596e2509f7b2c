#pragma once

// Product formula for degenerate symmetric U-statistics: the kernels chi of
// the Hoeffding decomposition of J_p(psi) J_q(phi), its exhaustive and Monte
// Carlo verification, and the binomial ratios used by every bound.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ustat/combinatorics.hpp"
#include "ustat/contraction.hpp"
#include "ustat/errors.hpp"
#include "ustat/hoeffding.hpp"
#include "ustat/rng.hpp"
#include "ustat/tensor.hpp"

namespace ustat {

/// chi[t] is the kernel of order p+q-t, for t = 0 .. 2 min(p, q).
struct ProductKernelSet {
  int p = 0;
  int q = 0;
  long long n = 0;
  std::vector<SymmetricKernel> chi;

  const SymmetricKernel& of_order(int order) const { return chi.at(static_cast<std::size_t>(p + q - order)); }
};

/// Coefficient C(n-p-q+t, t-r) * multinomial(p+q-t; p-r, q-r, 2r-t) of the
/// symmetrized contraction psi *_r^{t-r} phi inside chi_{p+q-t}.
inline double product_coefficient(long long n, int p, int q, int t, int r) {
  return binomial(n - p - q + t, t - r) * multinomial(p + q - t, {p - r, q - r, 2 * r - t});
}

namespace detail {

inline void require_degenerate(const SymmetricKernel& psi, const DiscreteMeasure& mu, const char* name) {
  const double defect = degeneracy_defect(psi, mu).max_abs();
  if (defect > kDegeneracyTolerance * std::max(1.0, psi.tensor().max_abs())) {
    throw PreconditionError(std::string(name) + " is not degenerate (defect " + std::to_string(defect) + ")");
  }
}

/// J of a product kernel; order 0 kernels enter the product formula as the
/// constant itself.
inline double product_term(const Tensor& chi, std::span<const std::int64_t> counts) {
  if (chi.order() == 0) return chi.scalar_value();
  return ustat_from_counts(chi, counts);
}

}  // namespace detail

/// The kernels chi_{p+q-t}: each is the sum over r of the product coefficient
/// times the top Hoeffding component of the symmetrized contraction
/// psi *_r^{t-r} phi.
inline ProductKernelSet product_kernels(const SymmetricKernel& psi, const SymmetricKernel& phi, long long n,
                                        const DiscreteMeasure& mu) {
  detail::require_alphabet(psi.tensor(), mu);
  detail::require_alphabet(phi.tensor(), mu);
  const int p = psi.order();
  const int q = phi.order();
  if (p < 1 || q < 1) throw ParameterError("product formula needs kernels of order at least 1");
  if (n < p + q) {
    throw ParameterError("product formula needs n >= p + q; got n=" + std::to_string(n));
  }
  detail::require_degenerate(psi, mu, "psi");
  detail::require_degenerate(phi, mu, "phi");

  ProductKernelSet out{p, q, n, {}};
  const int m = mu.alphabet();
  const int t_max = 2 * std::min(p, q);
  for (int t = 0; t <= t_max; ++t) {
    const int order = p + q - t;
    Tensor chi = Tensor::zeros(order, m);
    for (int r = ceil_half(t); r <= std::min({t, p, q}); ++r) {
      const double coefficient = product_coefficient(n, p, q, t, r);
      if (coefficient == 0.0) continue;
      const auto c = contract(psi.tensor(), phi.tensor(), r, t - r, mu);
      if (order == 0) {
        chi += c.tensor * coefficient;
      } else {
        chi += top_component(symmetrize(c.tensor), mu).tensor() * coefficient;
      }
    }
    out.chi.push_back(SymmetricKernel::trusted(std::move(chi)));
  }
  return out;
}

struct ProductCheck {
  double max_residual = 0.0;
  /// Max |J_p(psi) J_q(phi)| over the evaluated samples; sets the scale of
  /// rounding error in the residual.
  double max_product = 0.0;
  std::uint64_t samples = 0;
  bool exhaustive = true;
  /// ||chi_{p+q-t}|| indexed by t.
  std::vector<double> chi_norms;
};

/// Max over samples of |J_p(psi) J_q(phi) - sum_t J_{p+q-t}(chi_{p+q-t})|.
///
/// Without mc_replicates every one of the m^n samples is visited (capacity
/// error beyond 10^6); otherwise mc_replicates samples are drawn from mu.
inline ProductCheck verify_product_formula(const SymmetricKernel& psi, const SymmetricKernel& phi, long long n,
                                           const DiscreteMeasure& mu, std::optional<std::uint64_t> mc_replicates = {},
                                           std::uint64_t seed = 0) {
  const auto set = product_kernels(psi, phi, n, mu);
  ProductCheck out;
  for (const auto& chi : set.chi) out.chi_norms.push_back(l2_norm(chi.tensor(), mu));

  const int m = mu.alphabet();
  auto evaluate = [&](std::span<const int> x) {
    const auto counts = symbol_counts(x, m);
    const double lhs = ustat_from_counts(psi.tensor(), counts) * ustat_from_counts(phi.tensor(), counts);
    double rhs = 0.0;
    for (const auto& chi : set.chi) rhs += detail::product_term(chi.tensor(), counts);
    out.max_residual = std::max(out.max_residual, std::abs(lhs - rhs));
    out.max_product = std::max(out.max_product, std::abs(lhs));
    ++out.samples;
  };

  if (!mc_replicates) {
    for_each_sample(mu, static_cast<int>(n), [&](std::span<const int> x, double) { evaluate(x); });
    return out;
  }
  out.exhaustive = false;
  CategoricalSampler draw(mu.weights());
  std::vector<int> x(static_cast<std::size_t>(n));
  for (std::uint64_t j = 0; j < *mc_replicates; ++j) {
    RandomStream rng(seed, {j});
    for (auto& v : x) v = draw(rng);
    evaluate(x);
  }
  return out;
}

/// Exact finite-n ratio sqrt C(n,p+q-t) / (sqrt C(n,p) sqrt C(n,q)) times
/// the product coefficient, together with ratio * n^{r - t/2}, which stays
/// bounded in n.
struct Tele2Ratio {
  double ratio = 0.0;
  double normalized = 0.0;
};

inline Tele2Ratio tele2_ratio(long long n, int p, int q, int t, int r) {
  if (p < 1 || q < 1 || n < p + q || r < 1 || r > t || t > p + q - 1 || r > std::min(p, q) || 2 * r < t) {
    throw ParameterError("tele2 ratio needs n >= p+q, 1 <= r <= t <= p+q-1, ceil(t/2) <= r <= min(p,q); got n=" +
                         std::to_string(n) + ", p=" + std::to_string(p) + ", q=" + std::to_string(q) +
                         ", t=" + std::to_string(t) + ", r=" + std::to_string(r));
  }
  const double nd = static_cast<double>(n);
  const double log_ratio =
      0.5 * (log_binomial(nd, p + q - t) - log_binomial(nd, p) - log_binomial(nd, q)) +
      log_binomial(nd + t - p - q, t - r) + log_multinomial(p + q - t, {p - r, q - r, 2 * r - t});
  const double ratio = std::exp(log_ratio);
  return Tele2Ratio{ratio, std::exp(log_ratio + (r - 0.5 * t) * std::log(nd))};
}

/// ||chi_{p+q-t}|| against the triangle-inequality bound by the unsymmetrized
/// contraction norms.
struct ChiNormBound {
  double lhs = 0.0;
  double rhs = 0.0;
};

inline ChiNormBound chi_norm_bound(const SymmetricKernel& psi, const SymmetricKernel& phi, long long n,
                                   const DiscreteMeasure& mu, int t) {
  const int p = psi.order();
  const int q = phi.order();
  if (t < 1 || t > 2 * std::min(p, q) - 1) {
    throw ParameterError("chi norm bound needs 1 <= t <= 2 min(p, q) - 1; got t=" + std::to_string(t));
  }
  const auto set = product_kernels(psi, phi, n, mu);
  ChiNormBound out;
  out.lhs = l2_norm(set.chi[static_cast<std::size_t>(t)].tensor(), mu);
  for (int r = ceil_half(t); r <= std::min({t, p, q}); ++r) {
    out.rhs += product_coefficient(n, p, q, t, r) * contraction_norm(psi.tensor(), phi.tensor(), r, t - r, mu);
  }
  if (out.lhs > out.rhs + 1e-12 * std::max(1.0, out.rhs)) {
    throw ContractViolation("product.chi_norm_bound", "||chi|| = " + std::to_string(out.lhs) +
                                                          " exceeds the contraction bound " + std::to_string(out.rhs));
  }
  return out;
}

}  // namespace ustat
