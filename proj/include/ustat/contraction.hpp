#pragma once

// Contraction kernels psi *_r^l phi over a finite probability space and the
// inequality suite they satisfy.
//
// All measures here are probability measures, so the mu(E)-dependent
// constants of the finite-measure variants of the L^4 estimates equal 1 and
// are not carried separately.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ustat/errors.hpp"
#include "ustat/tensor.hpp"

namespace ustat {

/// Tolerances for the contraction identities.
inline constexpr double kContractionEqualityRelTol = 1e-9;
inline constexpr double kContractionInequalitySlack = 1e-12;

/// Output of a contraction. Coordinates are ordered as the r-l shared
/// coordinates, then the p-r free coordinates of psi, then the q-r free
/// coordinates of phi. The tensor is in general not symmetric.
struct ContractionResult {
  Tensor tensor;
  int r = 0;
  int l = 0;
  double l2_norm = 0.0;
};

/// (psi *_r^l phi)(y, t, s) = sum_x psi(x, y, t) phi(x, y, s) mu^{(x)l}(x).
///
/// psi and phi are read with the integrated block first, then the shared
/// block, then the free block; for symmetric inputs that is just a choice of
/// argument order. With l = 0 this is the pointwise product on the shared
/// coordinates, and with r = l = 0 the tensor product.
inline ContractionResult contract(const Tensor& psi, const Tensor& phi, int r, int l, const DiscreteMeasure& mu) {
  detail::require_alphabet(psi, mu);
  detail::require_alphabet(phi, mu);
  const int p = psi.order();
  const int q = phi.order();
  if (l < 0 || l > r || r > std::min(p, q)) {
    throw ParameterError("contraction indices require 0 <= l <= r <= min(p, q); got r=" + std::to_string(r) +
                         ", l=" + std::to_string(l) + ", p=" + std::to_string(p) + ", q=" + std::to_string(q));
  }
  const int m = psi.alphabet();
  const std::size_t shared = checked_power(m, r - l);
  const std::size_t free_psi = checked_power(m, p - r);
  const std::size_t free_phi = checked_power(m, q - r);
  const auto weights = mu.product_weights(l);
  const std::size_t integrated = weights.size();

  // strides of the integrated and shared blocks inside psi and phi
  const std::size_t psi_x_stride = shared * free_psi;
  const std::size_t phi_x_stride = shared * free_phi;

  Tensor out = Tensor::zeros(p + q - r - l, m);
  std::size_t o = 0;
  for (std::size_t y = 0; y < shared; ++y) {
    for (std::size_t t = 0; t < free_psi; ++t) {
      const std::size_t psi_base = y * free_psi + t;
      for (std::size_t s = 0; s < free_phi; ++s, ++o) {
        const std::size_t phi_base = y * free_phi + s;
        double acc = 0.0;
        for (std::size_t x = 0; x < integrated; ++x) {
          acc += weights[x] * psi[x * psi_x_stride + psi_base] * phi[x * phi_x_stride + phi_base];
        }
        out[o] = acc;
      }
    }
  }
  const double norm = l2_norm(out, mu);
  return ContractionResult{std::move(out), r, l, norm};
}

inline ContractionResult contract(const SymmetricKernel& psi, const SymmetricKernel& phi, int r, int l,
                                  const DiscreteMeasure& mu) {
  return contract(psi.tensor(), phi.tensor(), r, l, mu);
}

/// L^2 norm of psi *_r^l phi.
inline double contraction_norm(const Tensor& psi, const Tensor& phi, int r, int l, const DiscreteMeasure& mu) {
  return contract(psi, phi, r, l, mu).l2_norm;
}

/// One item of the contraction lemma, aggregated over all admissible (r, l).
struct LemmaCheck {
  std::string item;
  bool passed = true;
  /// Smallest (rhs - lhs) over all index pairs for inequalities; for (vi) the
  /// largest relative error of the equality.
  double margin = 0.0;
  int evaluated = 0;
};

struct ContractionLemmaReport {
  std::vector<LemmaCheck> checks;  ///< items (i) .. (vi), in order

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const LemmaCheck& c) { return c.passed; });
  }
};

/// Evaluates items (i)-(vi) of the contraction lemma for every 0 <= l <= r <= min(p, q).
inline ContractionLemmaReport verify_contraction_lemma(const SymmetricKernel& psi, const SymmetricKernel& phi,
                                                       const DiscreteMeasure& mu) {
  const int p = psi.order();
  const int q = phi.order();
  const Tensor& a = psi.tensor();
  const Tensor& b = phi.tensor();
  const double a2 = l2_norm(a, mu);
  const double b2 = l2_norm(b, mu);
  const double a4 = l4_norm(a, mu);
  const double b4 = l4_norm(b, mu);

  ContractionLemmaReport report;
  // (i) every contraction is a finite sum on a finite space
  report.checks.push_back({"(i) well-defined", true, 0.0, 0});
  LemmaCheck c2{"(ii) norm^2 <= |psi*psi|.|phi*phi| (l-shifted)", true, INFINITY, 0};
  LemmaCheck c3{"(iii) norm^2 <= |psi*psi|.|phi*phi| (unshifted)", true, INFINITY, 0};
  LemmaCheck c4{"(iv) norm <= |psi|_4 |phi|_4", true, INFINITY, 0};
  LemmaCheck c5{"(v) |psi *_r^r phi| <= |psi|_2 |phi|_2", true, INFINITY, 0};
  LemmaCheck c6{"(vi) norm^2 = <psi*psi, phi*phi> <= |psi*_r^l psi|.|phi*_r^l phi|", true, 0.0, 0};

  auto inequality = [](LemmaCheck& check, double lhs, double rhs) {
    const double margin = rhs - lhs;
    check.margin = std::min(check.margin, margin);
    if (lhs > rhs + kContractionInequalitySlack) check.passed = false;
    ++check.evaluated;
  };

  for (int r = 0; r <= std::min(p, q); ++r) {
    for (int l = 0; l <= r; ++l) {
      const double norm = contraction_norm(a, b, r, l, mu);
      const double sq = norm * norm;
      ++report.checks[0].evaluated;

      inequality(c2, sq, contraction_norm(a, a, p, p - r + l, mu) * contraction_norm(b, b, q, q - r + l, mu));
      inequality(c3, sq, contraction_norm(a, a, p, p - r, mu) * contraction_norm(b, b, q, q - r, mu));
      inequality(c4, norm, a4 * b4);
      if (l == r) inequality(c5, norm, a2 * b2);

      // (vi): psi *_{p-l}^{p-r} psi and phi *_{q-l}^{q-r} phi are both of order r + l
      const auto left = contract(a, a, p - l, p - r, mu);
      const auto right = contract(b, b, q - l, q - r, mu);
      const double ip = inner_product(left.tensor, right.tensor, mu);
      const double rel = std::abs(sq - ip) / std::max(1.0, std::abs(sq));
      c6.margin = std::max(c6.margin, rel);
      if (rel > kContractionEqualityRelTol) c6.passed = false;
      const double bound = contraction_norm(a, a, r, l, mu) * contraction_norm(b, b, r, l, mu);
      if (sq > bound + kContractionInequalitySlack) c6.passed = false;
      ++c6.evaluated;
    }
  }
  if (c5.evaluated == 0) c5.margin = 0.0;
  report.checks.push_back(c2);
  report.checks.push_back(c3);
  report.checks.push_back(c4);
  report.checks.push_back(c5);
  report.checks.push_back(c6);
  return report;
}

}  // namespace ustat
