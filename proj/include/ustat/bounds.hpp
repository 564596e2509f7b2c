#pragma once

// Explicit normal-approximation bounds for U-statistics: degenerate kernels
// in dimension one, kernels with a dominant Hoeffding component, vectors of
// degenerate U-statistics and general symmetric kernels.
//
// Every C(p,q,t,r) n^{t/2-r} factor is evaluated as the exact finite-n ratio
// of tele2_ratio. The constants kappa_p are configurable. The existence-only
// constants K(i,k,s,l), b_1, b_2 of the general bound are set to 1.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ustat/combinatorics.hpp"
#include "ustat/contraction.hpp"
#include "ustat/errors.hpp"
#include "ustat/hoeffding.hpp"
#include "ustat/product.hpp"
#include "ustat/tensor.hpp"

namespace ustat {

/// Seminorms of a test function h: R^d -> R.
struct TestFunctionProfile {
  double m1 = 1.0;
  double m2 = 1.0;
  double m3 = 1.0;
  std::optional<double> m2_tilde;  ///< Hilbert-Schmidt Hessian bound; sqrt(d) m2 if unset

  double hessian_hs(int dimension) const {
    return m2_tilde ? *m2_tilde : std::sqrt(static_cast<double>(dimension)) * m2;
  }
};

struct KappaValue {
  double value = 1.0;
  std::string provenance;  ///< "user" or "default"
};

/// The constants kappa_p by order.
struct KappaConfig {
  std::map<int, double> kappa;
  bool allow_default = true;
  double default_value = 1.0;

  KappaValue lookup(int p) const {
    if (auto it = kappa.find(p); it != kappa.end()) {
      if (!(it->second > 0.0)) throw ConfigurationError("kappa_" + std::to_string(p) + " must be positive");
      return {it->second, "user"};
    }
    if (!allow_default) throw ConfigurationError("no value configured for kappa_" + std::to_string(p));
    return {default_value, "default"};
  }
};

struct BoundReport {
  double total = 0.0;
  std::vector<std::pair<std::string, double>> terms;
  std::string constant_mode = "exact-finite-n";
  std::map<std::string, double> extras;
  std::map<std::string, std::string> notes;

  void add(std::string name, double value) {
    terms.emplace_back(std::move(name), value);
    total = 0.0;
    for (const auto& [_, v] : terms) total += v;
  }

  double term(const std::string& name) const {
    for (const auto& [k, v] : terms) {
      if (k == name) return v;
    }
    throw ParameterError("bound report has no term '" + name + "'");
  }
};

namespace detail {

inline const double kWassersteinPrefactor = std::sqrt(2.0 / std::numbers::pi) + 4.0 / 3.0;

inline std::string cell_name(std::initializer_list<int> idx) {
  std::string s = "(";
  bool first = true;
  for (int v : idx) {
    if (!first) s += ",";
    s += std::to_string(v);
    first = false;
  }
  return s + ")";
}

inline void require_positive_norm(double norm, const char* what) {
  if (!(norm > 0.0)) throw PreconditionError(std::string(what) + " has zero L2 norm");
}

inline void require_ratio_range(long long n, int p, int q) {
  if (n < p + q) {
    throw ParameterError("bound needs n >= " + std::to_string(p + q) + " for the finite-n ratios; got n=" +
                         std::to_string(n));
  }
}

/// sum over (t, r) of ratio(n,p,q,t,r) ||a *_r^{t-r} b||, with the (t, r)
/// summands recorded.
inline double a1_sum(const Tensor& a, const Tensor& b, const DiscreteMeasure& mu, long long n,
                     std::map<std::string, double>* cells = nullptr) {
  const int p = a.order();
  const int q = b.order();
  double total = 0.0;
  for (int t = 1; t <= p + q - 1; ++t) {
    for (int r = ceil_half(t); r <= std::min({t, p, q}); ++r) {
      const double term = tele2_ratio(n, p, q, t, r).ratio * contraction_norm(a, b, r, t - r, mu);
      if (cells) (*cells)["t,r=" + cell_name({t, r})] = term;
      total += term;
    }
  }
  return total;
}

/// The two ratio sums multiplying the L4 factor in the second bound form:
/// middle range r = s+1 .. (2s) min p min q, odd range r = s .. (2s-1) min p min q.
inline double l4_ratio_sum(long long n, int p, int q) {
  double total = 0.0;
  for (int s = 1; s <= ceil_half(p + q) - 1; ++s) {
    for (int r = s + 1; r <= std::min({2 * s, p, q}); ++r) total += tele2_ratio(n, p, q, 2 * s, r).ratio;
  }
  for (int s = 1; s <= (p + q) / 2; ++s) {
    for (int r = s; r <= std::min({2 * s - 1, p, q}); ++r) total += tele2_ratio(n, p, q, 2 * s - 1, r).ratio;
  }
  return total;
}

/// sum over even t = 2s of ratio(n,p,q,2s,s) * contraction(s), skipping s > min(p, q).
template <typename ContractionNorm>
double diagonal_ratio_sum(long long n, int p, int q, ContractionNorm&& norm_of) {
  double total = 0.0;
  for (int s = 1; s <= ceil_half(p + q) - 1; ++s) {
    if (s > std::min(p, q)) continue;
    total += tele2_ratio(n, p, q, 2 * s, s).ratio * norm_of(s);
  }
  return total;
}

}  // namespace detail

/// Bounds on d_W(W, Z) for W = J_p(psi) / sd, psi degenerate. The first form
/// uses every contraction; the second uses only psi *_s^s psi and the L4 norm.
inline std::pair<BoundReport, BoundReport> bound_degenerate_1d(const SymmetricKernel& psi, const DiscreteMeasure& mu,
                                                               long long n, const KappaConfig& kappa) {
  detail::require_alphabet(psi.tensor(), mu);
  detail::require_degenerate(psi, mu, "kernel");
  const int p = psi.order();
  detail::require_ratio_range(n, p, p);
  const Tensor& a = psi.tensor();
  const double l2 = l2_norm(a, mu);
  detail::require_positive_norm(l2, "kernel");
  const double l2sq = l2 * l2;
  const auto k = kappa.lookup(p);
  const double kappa_term = (2.0 * std::numbers::sqrt2 / 3.0) * std::sqrt(p * k.value / static_cast<double>(n));

  BoundReport b1;
  std::map<std::string, double> cells;
  const double sum1 = detail::a1_sum(a, a, mu, n, &cells);
  b1.add("contraction", detail::kWassersteinPrefactor * sum1 / l2sq);
  b1.add("kappa", kappa_term);
  for (const auto& [name, v] : cells) b1.extras[name] = v / l2sq;
  b1.extras["kappa_p"] = k.value;
  b1.notes["kappa_provenance"] = k.provenance;

  BoundReport b2;
  const double diag = detail::diagonal_ratio_sum(n, p, p, [&](int s) { return contraction_norm(a, a, s, s, mu); });
  const double l4 = l4_norm(a, mu);
  b2.add("contraction", detail::kWassersteinPrefactor * diag / l2sq);
  b2.add("l4", detail::kWassersteinPrefactor * (l4 * l4 / l2sq) * detail::l4_ratio_sum(n, p, p));
  b2.add("kappa", kappa_term);
  b2.extras["l4_over_l2_squared"] = l4 * l4 / l2sq;
  b2.extras["kappa_p"] = k.value;
  b2.notes["kappa_provenance"] = k.provenance;
  return {b1, b2};
}

/// Values of the two CLT conditions for one kernel of a sequence.
struct OneDimConditions {
  long long n = 0;
  double contraction_ratio = 0.0;  ///< max_{1<=s<=p-1} ||psi *_s^s psi|| / ||psi||^2 (0 when p = 1)
  double l4_ratio = 0.0;           ///< n^{-1/2} ||psi||_4^2 / ||psi||_2^2
};

/// Condition values from precomputed norms; ss_norms[s-1] = ||psi *_s^s psi||.
inline OneDimConditions one_dim_conditions(long long n, const std::vector<double>& ss_norms, double l2, double l4) {
  detail::require_positive_norm(l2, "kernel");
  OneDimConditions out{n, 0.0, 0.0};
  for (double v : ss_norms) out.contraction_ratio = std::max(out.contraction_ratio, v / (l2 * l2));
  out.l4_ratio = l4 * l4 / (l2 * l2) / std::sqrt(static_cast<double>(n));
  return out;
}

inline std::vector<OneDimConditions> check_1dimcor(const std::vector<std::pair<long long, SymmetricKernel>>& sequence,
                                                   const DiscreteMeasure& mu) {
  std::vector<OneDimConditions> out;
  for (const auto& [n, psi] : sequence) {
    detail::require_degenerate(psi, mu, "kernel");
    std::vector<double> ss;
    for (int s = 1; s <= psi.order() - 1; ++s) ss.push_back(contraction_norm(psi.tensor(), psi.tensor(), s, s, mu));
    out.push_back(one_dim_conditions(n, ss, l2_norm(psi.tensor(), mu), l4_norm(psi.tensor(), mu)));
  }
  return out;
}

/// Bound for a centered kernel whose lowest non-vanishing Hoeffding component
/// dominates. psi is centered and scaled to unit L2 norm first.
inline BoundReport bound_dominant(const SymmetricKernel& kernel, const DiscreteMeasure& mu, long long n,
                                  const KappaConfig& kappa) {
  detail::require_alphabet(kernel.tensor(), mu);
  const int p = kernel.order();
  if (n < p) throw ParameterError("n below kernel order");
  Tensor centered = kernel.tensor();
  const double mean = expectation(centered, mu);
  for (std::size_t i = 0; i < centered.size(); ++i) centered[i] -= mean;
  const double norm = l2_norm(centered, mu);
  detail::require_positive_norm(norm, "centered kernel");
  centered *= 1.0 / norm;
  const auto psi = SymmetricKernel::trusted(std::move(centered));

  const auto rank = hoeffding_rank(psi, mu);
  if (!rank) throw PreconditionError("kernel has no Hoeffding rank (all components vanish)");
  const int m = *rank;
  const auto set = decompose(psi, mu);
  const auto& top = set.psi[static_cast<std::size_t>(m)];
  const double top_norm = l2_norm(top.tensor(), mu);

  const auto [b1, b2] = bound_degenerate_1d(top, mu, n, kappa);
  double remainder = 0.0;
  double remainder_free = 0.0;
  const double nd = static_cast<double>(n);
  for (int s = m + 1; s <= p; ++s) {
    const double decay = std::pow(nd, 0.5 * (m - s));
    const double lead = std::sqrt(factorial(m)) * factorial(p - m);
    remainder += lead * l2_norm(set.psi[static_cast<std::size_t>(s)].tensor(), mu) /
                 (std::sqrt(factorial(s)) * factorial(p - s) * top_norm) * decay;
    remainder_free += lead / (std::sqrt(factorial(p)) * std::sqrt(factorial(p - s)) * top_norm) * decay;
  }

  BoundReport out;
  out.add("dominant_contraction", b1.term("contraction"));
  out.add("dominant_kappa", b1.term("kappa"));
  out.add("remainder", remainder);
  out.extras["rank"] = m;
  out.extras["remainder_norm_free"] = remainder_free;
  out.extras["dominant_b2_total"] = b2.total;
  out.extras["total_norm_free"] = b1.total + remainder_free;
  out.notes = b1.notes;
  return out;
}

struct AQuantities {
  double a1 = 0.0;
  double a2 = 0.0;
};

/// A_1 and A_2 for a pair of degenerate kernels. The middle sum of A_2 runs
/// over r = s+1 .. (2s) min p_i min p_k, mirroring the one-dimensional bound.
inline AQuantities a_quantities(const SymmetricKernel& psi_i, const SymmetricKernel& psi_k, const DiscreteMeasure& mu,
                                long long n) {
  detail::require_alphabet(psi_i.tensor(), mu);
  detail::require_alphabet(psi_k.tensor(), mu);
  detail::require_degenerate(psi_i, mu, "psi_i");
  detail::require_degenerate(psi_k, mu, "psi_k");
  const int p = psi_i.order();
  const int q = psi_k.order();
  detail::require_ratio_range(n, p, q);
  const Tensor& a = psi_i.tensor();
  const Tensor& b = psi_k.tensor();

  AQuantities out;
  out.a1 = detail::a1_sum(a, b, mu, n);
  const double l4 = l4_norm(a, mu) * l4_norm(b, mu);
  out.a2 = detail::diagonal_ratio_sum(n, p, q, [&](int s) { return contraction_norm(a, b, s, s, mu); }) +
           l4 * detail::l4_ratio_sum(n, p, q);
  if (out.a1 > out.a2 + 1e-12 * std::max(1.0, out.a2)) {
    throw ContractViolation("bounds.a_ordering",
                            "A1 = " + std::to_string(out.a1) + " exceeds A2 = " + std::to_string(out.a2));
  }
  return out;
}

enum class MultivariateMode { C3, C2 };

/// Smooth-distance bound for the vector (J_{p_i}(psi_i / sqrt C(n, p_i)))_i
/// against N(0, V). Mode C3 is the three-derivative form; mode C2 uses
/// ||V^{-1/2}|| and needs V positive definite. which_a selects A_1 or A_2.
inline BoundReport bound_multivariate(const std::vector<SymmetricKernel>& kernels, const DiscreteMeasure& mu,
                                      long long n, const TestFunctionProfile& h, const KappaConfig& kappa,
                                      MultivariateMode mode, int which_a = 1) {
  const int d = static_cast<int>(kernels.size());
  if (d == 0) throw ParameterError("no kernels given");
  if (which_a != 1 && which_a != 2) throw ParameterError("A-quantity selector must be 1 or 2");
  for (int i = 1; i < d; ++i) {
    if (kernels[static_cast<std::size_t>(i)].order() < kernels[static_cast<std::size_t>(i - 1)].order()) {
      throw ParameterError("kernel orders must be nondecreasing");
    }
  }
  const double p1 = kernels.front().order();
  std::vector<double> sigma(static_cast<std::size_t>(d));
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    const auto& a = kernels[static_cast<std::size_t>(i)];
    sigma[static_cast<std::size_t>(i)] = l2_norm(a.tensor(), mu);
    for (int k = 0; k <= i; ++k) {
      const auto& b = kernels[static_cast<std::size_t>(k)];
      if (a.order() != b.order()) continue;
      v(i, k) = v(k, i) = inner_product(a.tensor(), b.tensor(), mu);
    }
  }

  double a_double = 0.0;
  double a_diag = 0.0;
  double kappa_sum = 0.0;
  BoundReport out;
  for (int i = 0; i < d; ++i) {
    const auto& a = kernels[static_cast<std::size_t>(i)];
    const double pi = a.order();
    for (int k = 0; k < d; ++k) {
      const auto& b = kernels[static_cast<std::size_t>(k)];
      const auto aq = a_quantities(a, b, mu, n);
      const double value = which_a == 1 ? aq.a1 : aq.a2;
      a_double += (pi + b.order()) * value;
      if (i == k) a_diag += pi * sigma[static_cast<std::size_t>(i)] * value;
      out.extras["A" + std::to_string(which_a) + detail::cell_name({i + 1, k + 1})] = value;
    }
    const auto kv = kappa.lookup(a.order());
    out.notes["kappa_provenance_p" + std::to_string(a.order())] = kv.provenance;
    kappa_sum += std::pow(pi, 1.5) * std::pow(sigma[static_cast<std::size_t>(i)], 3) * std::sqrt(kv.value);
  }

  const double dd = d;
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  if (mode == MultivariateMode::C3) {
    out.add("contraction", h.hessian_hs(d) / (4.0 * p1) * a_double);
    out.add("diagonal", 2.0 * h.m3 * std::sqrt(dd) / (9.0 * p1) * a_diag);
    out.add("kappa", std::sqrt(2.0 * dd) * h.m3 / (9.0 * p1 * sqrt_n) * kappa_sum);
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(v, Eigen::EigenvaluesOnly);
    const double lambda_min = eig.eigenvalues().minCoeff();
    const double lambda_max = eig.eigenvalues().maxCoeff();
    if (!(lambda_min > 1e-12 * std::max(1.0, lambda_max))) {
      throw PreconditionError("covariance matrix is not positive definite (smallest eigenvalue " +
                              std::to_string(lambda_min) + ")");
    }
    const double inv_sqrt = 1.0 / std::sqrt(lambda_min);
    out.extras["v_inverse_sqrt_norm"] = inv_sqrt;
    out.add("contraction", h.m1 * inv_sqrt / (p1 * std::sqrt(2.0 * std::numbers::pi)) * a_double);
    out.add("diagonal", std::sqrt(2.0 * std::numbers::pi * dd) / (6.0 * p1) * h.m2 * inv_sqrt * a_diag);
    out.add("kappa", std::sqrt(std::numbers::pi * dd) / (6.0 * p1 * sqrt_n) * h.m2 * inv_sqrt * kappa_sum);
  }
  for (int i = 0; i < d; ++i) out.extras["sigma" + detail::cell_name({i + 1})] = sigma[static_cast<std::size_t>(i)];
  return out;
}

/// Index pairs (r, t) with 0 <= t <= r <= s, t <= l and r - t <= s - l.
inline std::vector<std::pair<int, int>> q_set(int s, int l) {
  std::vector<std::pair<int, int>> out;
  for (int r = 0; r <= s; ++r) {
    for (int t = 0; t <= std::min(r, l); ++t) {
      if (r - t <= s - l) out.emplace_back(r, t);
    }
  }
  return out;
}

/// max over (r, t) in Q(s, l) of ||g_i *_r^t g_k||. s = 0 is accepted and
/// gives ||g_i|| ||g_k||.
inline double genulemma_bound(const HoeffdingSet& set, const DiscreteMeasure& mu, int i, int k, int s, int l) {
  const int p = set.order();
  if (i < 1 || k < 1 || i > p || k > p || s < 0 || s > std::min(i, k) || l < 0 || l > s) {
    throw ParameterError("genulemma indices need 1 <= i,k <= p, 0 <= l <= s <= min(i, k)");
  }
  const Tensor& gi = set.g[static_cast<std::size_t>(i)];
  const Tensor& gk = set.g[static_cast<std::size_t>(k)];
  double best = 0.0;
  for (const auto& [r, t] : q_set(s, l)) best = std::max(best, contraction_norm(gi, gk, r, t, mu));
  return best;
}

/// Source of the psi_s-contraction norms in the general bound: the g-based
/// maxima with constant 1, or the exact psi_s contractions.
enum class ContractionSource { GMaximum, Exact };
enum class GeneralVariant { B, BPrime };

/// Smooth-distance bound for W = (J_p(psi) - E) / sd with g having bounded
/// second and third derivatives m2, m3. which_b selects B_1 or B_2.
inline BoundReport bound_general(const SymmetricKernel& kernel, const DiscreteMeasure& mu, long long n,
                                 const TestFunctionProfile& g_profile, const KappaConfig& kappa,
                                 GeneralVariant variant, int which_b = 1,
                                 ContractionSource source = ContractionSource::GMaximum) {
  detail::require_alphabet(kernel.tensor(), mu);
  if (which_b != 1 && which_b != 2) throw ParameterError("B-quantity selector must be 1 or 2");
  if (variant == GeneralVariant::BPrime && source == ContractionSource::Exact) {
    throw ConfigurationError("the primed variant is defined through the g-contractions only");
  }
  const int p = kernel.order();
  detail::require_ratio_range(n, p, p);
  Tensor centered = kernel.tensor();
  const double mean = expectation(centered, mu);
  for (std::size_t i = 0; i < centered.size(); ++i) centered[i] -= mean;
  const auto psi = SymmetricKernel::trusted(std::move(centered));
  const auto set = decompose(psi, mu);
  const double sigma2 = variance(set, mu, n).hoeffding;
  if (!(sigma2 > 0.0)) throw PreconditionError("U-statistic has zero variance");

  // scale[i] = sqrt C(n,i) C(n-i,p-i); psi^{(i)} = scale[i] psi_i / sigma
  std::vector<double> scale(static_cast<std::size_t>(p + 1), 0.0);
  std::vector<double> norm_tilde(static_cast<std::size_t>(p + 1), 0.0);
  double normalization = 0.0;
  const double sigma = std::sqrt(sigma2);
  for (int i = 1; i <= p; ++i) {
    scale[static_cast<std::size_t>(i)] = std::sqrt(binomial(n, i)) * binomial(n - i, p - i);
    norm_tilde[static_cast<std::size_t>(i)] =
        scale[static_cast<std::size_t>(i)] * l2_norm(set.psi[static_cast<std::size_t>(i)].tensor(), mu) / sigma;
    normalization += norm_tilde[static_cast<std::size_t>(i)] * norm_tilde[static_cast<std::size_t>(i)];
  }
  if (std::abs(normalization - 1.0) > 1e-9) {
    throw ContractViolation("bounds.normalization",
                            "sum of squared component norms is " + std::to_string(normalization) + ", not 1");
  }

  const auto& g = set.g;
  const auto& comp = set.psi;
  auto gnorm = [&](int i, int k, int r, int t) {
    return contraction_norm(g[static_cast<std::size_t>(i)], g[static_cast<std::size_t>(k)], r, t, mu);
  };
  // max_{0<=r<=i} ||g_i *_r^0 g_i|| bounds ||psi_i||_4^2 up to a constant
  std::vector<double> l4_g(static_cast<std::size_t>(p + 1), 0.0);
  std::vector<double> l4_exact(static_cast<std::size_t>(p + 1), 0.0);
  for (int i = 1; i <= p; ++i) {
    for (int r = 0; r <= i; ++r) l4_g[static_cast<std::size_t>(i)] = std::max(l4_g[static_cast<std::size_t>(i)], gnorm(i, i, r, 0));
    const double l4 = l4_norm(comp[static_cast<std::size_t>(i)].tensor(), mu);
    l4_exact[static_cast<std::size_t>(i)] = l4 * l4;
  }

  BoundReport out;
  out.constant_mode = source == ContractionSource::Exact ? "exact-finite-n" : "exact-finite-n; empirical-constant K=b=1";
  const double nd = static_cast<double>(n);

  auto b_value = [&](int i, int k) -> double {
    const double f = scale[static_cast<std::size_t>(i)] * scale[static_cast<std::size_t>(k)] / sigma2;
    const double l4_pair_g = std::sqrt(l4_g[static_cast<std::size_t>(i)] * l4_g[static_cast<std::size_t>(k)]);
    const double l4_pair_exact =
        std::sqrt(l4_exact[static_cast<std::size_t>(i)] * l4_exact[static_cast<std::size_t>(k)]);
    auto exact_contraction = [&](int s, int l) {
      return contraction_norm(comp[static_cast<std::size_t>(i)].tensor(), comp[static_cast<std::size_t>(k)].tensor(),
                              s, l, mu);
    };

    if (variant == GeneralVariant::B && which_b == 1) {
      double total = 0.0;
      for (int s = 1; s <= std::min(i, k); ++s) {
        for (int l = 0; l <= std::min(i + k - s - 1, s); ++l) {
          const double c = source == ContractionSource::Exact ? exact_contraction(s, l)
                                                                : genulemma_bound(set, mu, i, k, s, l);
          total += tele2_ratio(n, i, k, l + s, s).ratio * f * c;
        }
      }
      return total;
    }
    if (variant == GeneralVariant::B) {
      double total = detail::diagonal_ratio_sum(n, i, k, [&](int s) {
        if (source == ContractionSource::Exact) return exact_contraction(s, s);
        double best = 0.0;
        for (int t = 0; t <= s; ++t) best = std::max(best, gnorm(i, k, t, t));
        return best;
      });
      const double l4 = source == ContractionSource::Exact ? l4_pair_exact : l4_pair_g;
      total += l4 * detail::l4_ratio_sum(n, i, k);
      return f * total;
    }
    if (which_b == 1) {
      double best = 0.0;
      for (int s = 1; s <= std::min(i, k); ++s) {
        for (int l = 0; l <= std::min(i + k - s - 1, s); ++l) {
          const double power = std::pow(nd, 2.0 * p - 0.5 * (i + k + s - l));
          best = std::max(best, power / sigma2 * genulemma_bound(set, mu, i, k, s, l));
        }
      }
      return best;
    }
    const double indicator = i + k > 2 ? 1.0 : 0.0;
    double diag = 0.0;
    for (int t = 0; t <= ceil_half(i + k) - 1; ++t) diag = std::max(diag, gnorm(i, k, t, t));
    return indicator * diag * std::pow(nd, 2.0 * p - 0.5 * (i + k)) / sigma2 +
           indicator * l4_pair_g * std::pow(nd, 2.0 * p - 1.0 - 0.5 * (i + k)) / sigma2 +
           l4_pair_g * std::pow(nd, 2.0 * p - 0.5 * (i + k + 1)) / sigma2;
  };

  double double_sum = 0.0;
  double diag_sum = 0.0;
  double kappa_sum = 0.0;
  for (int i = 1; i <= p; ++i) {
    for (int k = 1; k <= p; ++k) {
      const double b = b_value(i, k);
      double_sum += (i + k) * b;
      if (i == k) diag_sum += i * norm_tilde[static_cast<std::size_t>(i)] * b;
      out.extras["B" + detail::cell_name({i, k})] = b;
    }
    const auto kv = kappa.lookup(i);
    out.notes["kappa_provenance_p" + std::to_string(i)] = kv.provenance;
    kappa_sum += std::pow(i, 1.5) * std::pow(norm_tilde[static_cast<std::size_t>(i)], 3) * std::sqrt(kv.value);
    out.extras["component_norm" + detail::cell_name({i})] = norm_tilde[static_cast<std::size_t>(i)];
  }
  const double sp = std::sqrt(static_cast<double>(p));
  out.add("contraction", 0.25 * sp * g_profile.m2 * double_sum);
  out.add("diagonal", 2.0 * g_profile.m3 * sp / 9.0 * diag_sum);
  out.add("kappa", std::sqrt(2.0 * p) * g_profile.m3 / (9.0 * std::sqrt(nd)) * kappa_sum);
  out.extras["sigma2"] = sigma2;
  out.extras["normalization"] = normalization;

  // empirical constants: exact psi-contraction over the g-based maximum
  for (int i = 1; i <= p; ++i) {
    for (int k = 1; k <= p; ++k) {
      for (int s = 1; s <= std::min(i, k); ++s) {
        for (int l = 0; l <= s; ++l) {
          const double gb = genulemma_bound(set, mu, i, k, s, l);
          if (gb > 0.0) {
            out.extras["khat" + detail::cell_name({i, k, s, l})] =
                contraction_norm(comp[static_cast<std::size_t>(i)].tensor(), comp[static_cast<std::size_t>(k)].tensor(),
                                 s, l, mu) /
                gb;
          }
        }
      }
    }
    if (l4_g[static_cast<std::size_t>(i)] > 0.0) {
      out.extras["khat_l4" + detail::cell_name({i})] = l4_exact[static_cast<std::size_t>(i)] / l4_g[static_cast<std::size_t>(i)];
    }
  }
  return out;
}

}  // namespace ustat
