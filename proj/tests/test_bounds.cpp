#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "ustat/bounds.hpp"
#include "ustat/combinatorics.hpp"
#include "ustat/errors.hpp"
#include "ustat/hoeffding.hpp"

using namespace ustat;
using namespace testing_support;

namespace {

const double kPrefactor = std::sqrt(2.0 / std::numbers::pi) + 4.0 / 3.0;

/// psi(x, y) = f(x) + f(y) + eps h(x, y) with f centered and h degenerate.
SymmetricKernel rank_one_plus(std::mt19937_64& rng, const DiscreteMeasure& mu, double eps) {
  const int m = mu.alphabet();
  Tensor f = random_tensor(rng, 1, m);
  f = f - Tensor::constant(1, m, expectation(f, mu));
  const auto h = random_degenerate(rng, 2, mu);
  Tensor out = Tensor::zeros(2, m);
  for (int a = 0; a < m; ++a) {
    for (int b = 0; b < m; ++b) {
      const auto i = static_cast<std::size_t>(a * m + b);
      out[i] = f[static_cast<std::size_t>(a)] + f[static_cast<std::size_t>(b)] + eps * h[i];
    }
  }
  return SymmetricKernel::trusted(out);
}

/// Removes the projection of b onto a (keeps degeneracy, makes <a, b> = 0).
SymmetricKernel orthogonalize(const SymmetricKernel& b, const SymmetricKernel& a, const DiscreteMeasure& mu) {
  const double c = inner_product(b.tensor(), a.tensor(), mu) / inner_product(a.tensor(), a.tensor(), mu);
  return SymmetricKernel::trusted(b.tensor() - a.tensor() * c);
}

}  // namespace

TEST(OneDimBound, OrderOneCollapsesToTheSingleTerm) {
  std::mt19937_64 rng(51);
  const auto mu = random_measure(rng, 3);
  const auto psi = random_degenerate(rng, 1, mu);
  const long long n = 40;
  const auto [b1, b2] = bound_degenerate_1d(psi, mu, n, KappaConfig{});
  const double l2 = l2_norm(psi, mu), l4 = l4_norm(psi.tensor(), mu);
  const double single = kPrefactor * tele2_ratio(n, 1, 1, 1, 1).ratio * l4 * l4 / (l2 * l2);
  EXPECT_NEAR(b1.term("contraction"), single, 1e-12);
  EXPECT_EQ(b2.term("contraction"), 0.0);
  EXPECT_NEAR(b2.term("l4"), single, 1e-12);
  EXPECT_NEAR(b1.term("kappa"), 2.0 * std::sqrt(2.0) / 3.0 * std::sqrt(1.0 / n), 1e-15);
  EXPECT_NEAR(b1.total, b2.total, 1e-12);
  EXPECT_EQ(b1.notes.at("kappa_provenance"), "default");
}

TEST(OneDimBound, TotalIsTheSumOfTerms) {
  std::mt19937_64 rng(52);
  const auto mu = random_measure(rng, 3);
  const auto [b1, b2] = bound_degenerate_1d(random_degenerate(rng, 3, mu), mu, 30, KappaConfig{});
  for (const auto* b : {&b1, &b2}) {
    double sum = 0.0;
    for (const auto& [name, v] : b->terms) sum += v;
    EXPECT_NEAR(b->total, sum, 1e-12);
    EXPECT_EQ(b->constant_mode, "exact-finite-n");
  }
}

TEST(OneDimBound, ContractionCellsDecayWithThePredictedPower) {
  std::mt19937_64 rng(53);
  const auto mu = random_measure(rng, 3);
  const auto psi = random_degenerate(rng, 2, mu);
  const auto small = bound_degenerate_1d(psi, mu, 100, KappaConfig{}).first;
  const auto large = bound_degenerate_1d(psi, mu, 400, KappaConfig{}).first;
  for (auto [t, r] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{2, 2}, std::pair{3, 2}}) {
    const std::string key = "t,r=(" + std::to_string(t) + "," + std::to_string(r) + ")";
    const double observed = large.extras.at(key) / small.extras.at(key);
    const double predicted = std::pow(4.0, 0.5 * t - r);
    EXPECT_NEAR(observed / predicted, 1.0, 0.05) << key;
  }
}

TEST(OneDimBound, Errors) {
  std::mt19937_64 rng(54);
  const auto mu = random_measure(rng, 3);
  EXPECT_THROW(bound_degenerate_1d(random_kernel(rng, 2, mu.alphabet()), mu, 20, KappaConfig{}), PreconditionError);
  KappaConfig strict;
  strict.allow_default = false;
  EXPECT_THROW(bound_degenerate_1d(random_degenerate(rng, 2, mu), mu, 20, strict), ConfigurationError);
  strict.kappa[2] = 4.0;
  const auto [b1, b2] = bound_degenerate_1d(random_degenerate(rng, 2, mu), mu, 20, strict);
  EXPECT_EQ(b1.notes.at("kappa_provenance"), "user");
  EXPECT_NEAR(b1.term("kappa"), 2.0 * std::sqrt(2.0) / 3.0 * std::sqrt(2 * 4.0 / 20.0), 1e-15);
  EXPECT_THROW(bound_degenerate_1d(SymmetricKernel::constant(2, 3, 0.0), mu, 20, KappaConfig{}), PreconditionError);
}

TEST(BoundScaleInvariance, EveryReportTotal) {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    const int p = 1 + trial % 3;
    const auto mu = random_measure(rng, 3);
    const auto degenerate = random_degenerate(rng, p, mu);
    const auto general = random_kernel(rng, p, 3);
    const long long n = 2 * p + 5;
    const TestFunctionProfile g;
    for (double c : {0.5, 3.0}) {
      const auto [b1, b2] = bound_degenerate_1d(degenerate, mu, n, KappaConfig{});
      const auto [c1, c2] = bound_degenerate_1d(degenerate.scaled(c), mu, n, KappaConfig{});
      EXPECT_NEAR(c1.total, b1.total, 1e-9 * b1.total);
      EXPECT_NEAR(c2.total, b2.total, 1e-9 * b2.total);
      const double d = bound_dominant(general, mu, n, KappaConfig{}).total;
      EXPECT_NEAR(bound_dominant(general.scaled(c), mu, n, KappaConfig{}).total, d, 1e-9 * d);
      for (auto variant : {GeneralVariant::B, GeneralVariant::BPrime}) {
        for (int which : {1, 2}) {
          const double base = bound_general(general, mu, n, g, KappaConfig{}, variant, which).total;
          const double scaled = bound_general(general.scaled(c), mu, n, g, KappaConfig{}, variant, which).total;
          EXPECT_NEAR(scaled, base, 1e-9 * base);
        }
      }
    }
  }
}

TEST(OneDimConditions, FixedKernelHasConstantContractionRatio) {
  std::mt19937_64 rng(56);
  const auto mu = random_measure(rng, 3);
  const auto psi = random_degenerate(rng, 2, mu);
  const auto values = check_1dimcor({{10, psi}, {100, psi}, {1000, psi}}, mu);
  ASSERT_EQ(values.size(), 3u);
  EXPECT_GT(values[0].contraction_ratio, 0.0);
  EXPECT_NEAR(values[2].contraction_ratio, values[0].contraction_ratio, 1e-15);
  EXPECT_NEAR(values[2].l4_ratio * std::sqrt(1000.0), values[0].l4_ratio * std::sqrt(10.0), 1e-12);

  const auto one = check_1dimcor({{10, random_degenerate(rng, 1, mu)}}, mu);
  EXPECT_EQ(one[0].contraction_ratio, 0.0);
}

TEST(OneDimConditions, DecreasingSequenceFromLocalizedKernels) {
  // uniform measure on a 32-cell grid of [0,1); psi_n is the degenerate part
  // of 1{|x - y| < t_n} with shrinking t_n, a discretized edge-count kernel
  const int m = 32;
  const auto mu = DiscreteMeasure::uniform(m);
  std::vector<std::pair<long long, SymmetricKernel>> seq;
  for (auto [n, t] : {std::pair{50LL, 0.4}, std::pair{200LL, 0.2}, std::pair{800LL, 0.1}}) {
    Tensor k = Tensor::zeros(2, m);
    for (int a = 0; a < m; ++a) {
      for (int b = 0; b < m; ++b) k[static_cast<std::size_t>(a * m + b)] = (a != b && std::abs(a - b) < t * m) ? 1.0 : 0.0;
    }
    seq.emplace_back(n, top_component(SymmetricKernel(k), mu));
  }
  const auto values = check_1dimcor(seq, mu);
  for (std::size_t i = 1; i < values.size(); ++i) {
    EXPECT_LT(values[i].contraction_ratio, values[i - 1].contraction_ratio);
    EXPECT_LT(values[i].l4_ratio, values[i - 1].l4_ratio);
  }

  // the second bound form follows the three order terms of its asymptotic
  // expansion: the ratio to their maximum stays within a factor of 3
  std::vector<double> ratios;
  for (const auto& [n, psi] : seq) {
    const auto c = check_1dimcor({{n, psi}}, mu).front();
    const double order = std::max({c.contraction_ratio, c.l4_ratio, 1.0 / std::sqrt(static_cast<double>(n))});
    ratios.push_back(bound_degenerate_1d(psi, mu, n, KappaConfig{}).second.total / order);
  }
  const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
  EXPECT_LE(*hi / *lo, 3.0);
}

TEST(DominantBound, DegenerateKernelHasNoRemainder) {
  std::mt19937_64 rng(57);
  const auto mu = random_measure(rng, 3);
  const auto psi = random_degenerate(rng, 2, mu);
  const auto d = bound_dominant(psi, mu, 30, KappaConfig{});
  EXPECT_EQ(d.term("remainder"), 0.0);
  EXPECT_EQ(d.extras.at("rank"), 2.0);
  EXPECT_NEAR(d.total, bound_degenerate_1d(psi, mu, 30, KappaConfig{}).first.total, 1e-12);
}

TEST(DominantBound, RankOneKernelHasOneRemainderTerm) {
  std::mt19937_64 rng(58);
  const auto mu = random_measure(rng, 3);
  const auto psi = rank_one_plus(rng, mu, 0.7);
  const auto set = decompose(psi, mu);
  for (long long n : {25, 100}) {
    const auto d = bound_dominant(psi, mu, n, KappaConfig{});
    EXPECT_EQ(d.extras.at("rank"), 1.0);
    // s = 2, m = 1, p = 2: sqrt(1!) 1! ||psi_2|| / (sqrt(2!) 0! ||psi_1||) n^{-1/2}
    const double expected = l2_norm(set.psi[2], mu) / (std::sqrt(2.0) * l2_norm(set.psi[1], mu)) / std::sqrt(double(n));
    EXPECT_NEAR(d.term("remainder"), expected, 1e-12);
  }
  EXPECT_THROW(bound_dominant(SymmetricKernel::constant(2, 3, 1.0), mu, 10, KappaConfig{}), PreconditionError);
}

TEST(AQuantities, OrderOneHandValue) {
  std::mt19937_64 rng(59);
  const auto mu = random_measure(rng, 3);
  const auto a = random_degenerate(rng, 1, mu);
  const auto b = random_degenerate(rng, 1, mu);
  const long long n = 12;
  const auto aq = a_quantities(a, b, mu, n);
  double prod = 0.0;
  for (int x = 0; x < 3; ++x) prod += mu[static_cast<std::size_t>(x)] * std::pow(a[static_cast<std::size_t>(x)] * b[static_cast<std::size_t>(x)], 2);
  EXPECT_NEAR(aq.a1, tele2_ratio(n, 1, 1, 1, 1).ratio * std::sqrt(prod), 1e-14);
}

TEST(AQuantities, ZeroKernelAndOrdering) {
  std::mt19937_64 rng(60);
  const auto mu = random_measure(rng, 3);
  const auto zero = SymmetricKernel::constant(2, 3, 0.0);
  const auto z = a_quantities(random_degenerate(rng, 2, mu), zero, mu, 10);
  EXPECT_EQ(z.a1, 0.0);
  EXPECT_EQ(z.a2, 0.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 2 + trial % 3;
    const auto mu_t = random_measure(rng, m);
    const int pi = 1 + trial % 3, pk = 1 + (trial / 3) % 3;
    const auto aq = a_quantities(random_degenerate(rng, pi, mu_t), random_degenerate(rng, pk, mu_t), mu_t, 10);
    EXPECT_LE(aq.a1, aq.a2 + 1e-12);
  }
}

TEST(MultivariateBound, SingleKernelMatchesTheOneDimensionalSum) {
  std::mt19937_64 rng(61);
  const auto mu = random_measure(rng, 3);
  const auto psi = random_degenerate(rng, 2, mu);
  const long long n = 15;
  const auto mv = bound_multivariate({psi}, mu, n, TestFunctionProfile{}, KappaConfig{}, MultivariateMode::C3);
  const auto b1 = bound_degenerate_1d(psi, mu, n, KappaConfig{}).first;
  const double l2sq = std::pow(l2_norm(psi, mu), 2);
  EXPECT_NEAR(mv.extras.at("A1(1,1)"), b1.term("contraction") / kPrefactor * l2sq, 1e-12);
  // contraction part (sqrt(d) m2 / (4 p_1)) (p_1 + p_1) A_1
  EXPECT_NEAR(mv.term("contraction"), 1.0 / 8.0 * 4.0 * mv.extras.at("A1(1,1)"), 1e-12);
}

TEST(MultivariateBound, ZeroKernelRowContributesNothing) {
  std::mt19937_64 rng(62);
  const auto mu = random_measure(rng, 3);
  const auto psi = random_degenerate(rng, 2, mu);
  const auto zero = SymmetricKernel::constant(2, 3, 0.0);
  const long long n = 15;
  const auto with_zero = bound_multivariate({psi, zero}, mu, n, TestFunctionProfile{}, KappaConfig{}, MultivariateMode::C3);
  EXPECT_EQ(with_zero.extras.at("A1(1,2)"), 0.0);
  EXPECT_EQ(with_zero.extras.at("A1(2,1)"), 0.0);
  EXPECT_EQ(with_zero.extras.at("A1(2,2)"), 0.0);
}

TEST(MultivariateBound, OrthogonalKernelsGiveDiagonalCovariance) {
  std::mt19937_64 rng(63);
  const auto mu = random_measure(rng, 4);
  const auto a = random_degenerate(rng, 2, mu);
  const auto b = orthogonalize(random_degenerate(rng, 2, mu), a, mu);
  EXPECT_NEAR(inner_product(a.tensor(), b.tensor(), mu), 0.0, 1e-13);
  const auto mv = bound_multivariate({a, b}, mu, 20, TestFunctionProfile{}, KappaConfig{}, MultivariateMode::C2);
  const double expected = std::max(1.0 / l2_norm(a, mu), 1.0 / l2_norm(b, mu));
  EXPECT_NEAR(mv.extras.at("v_inverse_sqrt_norm"), expected, 1e-10 * expected);
  EXPECT_TRUE(std::isfinite(mv.total));
  for (int which : {1, 2}) {
    EXPECT_TRUE(std::isfinite(
        bound_multivariate({a, b}, mu, 20, TestFunctionProfile{}, KappaConfig{}, MultivariateMode::C3, which).total));
  }
}

TEST(MultivariateBound, Errors) {
  std::mt19937_64 rng(64);
  const auto mu = random_measure(rng, 3);
  const auto a = random_degenerate(rng, 2, mu);
  EXPECT_THROW(bound_multivariate({a, a.scaled(2.0)}, mu, 20, TestFunctionProfile{}, KappaConfig{}, MultivariateMode::C2),
               PreconditionError);
  EXPECT_THROW(bound_multivariate({a, random_degenerate(rng, 1, mu)}, mu, 20, TestFunctionProfile{}, KappaConfig{},
                                  MultivariateMode::C3),
               ParameterError);
}

TEST(GenuLemma, IndexSets) {
  const auto diag = q_set(2, 2);
  EXPECT_EQ(diag, (std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {2, 2}}));
  EXPECT_EQ(q_set(0, 0), (std::vector<std::pair<int, int>>{{0, 0}}));
  for (const auto& [r, t] : q_set(3, 1)) {
    EXPECT_LE(t, 1);
    EXPECT_LE(r - t, 2);
    EXPECT_LE(t, r);
  }
}

TEST(GenuLemma, TensorProductCaseAndErrors) {
  std::mt19937_64 rng(65);
  const auto mu = random_measure(rng, 3);
  const auto set = decompose(random_kernel(rng, 3, 3), mu);
  EXPECT_NEAR(genulemma_bound(set, mu, 2, 3, 0, 0), l2_norm(set.g[2], mu) * l2_norm(set.g[3], mu), 1e-12);
  EXPECT_THROW(genulemma_bound(set, mu, 2, 3, 3, 0), ParameterError);
  EXPECT_THROW(genulemma_bound(set, mu, 1, 1, 1, 2), ParameterError);
}

TEST(GenuLemma, ComponentContractionsAreBoundedByGContractions) {
  std::mt19937_64 rng(66);
  double worst = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    const int p = 1 + trial % 3;
    const auto mu = random_measure(rng, 3);
    const auto set = decompose(random_kernel(rng, p, 3), mu);
    for (int i = 1; i <= p; ++i) {
      for (int k = 1; k <= p; ++k) {
        for (int s = 1; s <= std::min(i, k); ++s) {
          for (int l = 0; l <= s; ++l) {
            const double g = genulemma_bound(set, mu, i, k, s, l);
            const double exact = contraction_norm(set.psi[static_cast<std::size_t>(i)].tensor(),
                                                  set.psi[static_cast<std::size_t>(k)].tensor(), s, l, mu);
            ASSERT_GT(g, 0.0);
            worst = std::max(worst, exact / g / std::pow(2.0, i + k));
          }
        }
      }
    }
  }
  // psi_i is an alternating sum of 2^i marginals of g_i
  EXPECT_LE(worst, 1.0);
}

TEST(GeneralBound, NormalizationAndComponentNorms) {
  std::mt19937_64 rng(67);
  const auto mu = random_measure(rng, 3);
  const auto psi = random_kernel(rng, 3, 3);
  const auto b = bound_general(psi, mu, 20, TestFunctionProfile{}, KappaConfig{}, GeneralVariant::B);
  EXPECT_NEAR(b.extras.at("normalization"), 1.0, 1e-9);
  for (int i = 1; i <= 3; ++i) {
    const double c = b.extras.at("component_norm(" + std::to_string(i) + ")");
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0 + 1e-12);
  }
}

TEST(GeneralBound, DegenerateKernelOnlyHasTheTopCell) {
  std::mt19937_64 rng(68);
  const auto mu = random_measure(rng, 3);
  const auto psi = random_degenerate(rng, 2, mu);
  const auto b = bound_general(psi, mu, 20, TestFunctionProfile{}, KappaConfig{}, GeneralVariant::B);
  EXPECT_LE(b.extras.at("B(1,1)"), 1e-12);
  EXPECT_LE(b.extras.at("B(1,2)"), 1e-12);
  EXPECT_LE(b.extras.at("B(2,1)"), 1e-12);
  EXPECT_GT(b.extras.at("B(2,2)"), 0.0);
  EXPECT_NEAR(b.extras.at("component_norm(2)"), 1.0, 1e-12);
}

TEST(GeneralBound, ContractionTermsDecayWithN) {
  std::mt19937_64 rng(69);
  const auto mu = random_measure(rng, 3);
  const auto psi = random_kernel(rng, 2, 3);
  for (auto variant : {GeneralVariant::B, GeneralVariant::BPrime}) {
    const auto small = bound_general(psi, mu, 50, TestFunctionProfile{}, KappaConfig{}, variant);
    const auto large = bound_general(psi, mu, 200, TestFunctionProfile{}, KappaConfig{}, variant);
    EXPECT_TRUE(std::isfinite(small.total));
    EXPECT_LT(large.term("contraction"), small.term("contraction"));
    EXPECT_LT(large.total, small.total);
  }
}

TEST(GeneralBound, ExactSourceIsBelowTheGMaximumUpToTheEmpiricalConstant) {
  std::mt19937_64 rng(70);
  const auto mu = random_measure(rng, 3);
  const auto psi = random_kernel(rng, 2, 3);
  const auto g = bound_general(psi, mu, 30, TestFunctionProfile{}, KappaConfig{}, GeneralVariant::B, 1);
  const auto exact =
      bound_general(psi, mu, 30, TestFunctionProfile{}, KappaConfig{}, GeneralVariant::B, 1, ContractionSource::Exact);
  double khat = 0.0;
  for (const auto& [key, v] : g.extras) {
    if (key.rfind("khat(", 0) == 0) khat = std::max(khat, v);
  }
  EXPECT_LE(exact.term("contraction"), khat * g.term("contraction") + 1e-12);
  EXPECT_THROW(bound_general(psi, mu, 30, TestFunctionProfile{}, KappaConfig{}, GeneralVariant::BPrime, 1,
                             ContractionSource::Exact),
               ConfigurationError);
}

TEST(GeneralBound, L4ChainHoldsWithTheRecordedConstant) {
  std::mt19937_64 rng(71);
  const auto mu = random_measure(rng, 3);
  const auto psi = random_kernel(rng, 3, 3);
  const auto b = bound_general(psi, mu, 30, TestFunctionProfile{}, KappaConfig{}, GeneralVariant::B, 2);
  const auto set = decompose(SymmetricKernel::trusted(psi.tensor() - Tensor::constant(3, 3, expectation(psi.tensor(), mu))), mu);
  for (int i = 1; i <= 3; ++i) {
    double g_max = 0.0;
    for (int r = 0; r <= i; ++r) {
      g_max = std::max(g_max, contraction_norm(set.g[static_cast<std::size_t>(i)], set.g[static_cast<std::size_t>(i)], r, 0, mu));
    }
    const double l4sq = std::pow(l4_norm(set.psi[static_cast<std::size_t>(i)].tensor(), mu), 2);
    const double khat = b.extras.at("khat_l4(" + std::to_string(i) + ")");
    EXPECT_NEAR(l4sq, khat * g_max, 1e-12 * std::max(1.0, l4sq));
    EXPECT_LE(khat, std::pow(2.0, 2 * i));
  }
}

TEST(GeneralBound, ZeroVarianceIsAPreconditionError) {
  const auto mu = DiscreteMeasure::uniform(3);
  EXPECT_THROW(bound_general(SymmetricKernel::constant(2, 3, 1.0), mu, 10, TestFunctionProfile{}, KappaConfig{},
                             GeneralVariant::B),
               PreconditionError);
}

TEST(TestFunctionProfile, HessianDefaultsToSqrtDTimesM2) {
  TestFunctionProfile h{1.0, 2.0, 3.0, std::nullopt};
  EXPECT_NEAR(h.hessian_hs(4), 4.0, 1e-15);
  EXPECT_LE(h.hessian_hs(9), 3.0 * 2.0 + 1e-12);
  h.m2_tilde = 1.5;
  EXPECT_EQ(h.hessian_hs(9), 1.5);
}
