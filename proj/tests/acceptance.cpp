// Acceptance gate: `acceptance N` runs criterion N and prints one PASS/FAIL line.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include "test_support.hpp"
#include "ustat/bounds.hpp"
#include "ustat/contraction.hpp"
#include "ustat/geomgraph.hpp"
#include "ustat/hoeffding.hpp"
#include "ustat/io.hpp"
#include "ustat/montecarlo.hpp"
#include "ustat/product.hpp"

#ifndef USTAT_CLI_PATH
#error "USTAT_CLI_PATH must name the CLI binary"
#endif

using namespace ustat;
using namespace testing_support;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

class Stopwatch {
public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::vector<long long> powers_of_two(int lo, int hi) {
  std::vector<long long> ns;
  for (int e = lo; e <= hi; ++e) ns.push_back(1LL << e);
  return ns;
}

RegimeOptions sweep_options() {
  RegimeOptions o;
  o.threads = 0;
  return o;
}

RegimeReport c4_sweep() {
  return regime_experiment(GraphPattern::edge(), DensityModel::uniform_box(2), RadiusSchedule{Regime::C4, 0.0, 1.0},
                           powers_of_two(8, 13), 2000, 2024, sweep_options());
}

RegimeReport c3_sweep() {
  return regime_experiment(GraphPattern::edge(), DensityModel::gaussian(2), RadiusSchedule{Regime::C3, 0.5, 1.0},
                           powers_of_two(8, 13), 2000, 2025, sweep_options());
}

void product_formula(Outcome& o) {
  Stopwatch clock;
  std::mt19937_64 rng(1001);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int p = 1 + trial % 2, q = 1 + (trial / 2) % 2;
    const auto mu = random_measure(rng, 3);
    const auto check = verify_product_formula(random_degenerate(rng, p, mu), random_degenerate(rng, q, mu), 5, mu);
    o.require(check.exhaustive, "exhaustive enumeration");
    worst = std::max(worst, check.max_residual);
  }
  o.detail << "max residual " << fmt(worst) << ", " << fmt(clock.seconds()) << " s";
  o.require(worst <= 1e-8, "residual <= 1e-8");
  o.require(clock.seconds() <= 10.0, "runtime <= 10 s");
}

void reconstruction(Outcome& o) {
  Stopwatch clock;
  std::mt19937_64 rng(1002);
  double worst_residual = 0.0, worst_defect = 0.0, worst_route = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int p = 1 + trial % 3;
    const int m = 2 + trial % 2;
    const int n = p + (trial / 3) % (6 - p);
    const auto mu = random_measure(rng, m);
    const auto set = decompose(random_kernel(rng, p, m), mu);
    worst_route = std::max(worst_route, set.route_discrepancy);
    for (int s = 1; s <= p; ++s) {
      worst_defect = std::max(worst_defect, degeneracy_defect(set.psi[static_cast<std::size_t>(s)], mu).max_abs());
    }
    for_each_sample(mu, n, [&](std::span<const int> x, double) {
      worst_residual = std::max(worst_residual, reconstruct_check(set, x));
    });
  }
  o.detail << "max residual " << fmt(worst_residual) << ", max defect " << fmt(worst_defect) << ", route discrepancy "
           << fmt(worst_route) << ", " << fmt(clock.seconds()) << " s";
  o.require(worst_residual <= 1e-9, "reconstruction <= 1e-9");
  o.require(worst_defect <= 1e-10, "degeneracy defect <= 1e-10");
  o.require(worst_route <= 1e-10, "route agreement <= 1e-10");
  o.require(clock.seconds() <= 10.0, "runtime <= 10 s");
}

void variance_agreement(Outcome& o) {
  Stopwatch clock;
  std::mt19937_64 rng(1003);
  double worst_rel = 0.0;
  int below = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int p = 1 + trial % 3;
    const int m = 2 + trial % 3;
    const auto mu = random_measure(rng, m);
    const long long n = p + trial % 20;
    const auto v = variance(random_kernel(rng, p, m), mu, n);
    worst_rel = std::max(worst_rel, std::abs(v.hoeffding - v.g_based) / std::max({std::abs(v.hoeffding), std::abs(v.g_based), 1e-300}));
    const double slack = 1e-12 * std::abs(v.lower_bound);
    if (v.hoeffding < v.lower_bound - slack || v.g_based < v.lower_bound - slack) ++below;
  }
  o.detail << "max relative gap " << fmt(worst_rel) << ", lower-bound violations " << below << ", "
           << fmt(clock.seconds()) << " s";
  o.require(worst_rel <= 1e-9, "relative agreement <= 1e-9");
  o.require(below == 0, "both formulas above the lower bound");
  o.require(clock.seconds() <= 5.0, "runtime <= 5 s");
}

void contraction_lemma(Outcome& o) {
  Stopwatch clock;
  std::mt19937_64 rng(1004);
  int failures = 0;
  double worst_vi = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int p = 1 + trial % 3, q = 1 + (trial / 3) % 3;
    const int m = 2 + (trial / 9) % 3;
    const auto mu = random_measure(rng, m);
    const auto report = verify_contraction_lemma(random_kernel(rng, p, m), random_kernel(rng, q, m), mu);
    if (!report.all_passed()) ++failures;
    worst_vi = std::max(worst_vi, report.checks[5].margin);
  }
  o.detail << "failed pairs " << failures << ", item (vi) max gap " << fmt(worst_vi) << ", " << fmt(clock.seconds())
           << " s";
  o.require(failures == 0, "all six checks");
  o.require(worst_vi <= 1e-9, "item (vi) within 1e-9");
  o.require(clock.seconds() <= 30.0, "runtime <= 30 s");
}

void a_ordering(Outcome& o) {
  std::mt19937_64 rng(1005);
  int violations = 0;
  double worst = -INFINITY;
  for (int trial = 0; trial < 50; ++trial) {
    const int p = 1 + trial % 3, q = 1 + (trial / 3) % 3;
    const int m = 2 + trial % 3;
    const auto mu = random_measure(rng, m);
    const long long n = p + q + trial % 10;
    try {
      const auto a = a_quantities(random_degenerate(rng, p, mu), random_degenerate(rng, q, mu), mu, n);
      worst = std::max(worst, a.a1 - a.a2);
      if (a.a1 > a.a2 + 1e-12) ++violations;
    } catch (const ContractViolation&) {
      ++violations;
    }
  }
  o.detail << "violations " << violations << ", max A1 - A2 " << fmt(worst);
  o.require(violations == 0, "A1 <= A2 + 1e-12");
}

void scale_invariance(Outcome& o) {
  std::mt19937_64 rng(1006);
  double worst = 0.0;
  auto compare = [&](double a, double b) { worst = std::max(worst, std::abs(a - b) / std::max(std::abs(a), 1e-300)); };
  for (int trial = 0; trial < 20; ++trial) {
    const int p = 1 + trial % 3;
    const auto mu = random_measure(rng, 3);
    const long long n = p + 8;
    const auto degenerate = random_degenerate(rng, p, mu);
    const auto general = random_kernel(rng, p, 3);
    const auto [b1, b2] = bound_degenerate_1d(degenerate, mu, n, KappaConfig{});
    const auto [c1, c2] = bound_degenerate_1d(degenerate.scaled(3.0), mu, n, KappaConfig{});
    compare(b1.total, c1.total);
    compare(b2.total, c2.total);
    compare(bound_dominant(general, mu, n, KappaConfig{}).total,
            bound_dominant(general.scaled(3.0), mu, n, KappaConfig{}).total);
    for (auto variant : {GeneralVariant::B, GeneralVariant::BPrime}) {
      for (int which : {1, 2}) {
        compare(bound_general(general, mu, n, TestFunctionProfile{}, KappaConfig{}, variant, which).total,
                bound_general(general.scaled(3.0), mu, n, TestFunctionProfile{}, KappaConfig{}, variant, which).total);
      }
    }
  }
  o.detail << "max relative change " << fmt(worst);
  o.require(worst <= 1e-9, "relative change <= 1e-9");
}

void one_dim_calibration(Outcome& o) {
  Stopwatch clock;
  const SymmetricKernel coin(Tensor(1, 2, {1, -1}));
  const auto mu = DiscreteMeasure::uniform(2);
  const std::uint64_t reps = 10000;
  std::vector<double> ns{1e2, 1e3, 1e4}, ds;
  for (double n : ns) {
    const auto rep = simulate(coin, mu, static_cast<long long>(n), reps, 7007, NormalizationSource::Exact);
    ds.push_back(wasserstein_to_normal(rep).estimate);
  }
  const auto fit = rate_fit(ns, ds, 3);
  o.detail << "d_W " << fmt(ds[0]) << ", " << fmt(ds[1]) << ", " << fmt(ds[2]) << "; null level at R=1e4 "
           << fmt(wasserstein_null_level(reps, 7007).estimate) << "; slope " << fmt(fit.slope) << " (target -0.5 +- 0.15), "
           << fmt(clock.seconds()) << " s";
  o.require(std::abs(fit.slope + 0.5) <= 0.15, "slope within -0.5 +- 0.15");
  o.require(clock.seconds() <= 120.0, "runtime <= 2 min");
}

void variance_c4(Outcome& o) {
  Stopwatch clock;
  const auto r = c4_sweep();
  o.detail << "variance slope " << fmt(r.var_fit.slope) << " (target 1 +- 0.15), " << fmt(clock.seconds()) << " s";
  o.require(std::abs(r.var_fit.slope - 1.0) <= 0.15, "variance exponent");
  o.require(clock.seconds() <= 300.0, "runtime <= 5 min");
}

void variance_c3(Outcome& o) {
  Stopwatch clock;
  const auto r = c3_sweep();
  o.detail << "variance slope " << fmt(r.var_fit.slope) << " (target " << fmt(r.var_fit.target) << " +- 0.2), "
           << fmt(clock.seconds()) << " s";
  o.require(std::abs(r.var_fit.slope - 2.0) <= 0.2, "variance exponent");
  o.require(clock.seconds() <= 300.0, "runtime <= 5 min");
}

void clt_rate(Outcome& o) {
  for (const auto& [name, report] : {std::pair{"C3", c3_sweep()}, std::pair{"C4", c4_sweep()}}) {
    const double last = report.records.back().dw;
    o.detail << name << ": d_W slope " << fmt(report.dw_fit.slope) << ", d_W at n=" << report.records.back().n << " "
             << fmt(last) << " (null level " << fmt(report.dw_null_level) << "); ";
    o.require(std::abs(report.dw_fit.slope + 0.5) <= 0.2, std::string(name) + " slope within -0.5 +- 0.2");
    o.require(last <= 0.1, std::string(name) + " d_W at largest n <= 0.1");
  }
}

void c2_safeguard(Outcome& o) {
  const auto r = regime_experiment(GraphPattern::edge(), DensityModel::uniform_box(2),
                                   RadiusSchedule{Regime::C2, 0.5, 1.0}, powers_of_two(8, 12), 2000, 2026,
                                   sweep_options());
  int held = 0;
  for (const auto& rec : r.records) {
    if (rec.lower_bound && rec.lower_bound->holds) ++held;
  }
  o.detail << "lower bound held at " << held << "/" << r.records.size() << " sizes; variance kind " << r.var_fit.kind
           << ", distance kind " << r.dw_fit.kind;
  o.require(held == static_cast<int>(r.records.size()), "lower bound at every n");
  o.require(r.var_fit.kind == "lower-bound", "variance flagged as a bound");
  o.require(r.dw_fit.kind == "upper-bound", "distance flagged as a bound");
  o.require(r.mean_fit.kind == "asymptotic", "mean fit kind");
}

void contraction_scaling(Outcome& o) {
  Stopwatch clock;
  std::vector<double> ts{0.4, 0.2, 0.1, 0.05}, norms;
  int unreliable = 0;
  for (double t : ts) {
    const auto e = gk_contraction_mc(GraphPattern::edge(), DensityModel::uniform_box(2), t, 2, 2, 1, 1, 200000, 4242);
    norms.push_back(e.norm);
    if (e.unreliable) ++unreliable;
  }
  const auto fit = rate_fit(ts, norms);
  o.detail << "norms";
  for (double v : norms) o.detail << " " << fmt(v);
  o.detail << "; slope " << fmt(fit.slope) << " (target 3 +- 0.5), unreliable estimates " << unreliable << ", "
           << fmt(clock.seconds()) << " s";
  o.require(std::abs(fit.slope - 3.0) <= 0.5, "slope within 3 +- 0.5");
  o.require(clock.seconds() <= 180.0, "runtime <= 3 min");
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void cli_determinism(Outcome& o) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("ustat_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  std::mt19937_64 rng(1013);
  const auto mu = random_measure(rng, 3);
  auto put = [&](const std::string& name, const Json& j) {
    std::ofstream(dir / name) << j.dump();
    return (dir / name).string();
  };
  Json weights;
  weights["weights"] = mu.weights();
  const auto m = put("mu.json", weights);
  const auto k = put("k.json", tensor_to_json(random_degenerate(rng, 2, mu).tensor()));
  const auto g = put("g.json", tensor_to_json(random_kernel(rng, 2, 3).tensor()));
  const std::vector<std::pair<std::string, std::string>> commands{
      {"decompose", "decompose --kernel " + g + " --measure " + m + " --n 12"},
      {"contract", "contract --psi " + g + " --phi " + k + " --measure " + m + " --r 1 --l 1"},
      {"product-check", "product-check --psi " + k + " --phi " + k + " --measure " + m + " --n 6"},
      {"bound", "bound --kernel " + g + " --measure " + m + " --n 30 --variant general-B"},
      {"simulate", "simulate --kernel " + g + " --measure " + m + " --n 60 --reps 2000 --normalization exact"},
      {"geomgraph", "geomgraph --pattern triangle --regime C4 --rho 2 --ns 128,256,512 --reps 300"},
  };
  int identical = 0;
  for (const auto& [name, args] : commands) {
    std::string reports[2];
    bool ran = true;
    for (int run = 0; run < 2; ++run) {
      // same --out path both times: the path is part of the embedded config
      const auto out = dir / (name + ".json");
      fs::remove(out);
      const std::string cmd = std::string(USTAT_CLI_PATH) + " --seed 31 --threads 1 --out " + out.string() + " " + args + " 2>&1";
      ran = ran && std::system(cmd.c_str()) == 0;
      reports[run] = slurp(out);
    }
    const bool same = ran && !reports[0].empty() && reports[0] == reports[1];
    if (same) ++identical;
    o.require(same, name + " reports identical");
  }
  fs::remove_all(dir);
  o.detail << identical << "/" << commands.size() << " commands byte-identical across reruns";
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<void(Outcome&)>> criteria{
      product_formula,  reconstruction, variance_agreement, contraction_lemma, a_ordering,
      scale_invariance, one_dim_calibration, variance_c4,   variance_c3,       clt_rate,
      c2_safeguard,     contraction_scaling, cli_determinism};
  if (argc != 2) {
    std::cerr << "usage: acceptance <criterion 1-" << criteria.size() << ">\n";
    return 2;
  }
  const int which = std::atoi(argv[1]);
  if (which < 1 || which > static_cast<int>(criteria.size())) {
    std::cerr << "unknown criterion " << argv[1] << "\n";
    return 2;
  }
  Outcome outcome;
  try {
    criteria[static_cast<std::size_t>(which - 1)](outcome);
  } catch (const std::exception& e) {
    outcome.pass = false;
    outcome.detail << " [exception: " << e.what() << "]";
  }
  std::cout << (outcome.pass ? "PASS" : "FAIL") << " criterion " << which << ": " << outcome.detail.str() << std::endl;
  return outcome.pass ? 0 : 1;
}
