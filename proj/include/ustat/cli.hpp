#pragma once

// Command-line front end. parse_command_line turns argv into an
// ExperimentConfig; run executes one and writes its report. Exit codes:
// 0 success, 2 invalid input, 3 capacity exceeded, 4 numeric contract violated.

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ustat/bounds.hpp"
#include "ustat/contraction.hpp"
#include "ustat/geomgraph.hpp"
#include "ustat/hoeffding.hpp"
#include "ustat/io.hpp"
#include "ustat/montecarlo.hpp"
#include "ustat/parallel.hpp"
#include "ustat/product.hpp"

namespace ustat::cli {

enum ExitCode : int { kOk = 0, kInvalid = 2, kCapacity = 3, kContract = 4 };

struct DecomposeParams {
  std::string kernel;
  std::string measure;
  std::optional<long long> n;
  bool operator==(const DecomposeParams&) const = default;
};

struct ContractParams {
  std::string psi;
  std::string phi;
  std::string measure;
  int r = 0;
  int l = 0;
  bool operator==(const ContractParams&) const = default;
};

struct ProductCheckParams {
  std::string psi;
  std::string phi;
  std::string measure;
  long long n = 0;
  std::optional<std::uint64_t> mc;
  bool operator==(const ProductCheckParams&) const = default;
};

struct BoundParams {
  std::string kernel;
  std::string measure;
  long long n = 0;
  std::optional<std::string> kappa;
  std::string variant = "b1";
  std::vector<double> profile{1.0, 1.0, 1.0};
  int which_b = 1;
  bool operator==(const BoundParams&) const = default;
};

struct SimulateParams {
  std::string kernel;
  std::string measure;
  long long n = 0;
  std::uint64_t reps = 0;
  std::string normalization = "exact";
  std::optional<std::string> dump;
  bool operator==(const SimulateParams&) const = default;
};

struct GeomgraphParams {
  std::string pattern = "edge";
  std::string density = "uniform-box";
  int dim = 2;
  std::string regime = "C4";
  std::optional<double> beta;
  std::optional<double> rho;
  std::vector<long long> ns;
  std::uint64_t reps = 2000;
  bool operator==(const GeomgraphParams&) const = default;
};

using CommandParams =
    std::variant<DecomposeParams, ContractParams, ProductCheckParams, BoundParams, SimulateParams, GeomgraphParams>;

/// One fully specified invocation.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  int threads = 0;  ///< 0: USTAT_THREADS, else 1
  std::optional<std::string> out;
  std::optional<std::string> csv;
  CommandParams params;

  std::string command() const {
    static const char* names[] = {"decompose", "contract", "product-check", "bound", "simulate", "geomgraph"};
    return names[params.index()];
  }
  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

template <typename T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

template <typename T>
std::optional<T> optional_from(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace detail

inline Json params_to_json(const CommandParams& params) {
  Json j;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DecomposeParams>) {
          j["kernel"] = p.kernel;
          j["measure"] = p.measure;
          j["n"] = detail::optional_json(p.n);
        } else if constexpr (std::is_same_v<T, ContractParams>) {
          j["psi"] = p.psi;
          j["phi"] = p.phi;
          j["measure"] = p.measure;
          j["r"] = p.r;
          j["l"] = p.l;
        } else if constexpr (std::is_same_v<T, ProductCheckParams>) {
          j["psi"] = p.psi;
          j["phi"] = p.phi;
          j["measure"] = p.measure;
          j["n"] = p.n;
          j["mc"] = detail::optional_json(p.mc);
        } else if constexpr (std::is_same_v<T, BoundParams>) {
          j["kernel"] = p.kernel;
          j["measure"] = p.measure;
          j["n"] = p.n;
          j["kappa"] = detail::optional_json(p.kappa);
          j["variant"] = p.variant;
          j["profile"] = p.profile;
          j["which_b"] = p.which_b;
        } else if constexpr (std::is_same_v<T, SimulateParams>) {
          j["kernel"] = p.kernel;
          j["measure"] = p.measure;
          j["n"] = p.n;
          j["reps"] = p.reps;
          j["normalization"] = p.normalization;
          j["dump"] = detail::optional_json(p.dump);
        } else {
          j["pattern"] = p.pattern;
          j["density"] = p.density;
          j["dim"] = p.dim;
          j["regime"] = p.regime;
          j["beta"] = detail::optional_json(p.beta);
          j["rho"] = detail::optional_json(p.rho);
          j["ns"] = p.ns;
          j["reps"] = p.reps;
        }
      },
      params);
  return j;
}

inline Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["command"] = c.command();
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["out"] = detail::optional_json(c.out);
  j["csv"] = detail::optional_json(c.csv);
  j["params"] = params_to_json(c.params);
  return j;
}

inline ExperimentConfig config_from_json(const Json& j) {
  try {
    ExperimentConfig c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.threads = j.at("threads").get<int>();
    c.out = detail::optional_from<std::string>(j, "out");
    c.csv = detail::optional_from<std::string>(j, "csv");
    const auto command = j.at("command").get<std::string>();
    const Json& p = j.at("params");
    if (command == "decompose") {
      c.params = DecomposeParams{p.at("kernel"), p.at("measure"), detail::optional_from<long long>(p, "n")};
    } else if (command == "contract") {
      c.params = ContractParams{p.at("psi"), p.at("phi"), p.at("measure"), p.at("r"), p.at("l")};
    } else if (command == "product-check") {
      c.params = ProductCheckParams{p.at("psi"), p.at("phi"), p.at("measure"), p.at("n"),
                                    detail::optional_from<std::uint64_t>(p, "mc")};
    } else if (command == "bound") {
      c.params = BoundParams{p.at("kernel"),  p.at("measure"), p.at("n"),      detail::optional_from<std::string>(p, "kappa"),
                             p.at("variant"), p.at("profile"), p.at("which_b")};
    } else if (command == "simulate") {
      c.params = SimulateParams{p.at("kernel"), p.at("measure"), p.at("n"), p.at("reps"), p.at("normalization"),
                                detail::optional_from<std::string>(p, "dump")};
    } else if (command == "geomgraph") {
      c.params = GeomgraphParams{p.at("pattern"), p.at("density"), p.at("dim"),  p.at("regime"),
                                 detail::optional_from<double>(p, "beta"), detail::optional_from<double>(p, "rho"),
                                 p.at("ns"),      p.at("reps")};
    } else {
      throw InputError("command", "unknown command '" + command + "'");
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config", e.what());
  }
}

// ---------------------------------------------------------------- parsing

struct ParseOutcome {
  std::optional<ExperimentConfig> config;
  int exit_code = kOk;  ///< meaningful when config is empty (help or parse error)
};

inline ParseOutcome parse_command_line(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hoeffding decompositions, contractions, product formula, CLT bounds and simulations"};
  app.require_subcommand(1);
  app.fallthrough();

  ExperimentConfig config;
  std::string out_path, csv_path;
  app.add_option("--seed", config.seed, "Random seed");
  app.add_option("--threads", config.threads, "Worker threads (default: USTAT_THREADS, else 1)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--out", out_path, "Write the JSON report here instead of stdout");
  app.add_option("--csv", csv_path, "Write the per-n table here (geomgraph)");

  DecomposeParams dec;
  auto* dec_cmd = app.add_subcommand("decompose", "Hoeffding decomposition of a kernel");
  dec_cmd->add_option("--kernel", dec.kernel)->required();
  dec_cmd->add_option("--measure", dec.measure)->required();
  std::optional<long long> dec_n;
  dec_cmd->add_option("--n", dec_n)->check(CLI::PositiveNumber);

  ContractParams con;
  auto* con_cmd = app.add_subcommand("contract", "Contraction of two kernels");
  con_cmd->add_option("--psi", con.psi)->required();
  con_cmd->add_option("--phi", con.phi)->required();
  con_cmd->add_option("--measure", con.measure)->required();
  con_cmd->add_option("--r", con.r)->required()->check(CLI::NonNegativeNumber);
  con_cmd->add_option("--l", con.l)->required()->check(CLI::NonNegativeNumber);

  ProductCheckParams prod;
  auto* prod_cmd = app.add_subcommand("product-check", "Verify the product formula");
  prod_cmd->add_option("--psi", prod.psi)->required();
  prod_cmd->add_option("--phi", prod.phi)->required();
  prod_cmd->add_option("--measure", prod.measure)->required();
  prod_cmd->add_option("--n", prod.n)->required()->check(CLI::PositiveNumber);
  std::optional<std::uint64_t> prod_mc;
  prod_cmd->add_option("--mc", prod_mc, "Monte Carlo replicates instead of exhaustive enumeration")
      ->check(CLI::PositiveNumber);

  BoundParams bnd;
  auto* bnd_cmd = app.add_subcommand("bound", "Normal approximation bounds");
  bnd_cmd->add_option("--kernel", bnd.kernel)->required();
  bnd_cmd->add_option("--measure", bnd.measure)->required();
  bnd_cmd->add_option("--n", bnd.n)->required()->check(CLI::PositiveNumber);
  std::optional<std::string> bnd_kappa;
  bnd_cmd->add_option("--kappa", bnd_kappa, "JSON file of kappa constants by order");
  bnd_cmd->add_option("--variant", bnd.variant)
      ->check(CLI::IsMember({"b1", "b2", "dominant", "general-B", "general-Bprime"}));
  bnd_cmd->add_option("--profile", bnd.profile, "m1,m2,m3")->delimiter(',')->expected(3);
  bnd_cmd->add_option("--which-b", bnd.which_b, "B_1 or B_2 in the general bound")->check(CLI::IsMember({1, 2}));

  SimulateParams sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo replicates of a normalized U-statistic");
  sim_cmd->add_option("--kernel", sim.kernel)->required();
  sim_cmd->add_option("--measure", sim.measure)->required();
  sim_cmd->add_option("--n", sim.n)->required()->check(CLI::PositiveNumber);
  sim_cmd->add_option("--reps", sim.reps)->required()->check(CLI::PositiveNumber);
  sim_cmd->add_option("--normalization", sim.normalization)->check(CLI::IsMember({"exact", "empirical"}));
  std::optional<std::string> sim_dump;
  sim_cmd->add_option("--dump", sim_dump, "Write one replicate value per line");

  GeomgraphParams geo;
  auto* geo_cmd = app.add_subcommand("geomgraph", "Subgraph counts in random geometric graphs");
  geo_cmd->add_option("--pattern", geo.pattern, "edge, triangle, path3, or a pattern JSON file");
  geo_cmd->add_option("--density", geo.density)->check(CLI::IsMember({"uniform-box", "uniform-ball", "gaussian"}));
  geo_cmd->add_option("--dim", geo.dim)->check(CLI::PositiveNumber);
  geo_cmd->add_option("--regime", geo.regime)->check(CLI::IsMember({"C1", "C2", "C3", "C4"}));
  std::optional<double> geo_beta, geo_rho;
  geo_cmd->add_option("--beta", geo_beta);
  geo_cmd->add_option("--rho", geo_rho);
  geo_cmd->add_option("--ns", geo.ns)->delimiter(',')->required();
  geo_cmd->add_option("--reps", geo.reps)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return {std::nullopt, code == 0 ? kOk : kInvalid};
  }

  if (!out_path.empty()) config.out = out_path;
  if (!csv_path.empty()) config.csv = csv_path;
  if (dec_cmd->parsed()) {
    dec.n = dec_n;
    config.params = dec;
  } else if (con_cmd->parsed()) {
    config.params = con;
  } else if (prod_cmd->parsed()) {
    prod.mc = prod_mc;
    config.params = prod;
  } else if (bnd_cmd->parsed()) {
    bnd.kappa = bnd_kappa;
    config.params = bnd;
  } else if (sim_cmd->parsed()) {
    sim.dump = sim_dump;
    config.params = sim;
  } else {
    geo.beta = geo_beta;
    geo.rho = geo_rho;
    config.params = geo;
  }
  return {config, kOk};
}

// ---------------------------------------------------------------- commands

namespace detail {

inline Json norms_array(const std::vector<double>& v) { return Json(v); }

inline Json run_decompose(const DecomposeParams& p) {
  const auto kernel = load_kernel(p.kernel, "--kernel");
  const auto mu = load_measure(p.measure, "--measure");
  const auto set = decompose(kernel, mu);
  Json j;
  std::vector<double> g_norms, psi_norms, defects;
  Json psi = Json::array();
  for (int s = 0; s <= set.order(); ++s) {
    g_norms.push_back(l2_norm(set.g[static_cast<std::size_t>(s)], mu));
    psi_norms.push_back(l2_norm(set.psi[static_cast<std::size_t>(s)], mu));
    defects.push_back(s == 0 ? 0.0 : degeneracy_defect(set.psi[static_cast<std::size_t>(s)], mu).max_abs());
    psi.push_back(tensor_to_json(set.psi[static_cast<std::size_t>(s)].tensor()));
  }
  j["mean"] = set.mean();
  j["g_norms"] = g_norms;
  j["psi_norms"] = psi_norms;
  j["degeneracy_defects"] = defects;
  j["route_discrepancy"] = set.route_discrepancy;
  const auto rank = hoeffding_rank(kernel, mu);
  j["hoeffding_rank"] = rank ? Json(*rank) : Json(nullptr);
  j["psi"] = psi;
  if (p.n) {
    const auto v = variance(set, mu, *p.n);
    Json var;
    var["hoeffding"] = v.hoeffding;
    var["g_based"] = v.g_based;
    var["lower_bound"] = v.lower_bound;
    j["variance"] = var;
  }
  return j;
}

inline Json run_contract(const ContractParams& p) {
  const auto psi = load_kernel(p.psi, "--psi");
  const auto phi = load_kernel(p.phi, "--phi");
  const auto mu = load_measure(p.measure, "--measure");
  const auto c = contract(psi, phi, p.r, p.l, mu);
  Json j;
  j["r"] = c.r;
  j["l"] = c.l;
  j["l2_norm"] = c.l2_norm;
  j["l4_norm"] = c.tensor.order() == 0 ? std::abs(c.tensor.scalar_value()) : l4_norm(c.tensor, mu);
  j["tensor"] = tensor_to_json(c.tensor);
  return j;
}

inline Json run_product_check(const ProductCheckParams& p, std::uint64_t seed) {
  const auto psi = load_kernel(p.psi, "--psi");
  const auto phi = load_kernel(p.phi, "--phi");
  const auto mu = load_measure(p.measure, "--measure");
  const auto check = verify_product_formula(psi, phi, p.n, mu, p.mc, seed);
  Json j;
  j["max_residual"] = check.max_residual;
  j["max_product"] = check.max_product;
  j["samples"] = check.samples;
  j["exhaustive"] = check.exhaustive;
  j["per_t_norms"] = check.chi_norms;
  return j;
}

inline Json run_bound(const BoundParams& p) {
  const auto kernel = load_kernel(p.kernel, "--kernel");
  const auto mu = load_measure(p.measure, "--measure");
  const KappaConfig kappa = p.kappa ? kappa_from_json(read_json_file(*p.kappa, "--kappa"), "--kappa") : KappaConfig{};
  if (p.profile.size() != 3) throw InputError("--profile", "expected three values m1,m2,m3");
  for (double v : p.profile) {
    if (!(v >= 0.0)) throw InputError("--profile", "seminorms must be non-negative");
  }
  TestFunctionProfile profile{p.profile[0], p.profile[1], p.profile[2], std::nullopt};
  BoundReport report;
  if (p.variant == "b1" || p.variant == "b2") {
    const auto [b1, b2] = bound_degenerate_1d(kernel, mu, p.n, kappa);
    report = p.variant == "b1" ? b1 : b2;
  } else if (p.variant == "dominant") {
    report = bound_dominant(kernel, mu, p.n, kappa);
  } else {
    const auto variant = p.variant == "general-B" ? GeneralVariant::B : GeneralVariant::BPrime;
    report = bound_general(kernel, mu, p.n, profile, kappa, variant, p.which_b);
  }
  Json j;
  j["variant"] = p.variant;
  j["bound"] = bound_report_to_json(report);
  return j;
}

inline Json run_simulate(const SimulateParams& p, std::uint64_t seed, int threads) {
  const auto kernel = load_kernel(p.kernel, "--kernel");
  const auto mu = load_measure(p.measure, "--measure");
  const auto source = p.normalization == "exact" ? NormalizationSource::Exact : NormalizationSource::Empirical;
  const auto rep = simulate(kernel, mu, p.n, p.reps, seed, source, threads);
  const auto dw = wasserstein_to_normal(rep);
  const auto ms = mean_sd(rep.values);
  Json j;
  Json norm;
  norm["mean"] = rep.normalization.mean;
  norm["sd"] = rep.normalization.sd;
  norm["source"] = to_string(rep.normalization.source);
  j["normalization"] = norm;
  Json summary;
  summary["count"] = rep.values.size();
  summary["mean"] = ms.mean;
  summary["sd"] = ms.sd;
  summary["min"] = *std::min_element(rep.values.begin(), rep.values.end());
  summary["max"] = *std::max_element(rep.values.begin(), rep.values.end());
  j["summary"] = summary;
  j["dw"] = dw.estimate;
  j["dw_se"] = dw.bootstrap_se;
  j["dw_null_level"] = wasserstein_null_level(rep.values.size(), seed).estimate;
  if (p.dump) {
    std::string text;
    for (double v : rep.values) text += format_double(v) + "\n";
    write_text_file(*p.dump, text, "--dump");
  }
  return j;
}

inline GraphPattern resolve_pattern(const std::string& name) {
  if (name == "edge") return GraphPattern::edge();
  if (name == "triangle") return GraphPattern::triangle();
  if (name == "path3") return GraphPattern::path3();
  return pattern_from_json(read_json_file(name, "--pattern"), "--pattern");
}

inline DensityModel resolve_density(const std::string& name, int dim) {
  if (name == "uniform-box") return DensityModel::uniform_box(dim);
  if (name == "uniform-ball") return DensityModel::uniform_ball(dim);
  if (name == "gaussian") return DensityModel::gaussian(dim);
  throw InputError("--density", "unknown density '" + name + "'");
}

inline RadiusSchedule resolve_schedule(const GeomgraphParams& p) {
  RadiusSchedule s;
  if (p.regime == "C4") {
    s.regime = Regime::C4;
    if (p.beta) throw InputError("--beta", "regime C4 takes --rho, not --beta");
    s.rho = p.rho.value_or(1.0);
    return s;
  }
  s.regime = p.regime == "C1" ? Regime::C1 : p.regime == "C2" ? Regime::C2 : Regime::C3;
  if (p.rho) throw InputError("--rho", "regime " + p.regime + " takes --beta, not --rho");
  if (!p.beta) throw InputError("--beta", "regime " + p.regime + " requires --beta");
  s.beta = *p.beta;
  return s;
}

inline Json fit_to_json(const ExponentFit& f) {
  Json j;
  j["slope"] = f.slope;
  j["stderr"] = f.stderr_slope;
  j["target"] = f.target;
  j["kind"] = f.kind;
  return j;
}

inline Json run_geomgraph(const GeomgraphParams& p, std::uint64_t seed, int threads, std::string& csv) {
  const auto pattern = resolve_pattern(p.pattern);
  const auto density = resolve_density(p.density, p.dim);
  const auto schedule = resolve_schedule(p);
  try {
    schedule.validate(pattern.p());
  } catch (const ParameterError& e) {
    throw InputError(schedule.regime == Regime::C4 ? "--rho" : "--beta", e.what());
  }
  RegimeOptions options;
  options.threads = threads;
  const auto report = regime_experiment(pattern, density, schedule, p.ns, p.reps, seed, options);

  Json j;
  j["pattern"] = pattern_to_json(pattern);
  j["density"] = report.density;
  j["dim"] = report.d;
  j["regime"] = to_string(schedule.regime);
  j["effective_beta"] = schedule.effective_beta();
  j["feasibility"] = {{"estimate", report.feasibility_estimate}, {"se", report.feasibility_se},
                      {"feasible", report.feasible}};
  Json records = Json::array();
  csv = "n,t,mean,mean_se,var,var_se,dw,dw_se\n";
  for (const auto& r : report.records) {
    Json rec;
    rec["n"] = r.n;
    rec["t"] = r.t;
    rec["mean"] = r.mean;
    rec["mean_se"] = r.mean_se;
    rec["var"] = r.var;
    rec["var_se"] = r.var_se;
    rec["dw"] = r.dw;
    rec["dw_se"] = r.dw_se;
    if (r.lower_bound) {
      rec["variance_lower_bound"] = {{"lhs", r.lower_bound->lhs},     {"lhs_se", r.lower_bound->lhs_se},
                                     {"rhs", r.lower_bound->rhs},     {"rhs_se", r.lower_bound->rhs_se},
                                     {"q_hat", r.lower_bound->q_hat}, {"holds", r.lower_bound->holds}};
    }
    records.push_back(rec);
    csv += std::to_string(r.n);
    for (double v : {r.t, r.mean, r.mean_se, r.var, r.var_se, r.dw, r.dw_se}) csv += "," + format_double(v);
    csv += "\n";
  }
  j["records"] = records;
  j["fits"] = {{"mean", fit_to_json(report.mean_fit)},
               {"variance", fit_to_json(report.var_fit)},
               {"dw", fit_to_json(report.dw_fit)}};
  j["dw_null_level"] = report.dw_null_level;
  j["notes"] = report.notes;
  return j;
}

}  // namespace detail

/// Executes the command and writes the report (stdout unless config.out).
inline int run(const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
  try {
    const int threads = resolve_threads(config.threads);
    ExperimentConfig resolved = config;
    resolved.threads = threads;
    Json report;
    report["config"] = config_to_json(resolved);
    std::string csv;
    Json result = std::visit(
        [&](const auto& p) -> Json {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, DecomposeParams>) return detail::run_decompose(p);
          else if constexpr (std::is_same_v<T, ContractParams>) return detail::run_contract(p);
          else if constexpr (std::is_same_v<T, ProductCheckParams>) return detail::run_product_check(p, config.seed);
          else if constexpr (std::is_same_v<T, BoundParams>) return detail::run_bound(p);
          else if constexpr (std::is_same_v<T, SimulateParams>) return detail::run_simulate(p, config.seed, threads);
          else return detail::run_geomgraph(p, config.seed, threads, csv);
        },
        config.params);
    report["result"] = std::move(result);
    const std::string text = to_canonical_string(report);
    if (config.out) {
      write_text_file(*config.out, text, "--out");
    } else {
      out << text;
    }
    if (config.csv) {
      if (csv.empty()) throw InputError("--csv", "only the geomgraph command writes a CSV table");
      write_text_file(*config.csv, csv, "--csv");
    }
    return kOk;
  } catch (const ContractViolation& e) {
    err << "error: contract violated [" << e.contract() << "]: " << e.what() << "\n";
    return kContract;
  } catch (const CapacityError& e) {
    err << "error: capacity exceeded: " << e.what() << "\n";
    return kCapacity;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  }
}

inline int run_command_line(int argc, const char* const* argv, std::ostream& out = std::cout,
                            std::ostream& err = std::cerr) {
  const auto parsed = parse_command_line(argc, argv, out, err);
  if (!parsed.config) return parsed.exit_code;
  return run(*parsed.config, out, err);
}

}  // namespace ustat::cli
