#pragma once

// Induced subgraph counts in random geometric graphs: pattern kernels, grid
// counting, the four radius regimes, and Monte Carlo estimates of the norms
// of contractions of the projections g_i of the pattern kernel.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ustat/combinatorics.hpp"
#include "ustat/errors.hpp"
#include "ustat/montecarlo.hpp"
#include "ustat/parallel.hpp"
#include "ustat/rng.hpp"

namespace ustat {

inline constexpr int kMaxPatternVertices = 7;

/// Bit of the pair {a, b}, a < b, in a p-vertex adjacency mask.
inline int pair_bit(int a, int b, int p) { return a * p - a * (a + 1) / 2 + (b - a - 1); }

/// A connected graph on p vertices, with the set of all adjacency masks of
/// graphs isomorphic to it.
class GraphPattern {
public:
  static GraphPattern from_adjacency(const std::vector<std::vector<int>>& adjacency) {
    const int p = static_cast<int>(adjacency.size());
    if (p < 2) throw ParameterError("pattern needs at least 2 vertices");
    if (p > kMaxPatternVertices) {
      throw CapacityError("patterns are limited to " + std::to_string(kMaxPatternVertices) + " vertices");
    }
    std::uint32_t mask = 0;
    for (int a = 0; a < p; ++a) {
      if (static_cast<int>(adjacency[static_cast<std::size_t>(a)].size()) != p) {
        throw DimensionError("pattern adjacency must be a square matrix");
      }
      if (adjacency[static_cast<std::size_t>(a)][static_cast<std::size_t>(a)] != 0) {
        throw ParameterError("pattern adjacency must have a zero diagonal");
      }
      for (int b = 0; b < p; ++b) {
        const int ab = adjacency[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
        const int ba = adjacency[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)];
        if ((ab != 0 && ab != 1) || ab != ba) throw ParameterError("pattern adjacency must be symmetric 0/1");
        if (a < b && ab) mask |= 1u << pair_bit(a, b, p);
      }
    }
    GraphPattern g(p, mask);
    if (!g.connected()) throw ParameterError("pattern graph must be connected");
    return g;
  }

  static GraphPattern edge() { return from_adjacency({{0, 1}, {1, 0}}); }
  static GraphPattern triangle() { return complete(3); }
  static GraphPattern path3() { return from_adjacency({{0, 1, 0}, {1, 0, 1}, {0, 1, 0}}); }
  static GraphPattern complete(int p) {
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(p), std::vector<int>(static_cast<std::size_t>(p), 1));
    for (int a = 0; a < p; ++a) adj[static_cast<std::size_t>(a)][static_cast<std::size_t>(a)] = 0;
    return from_adjacency(adj);
  }

  int p() const noexcept { return p_; }
  std::uint32_t mask() const noexcept { return mask_; }
  bool has_edge(int a, int b) const {
    if (a == b) return false;
    if (a > b) std::swap(a, b);
    return (mask_ >> pair_bit(a, b, p_)) & 1u;
  }
  int edge_count() const { return std::popcount(mask_); }
  bool is_complete() const { return edge_count() == p_ * (p_ - 1) / 2; }
  /// True if the graph with this adjacency mask is isomorphic to the pattern.
  bool matches(std::uint32_t mask) const { return (*accept_)[mask]; }

  std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(p_), std::vector<int>(static_cast<std::size_t>(p_), 0));
    for (int a = 0; a < p_; ++a) {
      for (int b = 0; b < p_; ++b) adj[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = has_edge(a, b);
    }
    return adj;
  }

private:
  GraphPattern(int p, std::uint32_t mask) : p_(p), mask_(mask) {
    const int pairs = p * (p - 1) / 2;
    accept_ = std::make_shared<std::vector<bool>>(std::size_t{1} << pairs, false);
    std::vector<int> perm(static_cast<std::size_t>(p));
    std::iota(perm.begin(), perm.end(), 0);
    do {
      std::uint32_t image = 0;
      for (int a = 0; a < p; ++a) {
        for (int b = a + 1; b < p; ++b) {
          if (!has_edge(a, b)) continue;
          int pa = perm[static_cast<std::size_t>(a)];
          int pb = perm[static_cast<std::size_t>(b)];
          if (pa > pb) std::swap(pa, pb);
          image |= 1u << pair_bit(pa, pb, p);
        }
      }
      (*accept_)[image] = true;
    } while (std::next_permutation(perm.begin(), perm.end()));
  }

  bool connected() const {
    std::vector<bool> seen(static_cast<std::size_t>(p_), false);
    std::vector<int> stack{0};
    seen[0] = true;
    int count = 1;
    while (!stack.empty()) {
      const int a = stack.back();
      stack.pop_back();
      for (int b = 0; b < p_; ++b) {
        if (!seen[static_cast<std::size_t>(b)] && has_edge(a, b)) {
          seen[static_cast<std::size_t>(b)] = true;
          ++count;
          stack.push_back(b);
        }
      }
    }
    return count == p_;
  }

  int p_;
  std::uint32_t mask_;
  std::shared_ptr<std::vector<bool>> accept_;
};

/// Points are stored flat: point i occupies coordinates [i*d, (i+1)*d).
inline bool geometric_adjacent(const double* a, const double* b, int d, double t) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) {
    const double diff = a[k] - b[k];
    s += diff * diff;
  }
  return s > 0.0 && s < t * t;
}

/// 1 if the geometric graph on the p points (edges iff 0 < |x_a - x_b| < t)
/// is isomorphic to the pattern, else 0.
inline int pattern_kernel(std::span<const double> points, int d, const GraphPattern& pattern, double t) {
  const int p = pattern.p();
  if (p > kMaxPatternVertices) throw CapacityError("pattern too large");
  if (static_cast<int>(points.size()) != p * d) throw DimensionError("pattern kernel needs exactly p points");
  if (!(t > 0.0)) throw ParameterError("radius must be positive");
  std::uint32_t mask = 0;
  for (int a = 0; a < p; ++a) {
    for (int b = a + 1; b < p; ++b) {
      if (geometric_adjacent(points.data() + a * d, points.data() + b * d, d, t)) mask |= 1u << pair_bit(a, b, p);
    }
  }
  return pattern.matches(mask) ? 1 : 0;
}

// ---------------------------------------------------------------- densities

enum class DensityKind { UniformBox, UniformBall, Gaussian, Custom };

inline double unit_ball_volume(int d) {
  return std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
}

/// Fills out with a point uniform in the ball of the given radius around center.
inline void sample_in_ball(RandomStream& rng, std::span<const double> center, double radius, std::span<double> out) {
  const std::size_t d = center.size();
  double norm = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    out[k] = rng.normal();
    norm += out[k] * out[k];
  }
  norm = std::sqrt(norm);
  const double scale = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d)) / norm;
  for (std::size_t k = 0; k < d; ++k) out[k] = center[k] + out[k] * scale;
}

/// Bounded probability density on R^d with a sampler.
struct DensityModel {
  DensityKind kind = DensityKind::UniformBox;
  int d = 2;
  bool bounded = true;
  bool ae_continuous = true;
  std::function<double(std::span<const double>)> custom_pdf;
  std::function<void(RandomStream&, std::span<double>)> custom_sampler;
  std::string custom_name = "custom";

  static DensityModel uniform_box(int d) { return make(DensityKind::UniformBox, d); }
  static DensityModel uniform_ball(int d) { return make(DensityKind::UniformBall, d); }
  static DensityModel gaussian(int d) { return make(DensityKind::Gaussian, d); }
  static DensityModel custom(int d, std::function<double(std::span<const double>)> pdf,
                             std::function<void(RandomStream&, std::span<double>)> sampler,
                             std::string name = "custom") {
    DensityModel m = make(DensityKind::Custom, d);
    if (!pdf || !sampler) throw ParameterError("custom density needs both a pdf and a sampler");
    m.custom_pdf = std::move(pdf);
    m.custom_sampler = std::move(sampler);
    m.custom_name = std::move(name);
    return m;
  }

  bool is_uniform() const { return kind == DensityKind::UniformBox || kind == DensityKind::UniformBall; }

  std::string name() const {
    switch (kind) {
      case DensityKind::UniformBox: return "uniform-box";
      case DensityKind::UniformBall: return "uniform-ball";
      case DensityKind::Gaussian: return "gaussian";
      case DensityKind::Custom: return custom_name;
    }
    return "unknown";
  }

  double pdf(std::span<const double> x) const {
    switch (kind) {
      case DensityKind::UniformBox:
        for (double v : x) {
          if (v < 0.0 || v > 1.0) return 0.0;
        }
        return 1.0;
      case DensityKind::UniformBall: {
        double s = 0.0;
        for (double v : x) s += v * v;
        return s <= 1.0 ? 1.0 / unit_ball_volume(d) : 0.0;
      }
      case DensityKind::Gaussian: {
        double s = 0.0;
        for (double v : x) s += v * v;
        return std::exp(-0.5 * s) / std::pow(2.0 * std::numbers::pi, 0.5 * d);
      }
      case DensityKind::Custom: return custom_pdf(x);
    }
    return 0.0;
  }

  void sample(RandomStream& rng, std::span<double> out) const {
    switch (kind) {
      case DensityKind::UniformBox:
        for (auto& v : out) v = rng.uniform();
        return;
      case DensityKind::UniformBall: {
        const std::vector<double> origin(static_cast<std::size_t>(d), 0.0);
        sample_in_ball(rng, origin, 1.0, out);
        return;
      }
      case DensityKind::Gaussian:
        for (auto& v : out) v = rng.normal();
        return;
      case DensityKind::Custom: custom_sampler(rng, out); return;
    }
  }

private:
  static DensityModel make(DensityKind kind, int d) {
    if (d < 1) throw ParameterError("dimension must be positive");
    DensityModel m;
    m.kind = kind;
    m.d = d;
    return m;
  }
};

/// n i.i.d. points from the density, drawn from the given stream.
inline std::vector<double> sample_points(const DensityModel& density, long long n, RandomStream& rng) {
  std::vector<double> pts(static_cast<std::size_t>(n * density.d));
  for (long long i = 0; i < n; ++i) {
    density.sample(rng, std::span<double>(pts.data() + i * density.d, static_cast<std::size_t>(density.d)));
  }
  return pts;
}

// ---------------------------------------------------------------- regimes

enum class Regime { C1, C2, C3, C4 };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::C1: return "C1";
    case Regime::C2: return "C2";
    case Regime::C3: return "C3";
    case Regime::C4: return "C4";
  }
  return "?";
}

/// t_n = n^{-beta/d} in regimes C1-C3 and t_n = (rho/n)^{1/d} in C4.
struct RadiusSchedule {
  Regime regime = Regime::C4;
  double beta = 0.0;
  double rho = 1.0;

  void validate(int p) const {
    switch (regime) {
      case Regime::C1: {
        const double upper = static_cast<double>(p) / (p - 1);
        if (!(beta > 1.0 && beta < upper)) {
          throw ParameterError("regime C1 needs 1 < beta < p/(p-1) = " + std::to_string(upper));
        }
        return;
      }
      case Regime::C2:
      case Regime::C3:
        if (!(beta > 0.0 && beta < 1.0)) throw ParameterError("regimes C2/C3 need 0 < beta < 1");
        return;
      case Regime::C4:
        if (!(rho > 0.0)) throw ParameterError("regime C4 needs rho > 0");
        return;
    }
  }

  double radius(long long n, int d) const {
    const double nd = static_cast<double>(n);
    if (regime == Regime::C4) return std::pow(rho / nd, 1.0 / d);
    return std::pow(nd, -beta / d);
  }

  /// beta with t_n^d proportional to n^{-beta}; 1 in regime C4.
  double effective_beta() const { return regime == Regime::C4 ? 1.0 : beta; }
};

// ---------------------------------------------------------------- counting

/// Adjacency lists of the geometric graph, built from a hashed uniform grid
/// with cell width t. Neighbors of each vertex are sorted.
struct NeighborGraph {
  std::vector<std::uint32_t> offsets;
  std::vector<std::uint32_t> neighbors;

  std::span<const std::uint32_t> of(std::size_t v) const {
    return {neighbors.data() + offsets[v], neighbors.data() + offsets[v + 1]};
  }
};

namespace detail {

inline std::uint64_t cell_hash(const std::int64_t* cell, int d) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (int k = 0; k < d; ++k) h = mix64(h ^ static_cast<std::uint64_t>(cell[k]));
  return h;
}

}  // namespace detail

inline NeighborGraph build_neighbor_graph(const std::vector<double>& points, int d, double t) {
  const std::size_t n = points.size() / static_cast<std::size_t>(d);
  std::vector<std::int64_t> cells(n * static_cast<std::size_t>(d));
  std::vector<std::pair<std::uint64_t, std::uint32_t>> keyed(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) {
      cells[i * d + k] = static_cast<std::int64_t>(std::floor(points[i * d + k] / t));
    }
    keyed[i] = {detail::cell_hash(&cells[i * d], d), static_cast<std::uint32_t>(i)};
  }
  std::sort(keyed.begin(), keyed.end());
  std::unordered_map<std::uint64_t, std::pair<std::uint32_t, std::uint32_t>> buckets;
  buckets.reserve(n);
  for (std::size_t a = 0; a < n;) {
    std::size_t b = a;
    while (b < n && keyed[b].first == keyed[a].first) ++b;
    buckets.emplace(keyed[a].first, std::make_pair(static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)));
    a = b;
  }

  int offsets_count = 1;
  for (int k = 0; k < d; ++k) offsets_count *= 3;
  NeighborGraph g;
  g.offsets.assign(n + 1, 0);
  std::vector<std::int64_t> probe(static_cast<std::size_t>(d));
  std::vector<std::uint64_t> seen_keys;
  std::vector<std::uint32_t> local;
  for (std::size_t i = 0; i < n; ++i) {
    seen_keys.clear();
    local.clear();
    for (int code = 0; code < offsets_count; ++code) {
      int c = code;
      for (int k = 0; k < d; ++k) {
        probe[static_cast<std::size_t>(k)] = cells[i * d + k] + (c % 3) - 1;
        c /= 3;
      }
      const std::uint64_t key = detail::cell_hash(probe.data(), d);
      if (std::find(seen_keys.begin(), seen_keys.end(), key) != seen_keys.end()) continue;
      seen_keys.push_back(key);
      const auto it = buckets.find(key);
      if (it == buckets.end()) continue;
      for (std::uint32_t q = it->second.first; q < it->second.second; ++q) {
        const std::uint32_t j = keyed[q].second;
        if (j != i && geometric_adjacent(&points[i * d], &points[static_cast<std::size_t>(j) * d], d, t)) {
          local.push_back(j);
        }
      }
    }
    std::sort(local.begin(), local.end());
    g.neighbors.insert(g.neighbors.end(), local.begin(), local.end());
    g.offsets[i + 1] = static_cast<std::uint32_t>(g.neighbors.size());
  }
  return g;
}

namespace detail {

struct EsuState {
  const NeighborGraph& graph;
  const std::vector<double>& points;
  int d;
  double t;
  const GraphPattern& pattern;
  std::vector<std::uint32_t> sub;
  std::uint64_t count = 0;

  bool adjacent(std::uint32_t a, std::uint32_t b) const {
    const auto nb = graph.of(a);
    return std::binary_search(nb.begin(), nb.end(), b);
  }

  bool in_closed_neighborhood(std::uint32_t u) const {
    for (auto s : sub) {
      if (s == u || adjacent(s, u)) return true;
    }
    return false;
  }

  void finish() {
    const int p = pattern.p();
    std::uint32_t mask = 0;
    for (int a = 0; a < p; ++a) {
      for (int b = a + 1; b < p; ++b) {
        if (adjacent(sub[static_cast<std::size_t>(a)], sub[static_cast<std::size_t>(b)])) {
          mask |= 1u << pair_bit(a, b, p);
        }
      }
    }
    if (pattern.matches(mask)) ++count;
  }

  // Wernicke's ESU: every connected vertex set of size p containing root as
  // its smallest element is produced exactly once.
  void extend(std::vector<std::uint32_t> extension, std::uint32_t root) {
    if (static_cast<int>(sub.size()) == pattern.p()) {
      finish();
      return;
    }
    while (!extension.empty()) {
      const std::uint32_t w = extension.back();
      extension.pop_back();
      std::vector<std::uint32_t> next = extension;
      for (auto u : graph.of(w)) {
        if (u > root && !in_closed_neighborhood(u) &&
            std::find(next.begin(), next.end(), u) == next.end()) {
          next.push_back(u);
        }
      }
      sub.push_back(w);
      extend(std::move(next), root);
      sub.pop_back();
    }
  }
};

}  // namespace detail

/// Number of p-subsets whose induced geometric graph is isomorphic to the
/// pattern. Only connected vertex sets of the geometric graph are visited.
inline std::uint64_t count_subgraphs(const std::vector<double>& points, int d, const GraphPattern& pattern, double t) {
  if (!(t > 0.0)) throw ParameterError("radius must be positive");
  const std::size_t n = points.size() / static_cast<std::size_t>(d);
  if (static_cast<int>(n) < pattern.p()) throw ParameterError("fewer points than pattern vertices");
  const auto graph = build_neighbor_graph(points, d, t);
  if (pattern.p() == 2) return graph.neighbors.size() / 2;

  detail::EsuState state{graph, points, d, t, pattern, {}, 0};
  for (std::uint32_t v = 0; v < n; ++v) {
    std::vector<std::uint32_t> ext;
    for (auto u : graph.of(v)) {
      if (u > v) ext.push_back(u);
    }
    state.sub = {v};
    state.extend(std::move(ext), v);
  }
  return state.count;
}

/// Direct enumeration over all p-subsets.
inline std::uint64_t count_subgraphs_brute(const std::vector<double>& points, int d, const GraphPattern& pattern,
                                           double t) {
  const int n = static_cast<int>(points.size() / static_cast<std::size_t>(d));
  const int p = pattern.p();
  if (n < p) throw ParameterError("fewer points than pattern vertices");
  std::vector<double> tuple(static_cast<std::size_t>(p * d));
  std::uint64_t count = 0;
  for_each_subset(n, p, [&](const std::vector<int>& idx) {
    for (int a = 0; a < p; ++a) {
      std::copy_n(points.data() + static_cast<std::size_t>(idx[static_cast<std::size_t>(a)]) * d, d,
                  tuple.data() + static_cast<std::size_t>(a) * d);
    }
    count += static_cast<std::uint64_t>(pattern_kernel(tuple, d, pattern, t));
  });
  return count;
}

// ---------------------------------------------------------------- pattern probability

struct ProbabilityEstimate {
  double value = 0.0;
  double se = 0.0;
  std::uint64_t samples = 0;
};

/// E[psi(X_1..X_p)] by localized importance sampling: X_1 from the density,
/// the others uniform in the ball of radius (p-1)t around X_1 and weighted by
/// density * ball volume. Unbiased because psi vanishes outside that ball.
inline ProbabilityEstimate pattern_probability(const GraphPattern& pattern, const DensityModel& density, double t,
                                               std::uint64_t samples, std::uint64_t seed) {
  const int p = pattern.p();
  const int d = density.d;
  const double radius = (p - 1) * t;
  const double volume = unit_ball_volume(d) * std::pow(radius, d);
  std::vector<double> pts(static_cast<std::size_t>(p * d));
  double sum = 0.0, sumsq = 0.0;
  for (std::uint64_t j = 0; j < samples; ++j) {
    RandomStream rng(seed, {0x9b0bULL, j});
    density.sample(rng, std::span<double>(pts.data(), static_cast<std::size_t>(d)));
    double w = 1.0;
    for (int a = 1; a < p; ++a) {
      std::span<double> x(pts.data() + a * d, static_cast<std::size_t>(d));
      sample_in_ball(rng, std::span<const double>(pts.data(), static_cast<std::size_t>(d)), radius, x);
      w *= density.pdf(x) * volume;
    }
    const double v = w > 0.0 ? w * pattern_kernel(pts, d, pattern, t) : 0.0;
    sum += v;
    sumsq += v * v;
  }
  ProbabilityEstimate out;
  out.samples = samples;
  out.value = sum / static_cast<double>(samples);
  const double var = std::max(0.0, sumsq / static_cast<double>(samples) - out.value * out.value);
  out.se = std::sqrt(var / static_cast<double>(samples));
  return out;
}

/// E[psi] by plain sampling of p points from the density.
inline ProbabilityEstimate pattern_probability_plain(const GraphPattern& pattern, const DensityModel& density,
                                                     double t, std::uint64_t samples, std::uint64_t seed) {
  const int p = pattern.p();
  const int d = density.d;
  std::vector<double> pts(static_cast<std::size_t>(p * d));
  std::uint64_t hits = 0;
  for (std::uint64_t j = 0; j < samples; ++j) {
    RandomStream rng(seed, {0x91a1ULL, j});
    for (int a = 0; a < p; ++a) density.sample(rng, std::span<double>(pts.data() + a * d, static_cast<std::size_t>(d)));
    hits += static_cast<std::uint64_t>(pattern_kernel(pts, d, pattern, t));
  }
  ProbabilityEstimate out;
  out.samples = samples;
  out.value = static_cast<double>(hits) / static_cast<double>(samples);
  out.se = std::sqrt(out.value * (1.0 - out.value) / static_cast<double>(samples));
  return out;
}

// ---------------------------------------------------------------- variance lower bound

struct VarianceLowerBound {
  long long n = 0;
  double t = 0.0;
  double lhs = 0.0;  ///< Monte Carlo variance of the count
  double lhs_se = 0.0;
  double rhs = 0.0;  ///< C(n,p) (q - q^2)
  double rhs_se = 0.0;
  double q_hat = 0.0;
  double q_se = 0.0;
  bool holds = false;
};

namespace detail {

struct BootstrapMoments {
  double mean_se = 0.0;
  double var_se = 0.0;
};

inline BootstrapMoments bootstrap_moments(const std::vector<double>& values, int resamples, std::uint64_t seed,
                                          std::uint64_t tag) {
  BootstrapMoments out;
  if (resamples < 2 || values.size() < 2) return out;
  std::vector<double> means(static_cast<std::size_t>(resamples)), vars(static_cast<std::size_t>(resamples));
  std::vector<double> re(values.size());
  for (int b = 0; b < resamples; ++b) {
    RandomStream rng(seed, {0xb007ULL, tag, static_cast<std::uint64_t>(b)});
    for (auto& v : re) v = values[rng.below(values.size())];
    const auto ms = mean_sd(re);
    means[static_cast<std::size_t>(b)] = ms.mean;
    vars[static_cast<std::size_t>(b)] = ms.sd * ms.sd;
  }
  out.mean_se = mean_sd(means).sd;
  out.var_se = mean_sd(vars).sd;
  return out;
}

inline VarianceLowerBound assemble_lower_bound(const std::vector<double>& counts, long long n, double t, int p,
                                               const ProbabilityEstimate& q, int bootstrap, std::uint64_t seed,
                                               std::uint64_t tag) {
  VarianceLowerBound out;
  out.n = n;
  out.t = t;
  const auto ms = mean_sd(counts);
  out.lhs = ms.sd * ms.sd;
  out.lhs_se = bootstrap_moments(counts, bootstrap, seed, tag).var_se;
  out.q_hat = q.value;
  out.q_se = q.se;
  const double c = binomial(n, p);
  out.rhs = c * (q.value - q.value * q.value);
  out.rhs_se = c * std::abs(1.0 - 2.0 * q.value) * q.se;
  const double rel = std::sqrt((out.lhs > 0 ? std::pow(out.lhs_se / out.lhs, 2) : 0.0) +
                               (out.rhs > 0 ? std::pow(out.rhs_se / out.rhs, 2) : 0.0));
  out.holds = out.lhs >= out.rhs * (1.0 - 3.0 * rel);
  return out;
}

inline std::vector<double> replicate_counts(const GraphPattern& pattern, const DensityModel& density, long long n,
                                            double t, std::uint64_t replicates, std::uint64_t seed,
                                            std::uint64_t n_index, int threads) {
  std::vector<double> counts(replicates);
  parallel_for(replicates, resolve_threads(threads), [&](std::size_t j) {
    RandomStream rng(seed, {n_index, static_cast<std::uint64_t>(j)});
    const auto pts = sample_points(density, n, rng);
    counts[j] = static_cast<double>(count_subgraphs(pts, density.d, pattern, t));
  });
  return counts;
}

}  // namespace detail

inline constexpr std::uint64_t kDefaultProbabilitySamples = 200'000;

/// Var(G_n) estimated from R replicates against the lower bound
/// C(n,p) Var(psi) = C(n,p)(q - q^2), q = E[psi] (psi is an indicator).
inline VarianceLowerBound variance_lower_bound_check(const GraphPattern& pattern, const DensityModel& density,
                                                     double t, long long n, std::uint64_t replicates,
                                                     std::uint64_t seed, int threads = 0,
                                                     std::uint64_t probability_samples = kDefaultProbabilitySamples,
                                                     int bootstrap = kBootstrapResamples) {
  if (!density.is_uniform()) throw PreconditionError("the variance lower-bound check is defined for uniform densities");
  if (replicates < 2) throw ParameterError("at least two replicates are required");
  const auto counts = detail::replicate_counts(pattern, density, n, t, replicates, seed, 0, threads);
  const auto q = pattern_probability_plain(pattern, density, t, probability_samples, seed);
  return detail::assemble_lower_bound(counts, n, t, pattern.p(), q, bootstrap, seed, 0);
}

// ---------------------------------------------------------------- regime experiment

struct RegimeRecord {
  long long n = 0;
  double t = 0.0;
  double mean = 0.0;
  double mean_se = 0.0;
  double var = 0.0;
  double var_se = 0.0;
  double dw = 0.0;
  double dw_se = 0.0;
  std::optional<VarianceLowerBound> lower_bound;
};

/// A fitted log-log exponent next to its target. kind is "asymptotic",
/// "lower-bound" or "upper-bound"; bound targets are never asserted as rates.
struct ExponentFit {
  double slope = 0.0;
  double stderr_slope = 0.0;
  double target = 0.0;
  std::string kind = "asymptotic";
};

struct RegimeReport {
  int p = 0;
  std::string density;
  int d = 0;
  RadiusSchedule schedule;
  std::uint64_t replicates = 0;
  std::uint64_t seed = 0;
  double feasibility_estimate = 0.0;
  double feasibility_se = 0.0;
  bool feasible = false;
  std::vector<RegimeRecord> records;
  ExponentFit mean_fit;
  ExponentFit var_fit;
  ExponentFit dw_fit;
  double dw_null_level = 0.0;  ///< estimator value for exact normal samples of the same size
  std::vector<std::string> notes;
};

struct RegimeOptions {
  int threads = 0;
  std::uint64_t feasibility_samples = 100'000;
  std::uint64_t probability_samples = kDefaultProbabilitySamples;
  int bootstrap = kBootstrapResamples;
};

/// Exponent targets in n for the mean, the variance and d_W.
inline void regime_targets(Regime regime, int p, double beta, ExponentFit& mean, ExponentFit& var, ExponentFit& dw) {
  const double first = p - beta * (p - 1);
  mean.target = first;
  switch (regime) {
    case Regime::C1:
      var.target = first;
      dw.target = -first / 2.0;
      break;
    case Regime::C2:
      var.target = first;
      var.kind = "lower-bound";
      dw.target = (2.0 * p - 3.0 - beta * (2.0 * p - 2.0)) / 2.0;
      dw.kind = "upper-bound";
      break;
    case Regime::C3:
      var.target = (2.0 * p - 1.0) - beta * (2.0 * p - 2.0);
      dw.target = -0.5;
      break;
    case Regime::C4:
      var.target = 1.0;
      dw.target = -0.5;
      break;
  }
}

inline RegimeReport regime_experiment(const GraphPattern& pattern, const DensityModel& density,
                                      const RadiusSchedule& schedule, const std::vector<long long>& ns,
                                      std::uint64_t replicates, std::uint64_t seed, const RegimeOptions& options = {}) {
  const int p = pattern.p();
  const int d = density.d;
  schedule.validate(p);
  if (ns.size() < 2) throw ParameterError("regime experiment needs at least two sample sizes");
  if (replicates < kMinDistanceReplicates) throw CapacityError("regime experiment needs at least 100 replicates");
  for (auto n : ns) {
    if (n < p) throw ParameterError("every sample size must be at least the pattern size");
  }
  if (schedule.regime == Regime::C2 && !density.is_uniform()) {
    throw ParameterError("regime C2 is the dense uniform regime; use a uniform density");
  }

  RegimeReport report;
  report.p = p;
  report.density = density.name();
  report.d = d;
  report.schedule = schedule;
  report.replicates = replicates;
  report.seed = seed;
  if (schedule.regime == Regime::C3 && density.is_uniform()) {
    report.notes.emplace_back("regime C3 is meant for non-uniform densities");
  }

  const long long n_min = *std::min_element(ns.begin(), ns.end());
  const auto feas = pattern_probability(pattern, density, schedule.radius(n_min, d), options.feasibility_samples, seed);
  report.feasibility_estimate = feas.value;
  report.feasibility_se = feas.se;
  report.feasible = feas.value > 0.0;
  if (!report.feasible) {
    throw PreconditionError("pattern is not feasible: estimated E[psi] is 0 at the largest radius");
  }

  std::vector<double> nsd, means, vars, dws;
  for (std::size_t a = 0; a < ns.size(); ++a) {
    const long long n = ns[a];
    const double t = schedule.radius(n, d);
    const auto counts = detail::replicate_counts(pattern, density, n, t, replicates, seed, a + 1, options.threads);
    RegimeRecord rec;
    rec.n = n;
    rec.t = t;
    const auto ms = mean_sd(counts);
    rec.mean = ms.mean;
    rec.var = ms.sd * ms.sd;
    const auto boot = detail::bootstrap_moments(counts, options.bootstrap, seed, a + 1);
    rec.mean_se = boot.mean_se;
    rec.var_se = boot.var_se;
    if (rec.var > 0.0) {
      const auto rep = replicates_from_values(counts, n, stream_key(seed, {a + 1}));
      const auto dw = wasserstein_to_normal(rep, options.bootstrap);
      rec.dw = dw.estimate;
      rec.dw_se = dw.bootstrap_se;
    } else {
      report.notes.push_back("zero count variance at n=" + std::to_string(n) + "; distance not computed");
    }
    if (schedule.regime == Regime::C2) {
      const auto q = pattern_probability_plain(pattern, density, t, options.probability_samples,
                                               stream_key(seed, {0x0b1ULL, a}));
      rec.lower_bound = detail::assemble_lower_bound(counts, n, t, p, q, options.bootstrap, seed, 0x1000 + a);
    }
    nsd.push_back(static_cast<double>(n));
    means.push_back(rec.mean);
    vars.push_back(rec.var);
    dws.push_back(rec.dw);
    report.records.push_back(std::move(rec));
  }
  if (report.records.back().mean <= 0.0) {
    report.notes.emplace_back("mean count vanishes at the largest n");
  }

  regime_targets(schedule.regime, p, schedule.effective_beta(), report.mean_fit, report.var_fit, report.dw_fit);
  auto fit = [&](const std::vector<double>& ys, ExponentFit& out) {
    if (std::all_of(ys.begin(), ys.end(), [](double v) { return v > 0.0; })) {
      const auto f = rate_fit(nsd, ys, 2);
      out.slope = f.slope;
      out.stderr_slope = f.stderr_slope;
    } else {
      out.slope = std::nan("");
      report.notes.emplace_back("non-positive values; exponent not fitted");
    }
  };
  fit(means, report.mean_fit);
  fit(vars, report.var_fit);
  fit(dws, report.dw_fit);
  report.dw_null_level = wasserstein_null_level(replicates, seed).estimate;
  return report;
}

// ---------------------------------------------------------------- contraction norms of g_i

enum class SamplingMode { Localized, Plain };

struct ContractionEstimate {
  double norm = 0.0;        ///< estimate of ||g_i *_r^tau g_k||
  double norm_se = 0.0;
  double squared = 0.0;     ///< unbiased estimate of the squared norm (or of the scalar when nothing is free)
  double squared_se = 0.0;
  bool unreliable = false;  ///< standard error above 30% of the estimate
  std::uint64_t samples = 0;
};

struct ContractionMcOptions {
  int inner = 4;
  SamplingMode mode = SamplingMode::Localized;
};

namespace detail {

/// Monte Carlo evaluator for g_i of the pattern kernel and contractions of
/// pairs of them.
class ProjectionSampler {
public:
  ProjectionSampler(const GraphPattern& pattern, const DensityModel& density, double t, SamplingMode mode)
      : pattern_(pattern), density_(density), t_(t), mode_(mode), p_(pattern.p()), d_(density.d),
        near_radius_((pattern.p() - 1) * t), far_radius_(2.0 * (pattern.p() - 1) * t),
        near_volume_(unit_ball_volume(density.d) * std::pow(near_radius_, density.d)),
        far_volume_(unit_ball_volume(density.d) * std::pow(far_radius_, density.d)) {}

  int d() const { return d_; }

  /// Draws a point either from the density (weight 1) or uniformly near the
  /// center (weight density * ball volume).
  double draw(RandomStream& rng, std::span<const double> center, bool far, std::span<double> out) const {
    if (mode_ == SamplingMode::Plain) {
      density_.sample(rng, out);
      return 1.0;
    }
    sample_in_ball(rng, center, far ? far_radius_ : near_radius_, out);
    return density_.pdf(out) * (far ? far_volume_ : near_volume_);
  }

  /// Single-completion unbiased estimate of g_i at the given i points.
  double g_estimate(RandomStream& rng, std::span<const double> args) const {
    const int i = static_cast<int>(args.size()) / d_;
    std::vector<double> full(static_cast<std::size_t>(p_ * d_));
    std::copy(args.begin(), args.end(), full.begin());
    double w = 1.0;
    for (int c = i; c < p_; ++c) {
      w *= draw(rng, args.first(static_cast<std::size_t>(d_)), false,
                std::span<double>(full.data() + c * d_, static_cast<std::size_t>(d_)));
      if (w == 0.0) return 0.0;
    }
    return w * pattern_kernel(full, d_, pattern_, t_);
  }

private:
  const GraphPattern& pattern_;
  const DensityModel& density_;
  double t_;
  SamplingMode mode_;
  int p_;
  int d_;
  double near_radius_;
  double far_radius_;
  double near_volume_;
  double far_volume_;
};

/// Unbiased estimate of integral g_i g_k over mu^{tau}, all coordinates
/// integrated (i = k = r = tau).
inline ContractionEstimate scalar_contraction(const ProjectionSampler& s, int tau, std::uint64_t samples,
                                              std::uint64_t seed, std::uint64_t tag, const DensityModel& density) {
  const int d = s.d();
  std::vector<double> x(static_cast<std::size_t>(tau * d));
  double sum = 0.0, sumsq = 0.0;
  for (std::uint64_t j = 0; j < samples; ++j) {
    RandomStream rng(seed, {tag, j});
    density.sample(rng, std::span<double>(x.data(), static_cast<std::size_t>(d)));
    double w = 1.0;
    for (int a = 1; a < tau; ++a) {
      w *= s.draw(rng, std::span<const double>(x.data(), static_cast<std::size_t>(d)), false,
                  std::span<double>(x.data() + a * d, static_cast<std::size_t>(d)));
    }
    double v = 0.0;
    if (w > 0.0) {
      RandomStream left(seed, {tag, j, 1});
      RandomStream right(seed, {tag, j, 2});
      v = w * s.g_estimate(left, x) * s.g_estimate(right, x);
    }
    sum += v;
    sumsq += v * v;
  }
  ContractionEstimate out;
  out.samples = samples;
  out.squared = sum / static_cast<double>(samples);
  out.squared_se = std::sqrt(std::max(0.0, sumsq / samples - out.squared * out.squared) / static_cast<double>(samples));
  out.norm = std::abs(out.squared);
  out.norm_se = out.squared_se;
  return out;
}

}  // namespace detail

/// Monte Carlo estimate of ||g_i *_r^tau g_k||_{L^2} for the pattern kernel
/// at radius t. The squared norm is the outer mean of w * H_1 * H_2, where
/// H_1 and H_2 are independent inner estimates of the contraction at the
/// outer point, so the squared-norm estimate is unbiased.
inline ContractionEstimate gk_contraction_mc(const GraphPattern& pattern, const DensityModel& density, double t, int i,
                                             int k, int r, int tau, std::uint64_t mc_samples, std::uint64_t seed,
                                             const ContractionMcOptions& options = {}) {
  const int p = pattern.p();
  if (i < 1 || k < 1 || i > p || k > p || tau < 0 || tau > r || r > std::min(i, k)) {
    throw ParameterError("contraction indices need 1 <= i,k <= p and 0 <= tau <= r <= min(i, k)");
  }
  if (mc_samples < 10'000) throw ParameterError("at least 10^4 Monte Carlo samples are required");
  if (!(t > 0.0)) throw ParameterError("radius must be positive");
  if (options.inner < 1) throw ParameterError("inner sample count must be positive");
  const detail::ProjectionSampler sampler(pattern, density, t, options.mode);
  const int d = density.d;

  auto finish = [](ContractionEstimate e) {
    e.unreliable = !(e.norm > 0.0) || e.norm_se > 0.3 * e.norm;
    return e;
  };

  if (r == 0) {
    // g_i (x) g_k: the norm factorizes into ||g_i|| ||g_k||
    const auto a = detail::scalar_contraction(sampler, i, mc_samples, seed, 0x51ULL, density);
    const auto b = detail::scalar_contraction(sampler, k, mc_samples, seed, 0x52ULL, density);
    ContractionEstimate out;
    out.samples = 2 * mc_samples;
    out.squared = a.squared * b.squared;
    out.squared_se = std::sqrt(std::pow(a.squared_se * b.squared, 2) + std::pow(a.squared * b.squared_se, 2));
    out.norm = std::sqrt(std::max(0.0, out.squared));
    out.norm_se = out.norm > 0.0 ? out.squared_se / (2.0 * out.norm) : out.squared_se;
    return finish(out);
  }
  const int shared = r - tau;
  const int free_i = i - r;
  const int free_k = k - r;
  const int outer = shared + free_i + free_k;
  if (outer == 0) return finish(detail::scalar_contraction(sampler, tau, mc_samples, seed, 0x53ULL, density));

  // outer layout: y (shared), u (free in g_i), v (free in g_k)
  std::vector<double> o(static_cast<std::size_t>(outer * d));
  std::vector<double> x(static_cast<std::size_t>(std::max(tau, 1) * d));
  std::vector<double> args_i(static_cast<std::size_t>(i * d));
  std::vector<double> args_k(static_cast<std::size_t>(k * d));
  auto point = [d](std::vector<double>& v, int a) { return std::span<double>(v.data() + a * d, static_cast<std::size_t>(d)); };

  double sum = 0.0, sumsq = 0.0;
  for (std::uint64_t j = 0; j < mc_samples; ++j) {
    RandomStream rng(seed, {0x0a7eULL, j});
    density.sample(rng, point(o, 0));
    const std::span<const double> anchor(o.data(), static_cast<std::size_t>(d));
    double w = 1.0;
    for (int a = 1; a < outer; ++a) w *= sampler.draw(rng, anchor, true, point(o, a));
    double value = 0.0;
    if (w > 0.0) {
      double h[2] = {0.0, 0.0};
      for (int half = 0; half < 2; ++half) {
        for (int m = 0; m < options.inner; ++m) {
          RandomStream inner(seed, {0x1a7eULL, j, static_cast<std::uint64_t>(half), static_cast<std::uint64_t>(m)});
          double wx = 1.0;
          for (int a = 0; a < tau; ++a) wx *= sampler.draw(inner, anchor, true, point(x, a));
          if (wx == 0.0) continue;
          // g_i(x, y, u) and g_k(x, y, v)
          std::copy_n(x.data(), tau * d, args_i.data());
          std::copy_n(o.data(), (shared + free_i) * d, args_i.data() + tau * d);
          std::copy_n(x.data(), tau * d, args_k.data());
          std::copy_n(o.data(), shared * d, args_k.data() + tau * d);
          std::copy_n(o.data() + (shared + free_i) * d, free_k * d, args_k.data() + (tau + shared) * d);
          const double gi = sampler.g_estimate(inner, args_i);
          if (gi == 0.0) continue;
          h[half] += wx * gi * sampler.g_estimate(inner, args_k);
        }
        h[half] /= options.inner;
      }
      value = w * h[0] * h[1];
    }
    sum += value;
    sumsq += value * value;
  }
  ContractionEstimate out;
  out.samples = mc_samples;
  out.squared = sum / static_cast<double>(mc_samples);
  out.squared_se =
      std::sqrt(std::max(0.0, sumsq / mc_samples - out.squared * out.squared) / static_cast<double>(mc_samples));
  out.norm = std::sqrt(std::max(0.0, out.squared));
  out.norm_se = out.norm > 0.0 ? out.squared_se / (2.0 * out.norm) : out.squared_se;
  return finish(out);
}

}  // namespace ustat
