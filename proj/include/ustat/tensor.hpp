#pragma once

// Finite probability spaces, dense kernels over a finite alphabet, and the
// elementary operations everything else is built on.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ustat/errors.hpp"

namespace ustat {

/// Entries above this count are refused; m <= 8, p + q <= 8 stays far below.
inline constexpr std::size_t kMaxTensorEntries = std::size_t{1} << 24;

/// Max-norm tolerance below which a kernel counts as degenerate.
inline constexpr double kDegeneracyTolerance = 1e-10;

/// Tolerance on the sum of a probability vector.
inline constexpr double kMeasureSumTolerance = 1e-12;

/// Largest order the explicit permutation sum accepts.
inline constexpr int kMaxSymmetrizeOrder = 6;

inline std::size_t checked_power(int base, int exponent) {
  if (base <= 0) throw DimensionError("alphabet size must be positive");
  if (exponent < 0) throw DimensionError("tensor order must be non-negative");
  std::size_t result = 1;
  for (int j = 0; j < exponent; ++j) {
    result *= static_cast<std::size_t>(base);
    if (result > kMaxTensorEntries) {
      throw CapacityError("tensor with alphabet " + std::to_string(base) + " and order " +
                          std::to_string(exponent) + " exceeds the dense-storage limit");
    }
  }
  return result;
}

/// Dense tensor of a given order over the alphabet {0, ..., m-1}.
///
/// Entries are stored row-major in lexicographic index order, so the last
/// coordinate varies fastest. An order-0 tensor holds a single scalar.
class Tensor {
public:
  Tensor() : order_(0), alphabet_(1), values_(1, 0.0) {}

  Tensor(int order, int alphabet, std::vector<double> values)
      : order_(order), alphabet_(alphabet), values_(std::move(values)) {
    if (values_.size() != checked_power(alphabet_, order_)) {
      throw DimensionError("tensor of order " + std::to_string(order_) + " over alphabet " +
                           std::to_string(alphabet_) + " needs " +
                           std::to_string(checked_power(alphabet_, order_)) + " values, got " +
                           std::to_string(values_.size()));
    }
  }

  static Tensor zeros(int order, int alphabet) {
    return Tensor(order, alphabet, std::vector<double>(checked_power(alphabet, order), 0.0));
  }

  static Tensor constant(int order, int alphabet, double value) {
    return Tensor(order, alphabet, std::vector<double>(checked_power(alphabet, order), value));
  }

  static Tensor scalar(double value, int alphabet) { return constant(0, alphabet, value); }

  int order() const noexcept { return order_; }
  int alphabet() const noexcept { return alphabet_; }
  std::size_t size() const noexcept { return values_.size(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  /// Scalar value of an order-0 tensor.
  double scalar_value() const {
    if (order_ != 0) throw DimensionError("scalar_value() on a tensor of positive order");
    return values_[0];
  }

  std::size_t index_of(std::span<const int> symbols) const {
    if (static_cast<int>(symbols.size()) != order_) {
      throw DimensionError("index arity does not match tensor order");
    }
    std::size_t index = 0;
    for (int s : symbols) {
      if (s < 0 || s >= alphabet_) throw DimensionError("symbol outside the alphabet");
      index = index * static_cast<std::size_t>(alphabet_) + static_cast<std::size_t>(s);
    }
    return index;
  }

  void unravel(std::size_t index, std::span<int> symbols) const {
    for (int j = order_ - 1; j >= 0; --j) {
      symbols[static_cast<std::size_t>(j)] = static_cast<int>(index % static_cast<std::size_t>(alphabet_));
      index /= static_cast<std::size_t>(alphabet_);
    }
  }

  double at(std::span<const int> symbols) const { return values_[index_of(symbols)]; }
  double at(std::initializer_list<int> symbols) const {
    return at(std::span<const int>(symbols.begin(), symbols.size()));
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  Tensor& operator+=(const Tensor& other) {
    require_same_shape(other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
  }

  Tensor& operator-=(const Tensor& other) {
    require_same_shape(other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
  }

  Tensor& operator*=(double c) {
    for (double& v : values_) v *= c;
    return *this;
  }

  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, double c) { return a *= c; }
  friend Tensor operator*(double c, Tensor a) { return a *= c; }

  bool same_shape(const Tensor& other) const noexcept {
    return order_ == other.order_ && alphabet_ == other.alphabet_;
  }

private:
  void require_same_shape(const Tensor& other) const {
    if (!same_shape(other)) throw DimensionError("tensor shapes differ");
  }

  int order_;
  int alphabet_;
  std::vector<double> values_;
};

inline double max_abs_difference(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("tensor shapes differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Probability vector over a finite alphabet: the common law of the sample.
class DiscreteMeasure {
public:
  explicit DiscreteMeasure(std::vector<double> weights) : weights_(std::move(weights)) {
    if (weights_.empty()) throw DimensionError("measure needs at least one symbol");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ParameterError("measure weights must be finite and non-negative");
      total += w;
    }
    if (std::abs(total - 1.0) > kMeasureSumTolerance) {
      throw ParameterError("measure weights sum to " + std::to_string(total) + ", not 1");
    }
  }

  static DiscreteMeasure uniform(int alphabet) {
    return DiscreteMeasure(std::vector<double>(static_cast<std::size_t>(alphabet), 1.0 / alphabet));
  }

  int alphabet() const noexcept { return static_cast<int>(weights_.size()); }
  double operator[](std::size_t i) const { return weights_[i]; }
  std::span<const double> weights() const noexcept { return weights_; }

  /// Weights of the product measure on order-k index tuples, same layout as Tensor.
  std::vector<double> product_weights(int order) const {
    const std::size_t m = weights_.size();
    std::vector<double> out(checked_power(alphabet(), order), 1.0);
    std::size_t block = out.size();
    for (int j = 0; j < order; ++j) {
      block /= m;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= weights_[(i / block) % m];
    }
    return out;
  }

private:
  std::vector<double> weights_;
};

namespace detail {

inline void require_alphabet(const Tensor& t, const DiscreteMeasure& mu) {
  if (t.alphabet() != mu.alphabet()) {
    throw DimensionError("tensor alphabet " + std::to_string(t.alphabet()) +
                         " differs from measure alphabet " + std::to_string(mu.alphabet()));
  }
}

/// Largest entry-wise deviation under adjacent transpositions (which generate S_p).
inline double symmetry_defect(const Tensor& t) {
  const int p = t.order();
  if (p < 2) return 0.0;
  std::vector<int> sym(static_cast<std::size_t>(p));
  double worst = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    t.unravel(i, sym);
    for (int j = 0; j + 1 < p; ++j) {
      std::swap(sym[static_cast<std::size_t>(j)], sym[static_cast<std::size_t>(j + 1)]);
      worst = std::max(worst, std::abs(t[i] - t.at(sym)));
      std::swap(sym[static_cast<std::size_t>(j)], sym[static_cast<std::size_t>(j + 1)]);
    }
  }
  return worst;
}

}  // namespace detail

/// Order-p kernel invariant under every permutation of its arguments.
class SymmetricKernel {
public:
  /// Validates symmetry up to 1e-12 relative to the largest entry.
  explicit SymmetricKernel(Tensor values) : values_(std::move(values)) {
    const double defect = detail::symmetry_defect(values_);
    if (defect > 1e-12 * std::max(1.0, values_.max_abs())) {
      throw PreconditionError("kernel is not symmetric (max defect " + std::to_string(defect) + ")");
    }
  }

  /// Wraps a tensor already known to be symmetric.
  static SymmetricKernel trusted(Tensor values) { return SymmetricKernel(std::move(values), Trusted{}); }

  static SymmetricKernel constant(int order, int alphabet, double c) {
    return trusted(Tensor::constant(order, alphabet, c));
  }

  int order() const noexcept { return values_.order(); }
  int alphabet() const noexcept { return values_.alphabet(); }
  const Tensor& tensor() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double at(std::initializer_list<int> symbols) const { return values_.at(symbols); }
  double at(std::span<const int> symbols) const { return values_.at(symbols); }

  SymmetricKernel scaled(double c) const { return trusted(values_ * c); }

private:
  struct Trusted {};
  SymmetricKernel(Tensor values, Trusted) : values_(std::move(values)) {}

  Tensor values_;
};

/// Kernel over R^d that is evaluated pointwise and sampled, never tabulated.
struct ContinuousKernelSpec {
  int order = 1;
  int dimension = 1;
  /// Receives order * dimension coordinates, point after point.
  std::function<double(std::span<const double>)> evaluator;
  /// Writes the point with the given index of the stream keyed by seed.
  std::function<void(std::uint64_t seed, std::uint64_t index, std::span<double> out)> sampler;
};

/// Canonical symmetrization: the average of f over all argument permutations.
inline SymmetricKernel symmetrize(const Tensor& f) {
  const int p = f.order();
  if (p > kMaxSymmetrizeOrder) {
    throw CapacityError("symmetrization is limited to order " + std::to_string(kMaxSymmetrizeOrder));
  }
  if (p <= 1) return SymmetricKernel::trusted(f);

  std::vector<std::vector<int>> perms;
  std::vector<int> perm(static_cast<std::size_t>(p));
  std::iota(perm.begin(), perm.end(), 0);
  do {
    perms.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));

  Tensor out = Tensor::zeros(p, f.alphabet());
  std::vector<int> sym(static_cast<std::size_t>(p));
  std::vector<int> permuted(static_cast<std::size_t>(p));
  const double inv = 1.0 / static_cast<double>(perms.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    f.unravel(i, sym);
    double acc = 0.0;
    for (const auto& s : perms) {
      for (int j = 0; j < p; ++j) permuted[static_cast<std::size_t>(j)] = sym[static_cast<std::size_t>(s[static_cast<std::size_t>(j)])];
      acc += f.at(permuted);
    }
    out[i] = acc * inv;
  }
  return SymmetricKernel::trusted(std::move(out));
}

/// (sum_x |f(x)|^r mu^{(x)p}(x))^{1/r}, exact over all m^p indices.
inline double lp_norm(const Tensor& f, const DiscreteMeasure& mu, double r) {
  if (!(r > 0.0)) throw ParameterError("norm exponent must be positive");
  detail::require_alphabet(f, mu);
  const auto w = mu.product_weights(f.order());
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) acc += std::pow(std::abs(f[i]), r) * w[i];
  return std::pow(acc, 1.0 / r);
}

inline double lp_norm(const SymmetricKernel& psi, const DiscreteMeasure& mu, double r) {
  return lp_norm(psi.tensor(), mu, r);
}

inline double l2_norm(const Tensor& f, const DiscreteMeasure& mu) {
  detail::require_alphabet(f, mu);
  const auto w = mu.product_weights(f.order());
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) acc += f[i] * f[i] * w[i];
  return std::sqrt(acc);
}

inline double l2_norm(const SymmetricKernel& psi, const DiscreteMeasure& mu) { return l2_norm(psi.tensor(), mu); }

inline double l4_norm(const Tensor& f, const DiscreteMeasure& mu) {
  detail::require_alphabet(f, mu);
  const auto w = mu.product_weights(f.order());
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) acc += f[i] * f[i] * f[i] * f[i] * w[i];
  return std::sqrt(std::sqrt(acc));
}

/// L^2(mu^{(x)k}) inner product of two tensors of the same order.
inline double inner_product(const Tensor& a, const Tensor& b, const DiscreteMeasure& mu) {
  if (!a.same_shape(b)) throw DimensionError("inner product of tensors with different shapes");
  detail::require_alphabet(a, mu);
  const auto w = mu.product_weights(a.order());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i] * w[i];
  return acc;
}

/// Expectation of f under the product measure.
inline double expectation(const Tensor& f, const DiscreteMeasure& mu) {
  detail::require_alphabet(f, mu);
  const auto w = mu.product_weights(f.order());
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) acc += f[i] * w[i];
  return acc;
}

/// D(x_2, ..., x_p) = sum_{x_1} psi(x_1, ..., x_p) mu(x_1); order p-1.
inline Tensor degeneracy_defect(const Tensor& psi, const DiscreteMeasure& mu) {
  detail::require_alphabet(psi, mu);
  if (psi.order() < 1) throw DimensionError("degeneracy is defined for order >= 1");
  const std::size_t m = static_cast<std::size_t>(psi.alphabet());
  Tensor out = Tensor::zeros(psi.order() - 1, psi.alphabet());
  const std::size_t block = out.size();
  for (std::size_t x1 = 0; x1 < m; ++x1) {
    const double w = mu[x1];
    for (std::size_t rest = 0; rest < block; ++rest) out[rest] += w * psi[x1 * block + rest];
  }
  return out;
}

inline Tensor degeneracy_defect(const SymmetricKernel& psi, const DiscreteMeasure& mu) {
  return degeneracy_defect(psi.tensor(), mu);
}

inline bool is_degenerate(const SymmetricKernel& psi, const DiscreteMeasure& mu,
                          double tolerance = kDegeneracyTolerance) {
  return degeneracy_defect(psi, mu).max_abs() <= tolerance;
}

}  // namespace ustat
