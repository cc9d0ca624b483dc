#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <boost/math/special_functions/gamma.hpp>

#include "dilatron/error.hpp"

namespace dilatron {

/// States are 0-based internally: E = {0, ..., n-1}.
using State = std::uint32_t;
/// Label of a deterministic map β: E → E, in 0 .. n^n - 1.
using MapIndex = std::uint64_t;

namespace detail {

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

/// n^e with overflow detection; returns nullopt on overflow.
inline std::optional<std::uint64_t> checked_pow(std::uint64_t n, std::uint64_t e) {
  std::uint64_t r = 1;
  for (std::uint64_t k = 0; k < e; ++k) {
    if (n != 0 && r > UINT64_MAX / n) return std::nullopt;
    r *= n;
  }
  return r;
}

}  // namespace detail

/// Largest n for which every map index n^n and every mark index n^{n+1}
/// fit into 64 bits.
inline constexpr std::size_t kMaxStates = 15;

inline std::uint64_t map_count(std::size_t n) {
  auto c = detail::checked_pow(n, n);
  if (!c || n > kMaxStates) throw Error(ErrorCode::TooLarge, "n^n overflows for n=" + std::to_string(n));
  return *c;
}

/// Tolerances applied when validating matrices.
struct MatrixTolerance {
  double row_sum = 1e-12;
  /// Entries (or off-diagonal rates) may be as low as -negative.
  double negative = 0.0;
};

/// Real n×n generator of a continuous-time chain: nonnegative off-diagonal
/// entries and zero row sums.
class RateMatrix {
 public:
  static RateMatrix validate(const Eigen::MatrixXd& raw, MatrixTolerance tol = {}) {
    if (raw.rows() != raw.cols() || raw.rows() == 0) {
      throw Error(ErrorCode::NonSquare, std::to_string(raw.rows()) + "x" + std::to_string(raw.cols()));
    }
    const Eigen::Index n = raw.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (!std::isfinite(raw(i, j))) {
          throw Error(ErrorCode::OutOfRange, "non-finite entry at (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")");
        }
        if (i != j && raw(i, j) < -tol.negative) {
          throw Error(ErrorCode::NegativeOffDiagonal, "(" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")");
        }
      }
      const double s = raw.row(i).sum();
      if (std::abs(s) > tol.row_sum) {
        throw Error(ErrorCode::RowSumNonzero, "row " + std::to_string(i + 1) + " sums to " + detail::fmt_double(s));
      }
    }
    return RateMatrix(raw);
  }

  static RateMatrix zero(std::size_t n) {
    return RateMatrix(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
  }

  std::size_t size() const { return static_cast<std::size_t>(m_.rows()); }
  double operator()(std::size_t i, std::size_t j) const {
    return m_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  const Eigen::MatrixXd& matrix() const { return m_; }

  /// max_i(-R_ii), the smallest admissible uniformization rate.
  double max_exit_rate() const { return (-m_.diagonal()).maxCoeff(); }

  friend bool operator==(const RateMatrix& a, const RateMatrix& b) { return a.m_ == b.m_; }

 private:
  explicit RateMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {}
  Eigen::MatrixXd m_;
};

/// Real n×n transition matrix: nonnegative entries, rows summing to one.
class StochasticMatrix {
 public:
  static StochasticMatrix validate(const Eigen::MatrixXd& raw, MatrixTolerance tol = {}) {
    if (raw.rows() != raw.cols() || raw.rows() == 0) {
      throw Error(ErrorCode::NonSquare, std::to_string(raw.rows()) + "x" + std::to_string(raw.cols()));
    }
    const Eigen::Index n = raw.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (!std::isfinite(raw(i, j))) {
          throw Error(ErrorCode::OutOfRange, "non-finite entry at (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")");
        }
        if (raw(i, j) < -tol.negative) {
          throw Error(ErrorCode::NegativeEntry, "(" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ") = " + detail::fmt_double(raw(i, j)));
        }
      }
      const double s = raw.row(i).sum();
      if (std::abs(s - 1.0) > tol.row_sum) {
        throw Error(ErrorCode::RowSumNonzero, "row " + std::to_string(i + 1) + " sums to " + detail::fmt_double(s));
      }
    }
    return StochasticMatrix(raw);
  }

  static StochasticMatrix identity(std::size_t n) {
    return StochasticMatrix(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
  }

  std::size_t size() const { return static_cast<std::size_t>(m_.rows()); }
  double operator()(std::size_t i, std::size_t j) const {
    return m_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  const Eigen::MatrixXd& matrix() const { return m_; }

  friend bool operator==(const StochasticMatrix& a, const StochasticMatrix& b) { return a.m_ == b.m_; }

 private:
  explicit StochasticMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {}
  Eigen::MatrixXd m_;
};

struct Uniformization {
  double rate;
  StochasticMatrix jump_matrix;
};

/// R = λ(P - I). With no rate given, λ = max_i(-R_ii); for R = 0 the
/// convention λ = 1, P = I keeps every downstream construction defined.
inline Uniformization uniformize(const RateMatrix& r, std::optional<double> rate = std::nullopt) {
  const std::size_t n = r.size();
  const double min_rate = r.max_exit_rate();
  double lambda = min_rate;
  if (rate) {
    if (!(*rate > 0.0) || !std::isfinite(*rate) || *rate < min_rate) {
      throw Error(ErrorCode::InvalidRate, "rate " + detail::fmt_double(*rate) + " below max exit rate " + detail::fmt_double(min_rate));
    }
    lambda = *rate;
  }
  if (lambda == 0.0) return {1.0, StochasticMatrix::identity(n)};

  Eigen::MatrixXd p = r.matrix() / lambda;
  p.diagonal().array() += 1.0;
  // The diagonal of the row attaining the max exit rate is exactly zero in
  // real arithmetic; pin it so rounding cannot produce -0 or -1e-17.
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (p(ii, ii) < 0.0 && p(ii, ii) > -1e-14) p(ii, ii) = 0.0;
  }
  return {lambda, StochasticMatrix::validate(p, {1e-12, 0.0})};
}

/// e^{Rt} by scaling and squaring with a Padé approximant.
inline StochasticMatrix expm_rate(const RateMatrix& r, double t) {
  if (!(t >= 0.0)) throw Error(ErrorCode::NegativeTime, "t = " + detail::fmt_double(t));
  if (t == 0.0) return StochasticMatrix::identity(r.size());
  const Eigen::MatrixXd scaled = r.matrix() * t;
  const Eigen::MatrixXd e = scaled.exp();
  return StochasticMatrix::validate(e, {1e-10, 1e-12});
}

/// Σ_{m ≤ m_max} e^{-λt}(λt)^m/m! · P^m, the Poisson-subordinated series.
/// Refuses to truncate when the neglected Poisson tail exceeds 1e-13.
inline Eigen::MatrixXd uniformized_series(double lambda, const StochasticMatrix& p, double t, std::size_t m_max) {
  if (!(t >= 0.0)) throw Error(ErrorCode::NegativeTime, "t = " + detail::fmt_double(t));
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorCode::InvalidRate, detail::fmt_double(lambda));
  const double mean = lambda * t;
  const auto n = static_cast<Eigen::Index>(p.size());
  if (mean == 0.0) return Eigen::MatrixXd::Identity(n, n);

  // P(N > m_max) for N ~ Poisson(mean) is the regularized lower gamma P(m_max + 1, mean).
  const double tail = boost::math::gamma_p(static_cast<double>(m_max) + 1.0, mean);
  if (tail >= 1e-13) {
    throw Error(ErrorCode::TailMassTooLarge, "Poisson tail beyond m_max=" + std::to_string(m_max) + " is " + detail::fmt_double(tail));
  }

  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);
  double weight = std::exp(-mean);
  Eigen::MatrixXd sum = weight * power;
  for (std::size_t m = 1; m <= m_max; ++m) {
    power = power * p.matrix();
    weight *= mean / static_cast<double>(m);
    sum += weight * power;
  }
  return sum;
}

/// A map β: E → E together with its label ℓ. The label is the base-n number
/// whose most significant digit is β(0).
class DeterministicMap {
 public:
  static DeterministicMap from_index(std::size_t n, MapIndex index) {
    const std::uint64_t count = map_count(n);
    if (index >= count) throw Error(ErrorCode::OutOfRange, "map index " + std::to_string(index) + " >= " + std::to_string(count));
    std::vector<State> image(n);
    MapIndex rest = index;
    for (std::size_t k = n; k-- > 0;) {
      image[k] = static_cast<State>(rest % n);
      rest /= n;
    }
    return DeterministicMap(std::move(image), index);
  }

  static DeterministicMap from_image(std::vector<State> image) {
    const std::size_t n = image.size();
    map_count(n);  // range guard
    MapIndex index = 0;
    for (State s : image) {
      if (s >= n) throw Error(ErrorCode::OutOfRange, "image state " + std::to_string(s) + " >= n");
      index = index * n + s;
    }
    return DeterministicMap(std::move(image), index);
  }

  static DeterministicMap identity(std::size_t n) {
    std::vector<State> image(n);
    for (std::size_t i = 0; i < n; ++i) image[i] = static_cast<State>(i);
    return from_image(std::move(image));
  }

  std::size_t size() const { return image_.size(); }
  MapIndex index() const { return index_; }
  const std::vector<State>& image() const { return image_; }
  State operator()(State i) const { return image_[i]; }

  /// D_ij = δ_{β(i), j}.
  Eigen::MatrixXd matrix() const {
    const auto n = static_cast<Eigen::Index>(size());
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) d(i, image_[static_cast<std::size_t>(i)]) = 1.0;
    return d;
  }

  friend bool operator==(const DeterministicMap&, const DeterministicMap&) = default;

 private:
  DeterministicMap(std::vector<State> image, MapIndex index) : image_(std::move(image)), index_(index) {}

  std::vector<State> image_;
  MapIndex index_;
};

/// Lazy ascending enumeration of all n^n deterministic maps.
class MapRange {
 public:
  static constexpr std::size_t kMaxEnumerable = 8;

  class iterator {
   public:
    using value_type = DeterministicMap;
    using difference_type = std::ptrdiff_t;

    iterator() = default;
    iterator(std::size_t n, MapIndex index) : n_(n), index_(index) {}

    DeterministicMap operator*() const { return DeterministicMap::from_index(n_, index_); }
    iterator& operator++() {
      ++index_;
      return *this;
    }
    iterator operator++(int) {
      auto old = *this;
      ++index_;
      return old;
    }
    friend bool operator==(const iterator& a, const iterator& b) { return a.index_ == b.index_; }

   private:
    std::size_t n_ = 0;
    MapIndex index_ = 0;
  };

  explicit MapRange(std::size_t n) : n_(n), count_(0) {
    if (n == 0) throw Error(ErrorCode::OutOfRange, "n must be >= 1");
    if (n > kMaxEnumerable) throw Error(ErrorCode::TooLarge, "full enumeration of n^n maps capped at n=8, got n=" + std::to_string(n));
    count_ = map_count(n);
  }

  iterator begin() const { return {n_, 0}; }
  iterator end() const { return {n_, count_}; }
  std::uint64_t size() const { return count_; }

 private:
  std::size_t n_;
  std::uint64_t count_;
};

inline MapRange enumerate_maps(std::size_t n) { return MapRange(n); }

struct Atom {
  DeterministicMap map;
  double weight;
};

/// P = Σ_ℓ p_ℓ D_ℓ with p_ℓ = Π_i P_{i,β_ℓ(i)}; only atoms of positive weight
/// are stored, sorted by map index.
struct Decomposition {
  std::size_t n = 0;
  std::vector<Atom> atoms;

  double total_weight() const {
    double s = 0.0;
    for (const auto& a : atoms) s += a.weight;
    return s;
  }
};

/// Cap on the number of atoms decompose() will materialize.
inline constexpr std::uint64_t kMaxAtoms = 50'000'000;

/// Enumerates the Cartesian product of the row supports (entries > 0 as
/// stored) in ascending map-index order, never touching zero-weight maps.
inline Decomposition decompose(const StochasticMatrix& p) {
  const std::size_t n = p.size();
  map_count(n);
  std::vector<std::vector<State>> support(n);
  std::uint64_t atoms = 1;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (p(i, j) > 0.0) support[i].push_back(static_cast<State>(j));
    }
    atoms *= support[i].size();
    if (atoms > kMaxAtoms) throw Error(ErrorCode::TooLarge, "decomposition has more than " + std::to_string(kMaxAtoms) + " atoms");
  }

  Decomposition d{n, {}};
  d.atoms.reserve(static_cast<std::size_t>(atoms));
  // Odometer over support positions; the last row varies fastest, which
  // matches ascending map index since image[0] is the most significant digit.
  std::vector<std::size_t> pos(n, 0);
  std::vector<State> image(n);
  for (;;) {
    double w = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      image[i] = support[i][pos[i]];
      w *= p(i, image[i]);
    }
    if (w > 0.0) d.atoms.push_back({DeterministicMap::from_image(image), w});
    std::size_t k = n;
    while (k > 0) {
      --k;
      if (++pos[k] < support[k].size()) break;
      pos[k] = 0;
      if (k == 0) return d;
    }
  }
}

inline StochasticMatrix recompose(const Decomposition& d) {
  const auto n = static_cast<Eigen::Index>(d.n);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (const auto& a : d.atoms) {
    for (Eigen::Index i = 0; i < n; ++i) p(i, a.map(static_cast<State>(i))) += a.weight;
  }
  return StochasticMatrix::validate(p, {1e-10, 0.0});
}

/// (Df)(i) = f(β(i)).
template <class T>
std::vector<T> apply_map_to_function(const DeterministicMap& beta, std::span<const T> f) {
  if (f.size() != beta.size()) throw Error(ErrorCode::DimensionMismatch, "function has " + std::to_string(f.size()) + " entries, map acts on " + std::to_string(beta.size()));
  std::vector<T> out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[beta(static_cast<State>(i))];
  return out;
}

template <class T>
std::vector<T> apply_map_to_function(const DeterministicMap& beta, const std::vector<T>& f) {
  return apply_map_to_function(beta, std::span<const T>(f));
}

}  // namespace dilatron
