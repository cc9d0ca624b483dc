#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "dilatron/dilation.hpp"
#include "dilatron/error.hpp"
#include "dilatron/markov_core.hpp"

namespace dilatron::quantum {

using Complex = std::complex<double>;
/// Bounded operator on C^d, in the canonical basis {|i⟩}.
using Operator = Eigen::MatrixXcd;

/// Column-stacking vectorization: vec(a)[i + j·d] = a(i, j).
inline Eigen::VectorXcd vec(const Operator& a) {
  return Eigen::Map<const Eigen::VectorXcd>(a.data(), a.size());
}

inline Operator unvec(const Eigen::VectorXcd& v, Eigen::Index d) {
  if (v.size() != d * d) throw Error(ErrorCode::DimensionMismatch, "vector length is not d^2");
  return Eigen::Map<const Operator>(v.data(), d, d);
}

inline Operator basis_operator(Eigen::Index d, Eigen::Index i, Eigen::Index j) {
  Operator e = Operator::Zero(d, d);
  e(i, j) = 1.0;
  return e;
}

/// Linear map on d×d operators, stored as the d²×d² matrix acting on
/// column-stacked operators: vec(L(a)) = matrix · vec(a).
class Superoperator {
 public:
  explicit Superoperator(Eigen::Index d) : d_(d), m_(Eigen::MatrixXcd::Zero(d * d, d * d)) {}

  Superoperator(Eigen::Index d, Eigen::MatrixXcd m) : d_(d), m_(std::move(m)) {
    if (m_.rows() != d * d || m_.cols() != d * d) throw Error(ErrorCode::DimensionMismatch, "superoperator matrix must be d^2 x d^2");
  }

  /// Tabulates a linear map by its action on the matrix units |i⟩⟨j|.
  static Superoperator from_map(Eigen::Index d, const std::function<Operator(const Operator&)>& map) {
    Superoperator s(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index i = 0; i < d; ++i) s.m_.col(i + j * d) = vec(map(basis_operator(d, i, j)));
    }
    return s;
  }

  static Superoperator identity(Eigen::Index d) { return {d, Eigen::MatrixXcd::Identity(d * d, d * d)}; }

  Eigen::Index dim() const { return d_; }
  const Eigen::MatrixXcd& matrix() const { return m_; }

  Operator operator()(const Operator& a) const {
    if (a.rows() != d_ || a.cols() != d_) throw Error(ErrorCode::DimensionMismatch, "operator dimension");
    return unvec(m_ * vec(a), d_);
  }

 private:
  Eigen::Index d_;
  Eigen::MatrixXcd m_;
};

inline double max_abs(const Eigen::MatrixXcd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

/// m_f = Σ_i f(i) |i⟩⟨i|.
inline Operator mult_operator(std::span<const Complex> f) {
  const auto n = static_cast<Eigen::Index>(f.size());
  Operator m = Operator::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) m(i, i) = f[static_cast<std::size_t>(i)];
  return m;
}

inline Operator mult_operator(std::span<const double> f) {
  std::vector<Complex> c(f.begin(), f.end());
  return mult_operator(std::span<const Complex>(c));
}

inline Operator mult_operator(const std::vector<double>& f) { return mult_operator(std::span<const double>(f)); }
inline Operator mult_operator(const std::vector<Complex>& f) { return mult_operator(std::span<const Complex>(f)); }

/// Indicator of state k as a classical function.
inline std::vector<double> indicator(std::size_t n, std::size_t k) {
  std::vector<double> f(n, 0.0);
  f[k] = 1.0;
  return f;
}

/// Dense S is capped at n = 3 (n·|G| = 243); n = 4 would be 4096² complex.
inline constexpr std::size_t kMaxDenseUnitaryStates = 3;

/// S = Σ_{i,g} |φ(i,g)⟩⟨i,g| on H ⊗ Z, basis index i·|G| + g, together
/// with its n×n blocks S_{gg'} = Σ_{i,j} |i⟩⟨i,g|φ(j,g')⟩⟨j|.
class CouplingUnitary {
 public:
  Eigen::Index states() const { return n_; }
  Eigen::Index marks() const { return g_; }
  const Operator& matrix() const { return s_; }

  /// (S_{gg'})_{ij} = S(i·|G| + g, j·|G| + g').
  Operator block(std::uint64_t g, std::uint64_t gp) const {
    Operator b(n_, n_);
    const auto gi = static_cast<Eigen::Index>(g), gpi = static_cast<Eigen::Index>(gp);
    for (Eigen::Index i = 0; i < n_; ++i) {
      for (Eigen::Index j = 0; j < n_; ++j) b(i, j) = s_(i * g_ + gi, j * g_ + gpi);
    }
    return b;
  }

  bool block_is_zero(std::uint64_t g, std::uint64_t gp) const {
    const auto gi = static_cast<Eigen::Index>(g), gpi = static_cast<Eigen::Index>(gp);
    for (Eigen::Index i = 0; i < n_; ++i) {
      for (Eigen::Index j = 0; j < n_; ++j) {
        if (s_(i * g_ + gi, j * g_ + gpi) != Complex(0.0)) return false;
      }
    }
    return true;
  }

  /// Entries in {0, 1}, exactly one 1 per row and per column.
  bool is_permutation() const {
    std::vector<int> row(static_cast<std::size_t>(s_.rows()), 0), col(static_cast<std::size_t>(s_.cols()), 0);
    for (Eigen::Index c = 0; c < s_.cols(); ++c) {
      for (Eigen::Index r = 0; r < s_.rows(); ++r) {
        const Complex v = s_(r, c);
        if (v == Complex(1.0)) {
          ++row[static_cast<std::size_t>(r)];
          ++col[static_cast<std::size_t>(c)];
        } else if (v != Complex(0.0)) {
          return false;
        }
      }
    }
    return std::all_of(row.begin(), row.end(), [](int k) { return k == 1; }) &&
           std::all_of(col.begin(), col.end(), [](int k) { return k == 1; });
  }

  /// S*S = SS* = I with exact arithmetic (entries are 0 or 1).
  bool is_unitary_exact() const {
    const auto dim = s_.rows();
    const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(dim, dim);
    return (s_.adjoint() * s_ == id) && (s_ * s_.adjoint() == id);
  }

 private:
  friend CouplingUnitary build_S(const Coupling& phi);
  CouplingUnitary(Eigen::Index n, Eigen::Index g, Operator s) : n_(n), g_(g), s_(std::move(s)) {}

  Eigen::Index n_;
  Eigen::Index g_;
  Operator s_;
};

inline CouplingUnitary build_S(const Coupling& phi) {
  if (!phi.is_dense()) throw Error(ErrorCode::TooLarge, "S needs a dense coupling");
  if (phi.states() > kMaxDenseUnitaryStates) {
    throw Error(ErrorCode::TooLarge, "dense S capped at n=3, got n=" + std::to_string(phi.states()));
  }
  const auto dim = static_cast<Eigen::Index>(phi.domain_size());
  Operator s = Operator::Zero(dim, dim);
  const auto& fwd = phi.forward_table();
  for (Eigen::Index x = 0; x < dim; ++x) s(static_cast<Eigen::Index>(fwd[static_cast<std::size_t>(x)]), x) = 1.0;
  return {static_cast<Eigen::Index>(phi.states()), static_cast<Eigen::Index>(phi.space().size()), std::move(s)};
}

/// Complex weights ν_g on the mark basis of Z.
struct MarkVector {
  Eigen::VectorXcd components;

  double squared_norm() const { return components.squaredNorm(); }
};

/// ν = Σ_g √(λ q_g) |g⟩.
inline MarkVector nu_from_law(const EnvironmentLaw& law, const MarkSpace& space) {
  MarkVector nu{Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(space.size()))};
  for (const auto& w : law.support()) {
    nu.components(static_cast<Eigen::Index>(space.index(w.mark))) = std::sqrt(law.rate() * w.weight);
  }
  return nu;
}

/// R_g = Σ_{g'} S_{gg'} ν_{g'}, one operator per mark g.
inline std::vector<Operator> kraus_from_S_nu(const CouplingUnitary& s, const MarkVector& nu) {
  if (nu.components.size() != s.marks()) throw Error(ErrorCode::DimensionMismatch, "nu has wrong length");
  const Eigen::Index n = s.states();
  std::vector<Operator> out(static_cast<std::size_t>(s.marks()), Operator::Zero(n, n));
  for (Eigen::Index gp = 0; gp < s.marks(); ++gp) {
    const Complex v = nu.components(gp);
    if (v == Complex(0.0)) continue;
    for (Eigen::Index g = 0; g < s.marks(); ++g) {
      if (s.block_is_zero(static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(gp))) continue;
      out[static_cast<std::size_t>(g)] += v * s.block(static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(gp));
    }
  }
  return out;
}

/// La = i[H, a] + Σ_z (R_z* a R_z - ½{R_z* R_z, a}).
inline Superoperator lindblad_from_kraus(const Operator& h, const std::vector<Operator>& rs, double self_adjoint_tol = 1e-12) {
  const Eigen::Index d = h.rows();
  if (h.cols() != d) throw Error(ErrorCode::DimensionMismatch, "H must be square");
  if (max_abs(h - h.adjoint()) > self_adjoint_tol) throw Error(ErrorCode::NotSelfAdjoint, "H != H*");
  std::vector<const Operator*> active;
  Operator k = Operator::Zero(d, d);
  for (const auto& r : rs) {
    if (r.rows() != d || r.cols() != d) throw Error(ErrorCode::DimensionMismatch, "Kraus operator dimension");
    if (r.isZero(0.0)) continue;
    active.push_back(&r);
    k += r.adjoint() * r;
  }
  const Complex imag(0.0, 1.0);
  return Superoperator::from_map(d, [&](const Operator& a) {
    Operator out = imag * (h * a - a * h) - 0.5 * (k * a + a * k);
    for (const Operator* r : active) out += r->adjoint() * a * (*r);
    return out;
  });
}

/// La = λ(Σ_{g,g',g''} √(q_{g'} q_{g''}) S*_{gg'} a S_{gg''} - a), summed term
/// by term over the support of q.
inline Superoperator lindblad_rext0(const CouplingUnitary& s, const std::vector<EnvironmentLaw::Weight>& q, const MarkSpace& space, double lambda) {
  if (static_cast<Eigen::Index>(space.size()) != s.marks() || static_cast<Eigen::Index>(space.states()) != s.states()) {
    throw Error(ErrorCode::DimensionMismatch, "mark space does not match S");
  }
  struct Term {
    double weight;
    Operator left_adjoint;
    Operator right;
  };
  std::vector<Term> terms;
  for (Eigen::Index g = 0; g < s.marks(); ++g) {
    for (const auto& w1 : q) {
      const auto g1 = space.index(w1.mark);
      if (s.block_is_zero(static_cast<std::uint64_t>(g), g1)) continue;
      for (const auto& w2 : q) {
        const auto g2 = space.index(w2.mark);
        if (s.block_is_zero(static_cast<std::uint64_t>(g), g2)) continue;
        terms.push_back({std::sqrt(w1.weight * w2.weight), s.block(static_cast<std::uint64_t>(g), g1).adjoint(),
                         s.block(static_cast<std::uint64_t>(g), g2)});
      }
    }
  }
  return Superoperator::from_map(s.states(), [&](const Operator& a) {
    Operator sum = Operator::Zero(a.rows(), a.cols());
    for (const auto& t : terms) sum += t.weight * (t.left_adjoint * a * t.right);
    return Operator(lambda * (sum - a));
  });
}

/// La = λ(Σ_{ℓ,i} p_ℓ |i⟩⟨β_ℓ(i)| a |β_ℓ(i)⟩⟨i| - a).
inline Superoperator lindblad_rext(const Decomposition& p, double lambda) {
  const auto d = static_cast<Eigen::Index>(p.n);
  return Superoperator::from_map(d, [&](const Operator& a) {
    Operator sum = Operator::Zero(d, d);
    for (const auto& atom : p.atoms) {
      for (Eigen::Index i = 0; i < d; ++i) {
        const Eigen::Index b = atom.map(static_cast<State>(i));
        // |i⟩⟨β(i)| a |β(i)⟩⟨i| = a(β(i), β(i)) |i⟩⟨i|
        sum(i, i) += atom.weight * a(b, b);
      }
    }
    return Operator(lambda * (sum - a));
  });
}

inline Superoperator superop_exp(const Superoperator& l, double t) {
  if (!(t >= 0.0)) throw Error(ErrorCode::NegativeTime, "t must be >= 0");
  if (t == 0.0) return Superoperator::identity(l.dim());
  const Eigen::MatrixXcd scaled = l.matrix() * Complex(t);
  return {l.dim(), scaled.exp()};
}

/// C = Σ_{ij} |i⟩⟨j| ⊗ T(|i⟩⟨j|); T is completely positive iff C ⪰ 0.
inline Eigen::MatrixXcd choi_matrix(const Superoperator& t) {
  const Eigen::Index d = t.dim();
  Eigen::MatrixXcd c = Eigen::MatrixXcd::Zero(d * d, d * d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) c.block(i * d, j * d, d, d) = t(basis_operator(d, i, j));
  }
  return c;
}

inline double choi_min_eigenvalue(const Superoperator& t) {
  const Eigen::MatrixXcd c = choi_matrix(t);
  const Eigen::MatrixXcd herm = 0.5 * (c + c.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(herm, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// max_k ‖L m_{e_k} - m_{R e_k}‖_max.
inline double generator_extension_residual(const Superoperator& l, const RateMatrix& r) {
  const std::size_t n = r.size();
  if (static_cast<std::size_t>(l.dim()) != n) throw Error(ErrorCode::DimensionMismatch, "L and R dimensions differ");
  double res = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto f = indicator(n, k);
    const Eigen::VectorXd rf = r.matrix() * Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(n));
    std::vector<double> rfv(rf.data(), rf.data() + rf.size());
    res = std::max(res, max_abs(l(mult_operator(f)) - mult_operator(rfv)));
  }
  return res;
}

struct ExtensionResidual {
  /// max over t and k of ‖e^{Lt}(m_{e_k}) - m_{e^{Rt} e_k}‖_max.
  double max_residual = 0.0;
  /// Largest off-diagonal entry of e^{Lt}(m_{e_k}).
  double max_off_diagonal = 0.0;
};

inline ExtensionResidual check_extension(const Superoperator& l, const RateMatrix& r, std::span<const double> ts) {
  const std::size_t n = r.size();
  if (static_cast<std::size_t>(l.dim()) != n) throw Error(ErrorCode::DimensionMismatch, "L and R dimensions differ");
  ExtensionResidual out;
  for (double t : ts) {
    const Superoperator tl = superop_exp(l, t);
    const StochasticMatrix er = expm_rate(r, t);
    for (std::size_t k = 0; k < n; ++k) {
      const Operator a = tl(mult_operator(indicator(n, k)));
      std::vector<double> ef(n);
      for (std::size_t i = 0; i < n; ++i) ef[i] = er(i, k);  // (e^{Rt} e_k)(i)
      out.max_residual = std::max(out.max_residual, max_abs(a - mult_operator(ef)));
      Operator off = a;
      off.diagonal().setZero();
      out.max_off_diagonal = std::max(out.max_off_diagonal, max_abs(off));
    }
  }
  return out;
}

inline ExtensionResidual check_extension(const Superoperator& l, const RateMatrix& r, const std::vector<double>& ts) {
  return check_extension(l, r, std::span<const double>(ts));
}

struct FlowCoefficientResidual {
  /// max over g, g' of the entrywise deviation between both sides.
  double max_residual = 0.0;
  /// max entry over the g ≠ g' blocks of the left-hand side.
  double max_off_diagonal_block = 0.0;
};

/// Σ_{g''} S*_{g''g} m_f S_{g''g'} against δ_{gg'} Σ_i |i⟩⟨φ^E(i,g)| m_f |φ^E(i,g)⟩⟨i|
/// for every pair of marks.
inline FlowCoefficientResidual flow_coefficient_identity(const CouplingUnitary& s, const Coupling& phi, std::span<const Complex> f) {
  const Eigen::Index n = s.states();
  const Eigen::Index gs = s.marks();
  if (static_cast<Eigen::Index>(f.size()) != n) throw Error(ErrorCode::DimensionMismatch, "function size differs from n");
  const Operator mf = mult_operator(f);

  // Nonzero blocks of S, grouped by their column mark g.
  struct Block {
    Eigen::Index row_mark;
    Operator value;
  };
  std::vector<std::vector<Block>> by_column(static_cast<std::size_t>(gs));
  for (Eigen::Index g2 = 0; g2 < gs; ++g2) {
    for (Eigen::Index g = 0; g < gs; ++g) {
      if (!s.block_is_zero(static_cast<std::uint64_t>(g2), static_cast<std::uint64_t>(g))) {
        by_column[static_cast<std::size_t>(g)].push_back({g2, s.block(static_cast<std::uint64_t>(g2), static_cast<std::uint64_t>(g))});
      }
    }
  }

  FlowCoefficientResidual out;
  for (Eigen::Index g = 0; g < gs; ++g) {
    Operator rhs_diag = Operator::Zero(n, n);
    const Mark mg = phi.space().mark(static_cast<std::uint64_t>(g));
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto k = static_cast<Eigen::Index>(phi.apply(static_cast<State>(i), mg).state);
      // |i⟩⟨k| m_f |k⟩⟨i| = f(k) |i⟩⟨i|
      rhs_diag(i, i) = mf(k, k);
    }
    for (Eigen::Index gp = 0; gp < gs; ++gp) {
      Operator lhs = Operator::Zero(n, n);
      const auto& left = by_column[static_cast<std::size_t>(g)];
      const auto& right = by_column[static_cast<std::size_t>(gp)];
      for (const auto& a : left) {
        for (const auto& b : right) {
          if (a.row_mark == b.row_mark) lhs += a.value.adjoint() * mf * b.value;
        }
      }
      if (g == gp) {
        out.max_residual = std::max(out.max_residual, max_abs(lhs - rhs_diag));
      } else {
        const double m = max_abs(lhs);
        out.max_residual = std::max(out.max_residual, m);
        out.max_off_diagonal_block = std::max(out.max_off_diagonal_block, m);
      }
    }
  }
  return out;
}

inline FlowCoefficientResidual flow_coefficient_identity(const CouplingUnitary& s, const Coupling& phi, const std::vector<Complex>& f) {
  return flow_coefficient_identity(s, phi, std::span<const Complex>(f));
}

/// Radon–Nikodym density of q^{⊗N} ⊗ Poisson(λ) against uniform marks with
/// the same arrival law, on a configuration: Π_points |G| q_{mark}.
inline double rn_density(const MarkedConfiguration& config, const EnvironmentLaw& law, const MarkSpace& space) {
  const auto g_size = static_cast<double>(space.size());
  double density = 1.0;
  for (const auto& p : config.points()) {
    space.require(p.mark);
    density *= g_size * law.weight(p.mark);
  }
  return density;
}

}  // namespace dilatron::quantum
