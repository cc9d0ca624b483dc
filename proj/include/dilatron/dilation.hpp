#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dilatron/error.hpp"
#include "dilatron/markov_core.hpp"
#include "dilatron/time.hpp"

namespace dilatron {

/// A mark g = (j, ℓ) of the universal mark space G = E × L.
struct Mark {
  State j = 0;
  MapIndex ell = 0;

  friend constexpr auto operator<=>(const Mark&, const Mark&) = default;
  friend constexpr bool operator==(const Mark&, const Mark&) = default;
};

/// G = E × L for a state space of size n. Marks are indexed
/// lexicographically: index(j, ℓ) = j · n^n + ℓ.
class MarkSpace {
 public:
  explicit MarkSpace(std::size_t n) : n_(n) {
    if (n == 0) throw Error(ErrorCode::OutOfRange, "n must be >= 1");
    maps_ = dilatron::map_count(n);
  }

  std::size_t states() const { return n_; }
  std::uint64_t map_count() const { return maps_; }
  std::uint64_t size() const { return static_cast<std::uint64_t>(n_) * maps_; }

  bool contains(const Mark& g) const { return g.j < n_ && g.ell < maps_; }
  std::uint64_t index(const Mark& g) const { return static_cast<std::uint64_t>(g.j) * maps_ + g.ell; }
  Mark mark(std::uint64_t index) const { return {static_cast<State>(index / maps_), index % maps_}; }

  /// β_ℓ(i) straight from the digits of ℓ.
  State map_image(MapIndex ell, State i) const {
    MapIndex v = ell;
    for (std::size_t k = n_ - 1; k > i; --k) v /= n_;
    return static_cast<State>(v % n_);
  }

  void require(const Mark& g) const {
    if (!contains(g)) {
      throw Error(ErrorCode::OutOfRange, "mark (" + std::to_string(g.j) + "," + std::to_string(g.ell) + ") outside G for n=" + std::to_string(n_));
    }
  }

  friend bool operator==(const MarkSpace& a, const MarkSpace& b) { return a.n_ == b.n_; }

 private:
  std::size_t n_;
  std::uint64_t maps_;
};

/// Dense coupling tables are capped at |E × G| = n^{n+2} ≤ 4096.
inline constexpr std::size_t kMaxDenseCouplingStates = 4;

enum class Provenance : std::uint8_t { Prescribed, Completed };

/// Order in which leftover codomain points are handed to leftover domain
/// points during completion. Only the prescribed part matters for any law.
enum class CompletionOrder { Lexicographic, Reversed };

/// The invertible coupling φ: E × G → E × G.
///
/// On the marks (0, ℓ) it is fixed: φ(i, (0, ℓ)) = (β_ℓ(i), (i, ℓ)). Every
/// other point is matched in a canonical completion. For n ≤ 4 the full
/// permutation is tabulated; larger n run lazily and only the prescribed
/// part can be evaluated.
class Coupling {
 public:
  struct Point {
    State state;
    Mark mark;
    friend bool operator==(const Point&, const Point&) = default;
  };

  /// Lazy coupling: only the prescribed part is available.
  static Coupling lazy(std::size_t n) { return Coupling(MarkSpace(n)); }

  static Coupling complete(std::size_t n, CompletionOrder order = CompletionOrder::Lexicographic) {
    if (n > kMaxDenseCouplingStates) {
      throw Error(ErrorCode::TooLargeForDenseCoupling, "dense coupling table requested for n=" + std::to_string(n) + " (max 4)");
    }
    Coupling c{MarkSpace(n)};
    const std::uint64_t total = c.domain_size();
    const std::uint64_t gsize = c.space_.size();
    constexpr std::uint64_t kUnset = UINT64_MAX;
    std::vector<std::uint64_t> fwd(total, kUnset);
    std::vector<bool> taken(total, false);
    std::vector<Provenance> prov(total, Provenance::Completed);

    for (State i = 0; i < n; ++i) {
      for (MapIndex ell = 0; ell < c.space_.map_count(); ++ell) {
        const std::uint64_t from = i * gsize + c.space_.index({0, ell});
        const std::uint64_t to = c.space_.map_image(ell, i) * gsize + c.space_.index({i, ell});
        fwd[from] = to;
        taken[to] = true;
        prov[from] = Provenance::Prescribed;
      }
    }

    std::vector<std::uint64_t> free_codomain;
    free_codomain.reserve(total);
    for (std::uint64_t x = 0; x < total; ++x) {
      if (!taken[x]) free_codomain.push_back(x);
    }
    if (order == CompletionOrder::Reversed) std::reverse(free_codomain.begin(), free_codomain.end());
    std::size_t next = 0;
    for (std::uint64_t x = 0; x < total; ++x) {
      if (fwd[x] == kUnset) fwd[x] = free_codomain[next++];
    }

    c.set_table(std::move(fwd), std::move(prov));
    return c;
  }

  /// Builds a coupling from an explicit forward table over E × G indices
  /// (i · |G| + g). With check = false a non-bijective table is accepted so
  /// that verification code can be exercised against a broken coupling.
  static Coupling from_table(std::size_t n, std::vector<std::uint64_t> forward, bool check = true) {
    Coupling c{MarkSpace(n)};
    if (forward.size() != c.domain_size()) {
      throw Error(ErrorCode::DimensionMismatch, "coupling table has " + std::to_string(forward.size()) + " entries, expected " + std::to_string(c.domain_size()));
    }
    std::vector<Provenance> prov(forward.size(), Provenance::Completed);
    for (State i = 0; i < n; ++i) {
      for (MapIndex ell = 0; ell < c.space_.map_count(); ++ell) {
        const std::uint64_t from = i * c.space_.size() + c.space_.index({0, ell});
        if (forward[from] == c.prescribed_index(i, ell)) prov[from] = Provenance::Prescribed;
      }
    }
    for (auto x : forward) {
      if (x >= c.domain_size()) throw Error(ErrorCode::OutOfRange, "coupling table entry out of range");
    }
    c.set_table(std::move(forward), std::move(prov), check);
    return c;
  }

  std::size_t states() const { return space_.states(); }
  const MarkSpace& space() const { return space_; }
  bool is_dense() const { return !forward_.empty(); }
  std::uint64_t domain_size() const { return space_.states() * space_.size(); }

  std::uint64_t encode(State i, const Mark& g) const { return i * space_.size() + space_.index(g); }
  Point decode(std::uint64_t x) const {
    return {static_cast<State>(x / space_.size()), space_.mark(x % space_.size())};
  }

  const std::vector<std::uint64_t>& forward_table() const { return forward_; }
  const std::vector<std::uint64_t>& backward_table() const { return backward_; }
  const std::vector<Provenance>& provenance() const { return provenance_; }

  /// False only for tables accepted unchecked by from_table().
  bool is_bijective() const { return !is_dense() || bijective_; }

  Point apply(State i, const Mark& g) const {
    check_point(i, g);
    if (is_dense()) return decode(forward_[encode(i, g)]);
    if (g.j != 0) {
      throw Error(ErrorCode::TooLargeForDenseCoupling, "lazy coupling only evaluates marks with j = 1");
    }
    return {space_.map_image(g.ell, i), Mark{i, g.ell}};
  }

  Point inverse(State i, const Mark& g) const {
    check_point(i, g);
    if (is_dense()) {
      if (!bijective_) throw Error(ErrorCode::NotBijective, "coupling table is not invertible");
      return decode(backward_[encode(i, g)]);
    }
    // Prescribed images are (β_ℓ(k), (k, ℓ)); anything else is unknown lazily.
    const State k = g.j;
    if (space_.map_image(g.ell, k) != i) {
      throw Error(ErrorCode::TooLargeForDenseCoupling, "lazy coupling cannot invert a completed point");
    }
    return {k, Mark{0, g.ell}};
  }

  friend bool operator==(const Coupling& a, const Coupling& b) {
    return a.space_ == b.space_ && a.forward_ == b.forward_ && a.provenance_ == b.provenance_;
  }

 private:
  explicit Coupling(MarkSpace space) : space_(space) {}

  std::uint64_t prescribed_index(State i, MapIndex ell) const {
    return space_.map_image(ell, i) * space_.size() + space_.index({i, ell});
  }

  void check_point(State i, const Mark& g) const {
    if (i >= space_.states()) throw Error(ErrorCode::OutOfRange, "state " + std::to_string(i) + " >= n");
    space_.require(g);
  }

  void set_table(std::vector<std::uint64_t> fwd, std::vector<Provenance> prov, bool check = true) {
    backward_.assign(fwd.size(), 0);
    std::vector<bool> hit(fwd.size(), false);
    bijective_ = true;
    for (std::uint64_t x = 0; x < fwd.size(); ++x) {
      if (hit[fwd[x]]) bijective_ = false;
      hit[fwd[x]] = true;
      backward_[fwd[x]] = x;
    }
    if (check && !bijective_) throw Error(ErrorCode::NotBijective, "coupling table is not a permutation");
    forward_ = std::move(fwd);
    provenance_ = std::move(prov);
  }

  MarkSpace space_;
  std::vector<std::uint64_t> forward_;
  std::vector<std::uint64_t> backward_;
  std::vector<Provenance> provenance_;
  bool bijective_ = true;
};

inline Coupling complete_coupling(std::size_t n, CompletionOrder order = CompletionOrder::Lexicographic) {
  return Coupling::complete(n, order);
}

inline Coupling::Point coupling_apply(const Coupling& phi, State i, const Mark& g) { return phi.apply(i, g); }
inline Coupling::Point coupling_inverse(const Coupling& phi, State i, const Mark& g) { return phi.inverse(i, g); }

struct MarkedPoint {
  Mark mark;
  Time time;
  friend bool operator==(const MarkedPoint&, const MarkedPoint&) = default;
};

/// A finite window (lo, hi] of a marked point configuration on the real
/// line. Points with time ≤ 0 are past, points with time > 0 are future.
/// Times are strictly increasing.
class MarkedConfiguration {
 public:
  MarkedConfiguration() = default;

  MarkedConfiguration(std::vector<MarkedPoint> points, Time lo, Time hi)
      : points_(std::move(points)), lo_(lo), hi_(hi) {
    if (!(lo_ < hi_)) throw Error(ErrorCode::MalformedConfiguration, "empty window");
    for (std::size_t k = 0; k < points_.size(); ++k) {
      const Time t = points_[k].time;
      if (!t.is_finite() || !(t > lo_) || t > hi_) {
        throw Error(ErrorCode::MalformedConfiguration, "point " + std::to_string(k) + " at t=" + std::to_string(t.seconds()) + " outside window");
      }
      if (k > 0 && !(points_[k - 1].time < t)) {
        throw Error(ErrorCode::MalformedConfiguration, "times not strictly increasing at point " + std::to_string(k));
      }
    }
  }

  const std::vector<MarkedPoint>& points() const { return points_; }
  Time window_lo() const { return lo_; }
  Time window_hi() const { return hi_; }

  /// Whether the configuration is fully specified on (a, b].
  bool covers(Time a, Time b) const { return lo_ <= a && b <= hi_; }

  /// Index of the first point with time > t.
  std::size_t first_after(Time t) const {
    return static_cast<std::size_t>(std::upper_bound(points_.begin(), points_.end(), t,
                                                     [](Time v, const MarkedPoint& p) { return v < p.time; }) -
                                    points_.begin());
  }

  /// Number of points in (a, b].
  std::size_t count_in(Time a, Time b) const { return b <= a ? 0 : first_after(b) - first_after(a); }

  friend bool operator==(const MarkedConfiguration&, const MarkedConfiguration&) = default;

 private:
  friend MarkedConfiguration theta_shift(Time, const MarkedConfiguration&);
  friend struct ConfigurationAccess;

  std::vector<MarkedPoint> points_;
  Time lo_ = Time::neg_infinity();
  Time hi_ = Time::infinity();
};

/// Mutable access used by the cocycle routines, which replace marks but
/// never move points.
struct ConfigurationAccess {
  static std::vector<MarkedPoint>& points(MarkedConfiguration& c) { return c.points_; }
};

/// Probability law of the environment: Poisson arrivals of the given rate,
/// i.i.d. marks with weights q (stored only on their support, by mark).
class EnvironmentLaw {
 public:
  struct Weight {
    Mark mark;
    double weight;
  };

  EnvironmentLaw(double rate, std::vector<Weight> weights) : rate_(rate), weights_(std::move(weights)) {
    if (!(rate_ > 0.0) || !std::isfinite(rate_)) throw Error(ErrorCode::InvalidLaw, "rate must be positive");
    std::erase_if(weights_, [](const Weight& w) { return w.weight == 0.0; });
    std::sort(weights_.begin(), weights_.end(), [](const Weight& a, const Weight& b) { return a.mark < b.mark; });
    double s = 0.0;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      if (!(weights_[k].weight > 0.0)) throw Error(ErrorCode::InvalidLaw, "negative mark weight");
      if (k > 0 && weights_[k - 1].mark == weights_[k].mark) throw Error(ErrorCode::InvalidLaw, "duplicate mark");
      s += weights_[k].weight;
    }
    if (std::abs(s - 1.0) > 1e-12) throw Error(ErrorCode::InvalidLaw, "mark weights sum to " + detail::fmt_double(s));
  }

  double rate() const { return rate_; }
  const std::vector<Weight>& support() const { return weights_; }

  double weight(const Mark& g) const {
    auto it = std::lower_bound(weights_.begin(), weights_.end(), g, [](const Weight& w, const Mark& m) { return w.mark < m; });
    return (it != weights_.end() && it->mark == g) ? it->weight : 0.0;
  }

 private:
  double rate_;
  std::vector<Weight> weights_;
};

/// A Poisson dilation (G, φ, Q): the mark space lives inside the coupling.
struct Dilation {
  Coupling coupling;
  EnvironmentLaw law;

  const MarkSpace& space() const { return coupling.space(); }
  std::size_t states() const { return coupling.states(); }
};

enum class CouplingMode {
  /// Dense table when n ≤ 4, lazy otherwise.
  Auto,
  /// Dense table or TooLargeForDenseCoupling.
  Dense,
  Lazy,
};

inline Coupling make_coupling(std::size_t n, CouplingMode mode) {
  switch (mode) {
    case CouplingMode::Dense: return Coupling::complete(n);
    case CouplingMode::Lazy: return Coupling::lazy(n);
    case CouplingMode::Auto: break;
  }
  return n <= kMaxDenseCouplingStates ? Coupling::complete(n) : Coupling::lazy(n);
}

/// The universal dilation: G and φ depend only on n; R enters solely through
/// λ and q = δ_1 ⊗ p, with p the product weights of the decomposition of P.
inline Dilation build_universal(const RateMatrix& r, CouplingMode mode = CouplingMode::Auto) {
  const std::size_t n = r.size();
  Coupling phi = make_coupling(n, mode);
  const auto [lambda, p] = uniformize(r);
  const Decomposition dec = decompose(p);
  std::vector<EnvironmentLaw::Weight> q;
  q.reserve(dec.atoms.size());
  for (const auto& atom : dec.atoms) q.push_back({Mark{0, atom.map.index()}, atom.weight});
  return Dilation{std::move(phi), EnvironmentLaw(lambda, std::move(q))};
}

/// φ_m ∘ … ∘ φ_1: the state threads through the marks in order and each mark
/// is replaced by the mark component produced at its step.
inline std::pair<State, std::vector<Mark>> phi_m(const Coupling& phi, State i, std::span<const Mark> marks) {
  std::vector<Mark> out(marks.begin(), marks.end());
  State s = i;
  for (auto& g : out) {
    const auto r = phi.apply(s, g);
    s = r.state;
    g = r.mark;
  }
  return {s, std::move(out)};
}

/// A point of E × Γ: system state plus environment configuration.
struct SystemEnvironment {
  State state;
  MarkedConfiguration config;
  friend bool operator==(const SystemEnvironment&, const SystemEnvironment&) = default;
};

namespace detail {

inline void require_cover(const MarkedConfiguration& gamma, Time t) {
  if (!gamma.covers(Time::zero(), t)) {
    throw Error(ErrorCode::WindowTooSmall, "configuration window (" + std::to_string(gamma.window_lo().seconds()) + ", " +
                                               std::to_string(gamma.window_hi().seconds()) + "] does not cover (0, " +
                                               std::to_string(t.seconds()) + "]");
  }
}

}  // namespace detail

/// ψ_t: couples the state with the marks arriving in (0, t], leaving every
/// time and every later mark untouched.
inline SystemEnvironment psi_apply(const Coupling& phi, Time t, State i, MarkedConfiguration gamma) {
  if (t < Time::zero()) throw Error(ErrorCode::NegativeTime, "psi requires t >= 0");
  detail::require_cover(gamma, t);
  auto& pts = ConfigurationAccess::points(gamma);
  const std::size_t begin = gamma.first_after(Time::zero());
  const std::size_t end = gamma.first_after(t);
  State s = i;
  for (std::size_t k = begin; k < end; ++k) {
    const auto r = phi.apply(s, pts[k].mark);
    s = r.state;
    pts[k].mark = r.mark;
  }
  return {s, std::move(gamma)};
}

inline SystemEnvironment psi_inverse(const Coupling& phi, Time t, State i, MarkedConfiguration gamma) {
  if (t < Time::zero()) throw Error(ErrorCode::NegativeTime, "psi requires t >= 0");
  detail::require_cover(gamma, t);
  auto& pts = ConfigurationAccess::points(gamma);
  const std::size_t begin = gamma.first_after(Time::zero());
  const std::size_t end = gamma.first_after(t);
  State s = i;
  for (std::size_t k = end; k-- > begin;) {
    const auto r = phi.inverse(s, pts[k].mark);
    s = r.state;
    pts[k].mark = r.mark;
  }
  return {s, std::move(gamma)};
}

/// θ_t: every time t_n ↦ t_n - t, window bounds shifted alike.
inline MarkedConfiguration theta_shift(Time t, const MarkedConfiguration& gamma) {
  MarkedConfiguration out = gamma;
  for (auto& p : out.points_) p.time = p.time - t;
  out.lo_ = out.lo_ - t;
  out.hi_ = out.hi_ - t;
  return out;
}

/// The global evolution group: θ_t ∘ ψ_t for t ≥ 0, ψ_{|t|}^{-1} ∘ θ_t for t < 0.
inline SystemEnvironment alpha(const Coupling& phi, Time t, State i, const MarkedConfiguration& gamma) {
  if (t >= Time::zero()) {
    auto r = psi_apply(phi, t, i, gamma);
    return {r.state, theta_shift(t, r.config)};
  }
  return psi_inverse(phi, -t, i, theta_shift(t, gamma));
}

struct InducedGenerator {
  StochasticMatrix jump_matrix;
  RateMatrix rates;
};

/// P_ij = Σ_g q_g δ_{φ^E(i,g), j} and R = λ(P - I).
inline InducedGenerator induced_generator(const Dilation& d) {
  const auto n = static_cast<Eigen::Index>(d.states());
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (const auto& w : d.law.support()) {
      p(i, d.coupling.apply(static_cast<State>(i), w.mark).state) += w.weight;
    }
  }
  auto stoch = StochasticMatrix::validate(p);
  Eigen::MatrixXd r = d.law.rate() * (p - Eigen::MatrixXd::Identity(n, n));
  // Rows of r sum to λ(Σ_j P_ij - 1), which rounding keeps within λ·1e-12.
  return {std::move(stoch), RateMatrix::validate(r, {1e-12 * std::max(1.0, d.law.rate()), 0.0})};
}

/// Outcome of checking that ψ_t acts as a permutation on one arrival sector.
struct SectorCheck {
  std::size_t points_total = 0;
  std::size_t points_inside = 0;
  std::uint64_t sector_size = 0;
  bool permutation = false;
  bool times_preserved = false;
};

/// Enumerates E × G^m for a configuration with m points, the first `inside`
/// of which fall in (0, t], and checks that ψ_t maps the sector onto itself
/// bijectively. Bijectivity on each finite sector is what makes ψ_t preserve
/// μ_E ⊗ μ_G^{⊗m} and the induced operator unitary.
inline SectorCheck check_sector_permutation(const Coupling& phi, std::size_t points_total, std::size_t inside) {
  if (!phi.is_dense()) throw Error(ErrorCode::TooLargeForDenseCoupling, "sector check needs a dense coupling");
  if (inside > points_total) throw Error(ErrorCode::OutOfRange, "inside > total");
  const std::uint64_t gsize = phi.space().size();
  const std::size_t n = phi.states();
  std::uint64_t sector = n;
  for (std::size_t k = 0; k < points_total; ++k) {
    if (sector > (1ull << 26) / gsize) throw Error(ErrorCode::TooLarge, "sector too large to enumerate");
    sector *= gsize;
  }

  const Time t = Time::from_ticks(Time::from_seconds(1.0).ticks());
  std::vector<Time> times(points_total);
  for (std::size_t k = 0; k < points_total; ++k) {
    // inside points at (k+1)/(inside+1) · t, the rest after t.
    times[k] = k < inside ? Time::from_ticks(t.ticks() / static_cast<Time::rep>(inside + 1) * static_cast<Time::rep>(k + 1))
                          : t + Time::from_seconds(static_cast<double>(k - inside + 1));
  }

  SectorCheck out{points_total, inside, sector, true, true};
  std::vector<bool> hit(sector, false);
  std::vector<MarkedPoint> pts(points_total);
  for (std::uint64_t code = 0; code < sector; ++code) {
    std::uint64_t rest = code;
    for (std::size_t k = points_total; k-- > 0;) {
      pts[k] = {phi.space().mark(rest % gsize), times[k]};
      rest /= gsize;
    }
    const auto i = static_cast<State>(rest);
    const auto r = psi_apply(phi, t, i, MarkedConfiguration(pts, Time::zero(), t + Time::from_seconds(static_cast<double>(points_total + 1))));
    std::uint64_t image = r.state;
    for (std::size_t k = 0; k < points_total; ++k) {
      const auto& p = r.config.points()[k];
      if (p.time != times[k]) out.times_preserved = false;
      image = image * gsize + phi.space().index(p.mark);
    }
    if (hit[image]) out.permutation = false;
    hit[image] = true;
  }
  return out;
}

}  // namespace dilatron
