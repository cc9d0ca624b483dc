#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "dilatron/dilation.hpp"
#include "dilatron/error.hpp"
#include "dilatron/markov_core.hpp"
#include "dilatron/rng.hpp"
#include "dilatron/statistics.hpp"
#include "dilatron/time.hpp"

namespace dilatron {

/// Draws marks i.i.d. from q by inversion over its support.
class MarkSampler {
 public:
  explicit MarkSampler(const EnvironmentLaw& law) {
    double c = 0.0;
    for (const auto& w : law.support()) {
      c += w.weight;
      cumulative_.push_back(c);
      marks_.push_back(w.mark);
    }
  }

  Mark operator()(RandomStream& rng) const {
    const double u = rng.uniform() * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    return marks_[static_cast<std::size_t>(it - cumulative_.begin())];
  }

 private:
  std::vector<double> cumulative_;
  std::vector<Mark> marks_;
};

/// Successive (time, mark) arrivals in (0, ∞): exponential gaps, then a
/// mark, per arrival. Times are rounded to the tick grid and kept strictly
/// increasing by bumping an exact tie one tick forward.
class ArrivalSampler {
 public:
  ArrivalSampler(const EnvironmentLaw& law, const MarkSampler& marks, RandomStream& rng)
      : rate_(law.rate()), marks_(marks), rng_(rng) {}

  MarkedPoint next() {
    clock_ += rng_.exponential(rate_);
    Time t = Time::from_seconds(clock_);
    if (t <= last_) t = last_ + Time::from_ticks(1);
    last_ = t;
    return {marks_(rng_), t};
  }

 private:
  double rate_;
  const MarkSampler& marks_;
  RandomStream& rng_;
  double clock_ = 0.0;
  Time last_ = Time::zero();
};

inline MarkedConfiguration sample_configuration(const EnvironmentLaw& law, Time horizon, RandomStream& rng) {
  if (!(horizon > Time::zero())) throw Error(ErrorCode::NegativeTime, "horizon must be positive");
  const MarkSampler marks(law);
  ArrivalSampler arrivals(law, marks, rng);
  std::vector<MarkedPoint> pts;
  for (;;) {
    const auto p = arrivals.next();
    if (p.time > horizon) break;
    pts.push_back(p);
  }
  return MarkedConfiguration(std::move(pts), Time::zero(), horizon);
}

inline MarkedConfiguration sample_configuration(const EnvironmentLaw& law, Time horizon, std::uint64_t seed) {
  RandomStream rng(seed, 0);
  return sample_configuration(law, horizon, rng);
}

/// A system path on (0, T]: X_t = X*_{N(t)}.
struct Trajectory {
  struct Jump {
    Time time;
    Mark mark;
    State state;
    friend bool operator==(const Jump&, const Jump&) = default;
  };

  State initial = 0;
  std::vector<Jump> jumps;
  Time horizon = Time::zero();

  State state_at(Time t) const {
    auto it = std::upper_bound(jumps.begin(), jumps.end(), t, [](Time v, const Jump& j) { return v < j.time; });
    return it == jumps.begin() ? initial : std::prev(it)->state;
  }
  State final_state() const { return jumps.empty() ? initial : jumps.back().state; }

  /// N_g(t) for every mark that occurs.
  std::map<Mark, std::uint64_t> counts_at(Time t) const {
    std::map<Mark, std::uint64_t> out;
    for (const auto& j : jumps) {
      if (j.time > t) break;
      ++out[j.mark];
    }
    return out;
  }

  /// Arrival times per mark, i.e. the innovation process.
  std::map<Mark, std::vector<Time>> counting() const {
    std::map<Mark, std::vector<Time>> out;
    for (const auto& j : jumps) out[j.mark].push_back(j.time);
    return out;
  }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Threads the state through the marks of (0, T] via φ^E.
inline Trajectory thread_configuration(const Coupling& phi, State k, const MarkedConfiguration& gamma, Time horizon) {
  if (k >= phi.states()) throw Error(ErrorCode::OutOfRange, "initial state out of range");
  Trajectory traj{k, {}, horizon};
  State s = k;
  for (const auto& p : gamma.points()) {
    if (p.time <= Time::zero()) continue;
    if (p.time > horizon) break;
    s = phi.apply(s, p.mark).state;
    traj.jumps.push_back({p.time, p.mark, s});
  }
  return traj;
}

inline Trajectory simulate_path(const Dilation& d, State k, Time horizon, RandomStream& rng) {
  return thread_configuration(d.coupling, k, sample_configuration(d.law, horizon, rng), horizon);
}

inline Trajectory simulate_path(const Dilation& d, State k, Time horizon, std::uint64_t seed) {
  RandomStream rng(seed, 0);
  return simulate_path(d, k, horizon, rng);
}

/// Worker count: DILATRON_THREADS if set and positive, else hardware concurrency.
inline unsigned worker_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DILATRON_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return std::min<unsigned>(static_cast<unsigned>(v), std::max(hw, 1u) * 4);
  }
  return hw;
}

/// Runs body(path_index, accumulator) for every path, one accumulator per
/// worker, then merges. Each path owns stream (seed, path_index), so the
/// merged result depends only on the seed as long as merge is associative
/// and commutative on the accumulated quantities (integer counts are).
template <class Acc, class Body, class Merge>
Acc parallel_paths(std::uint64_t paths, Acc init, Body body, Merge merge) {
  const unsigned workers = static_cast<unsigned>(std::min<std::uint64_t>(worker_count(), std::max<std::uint64_t>(paths, 1)));
  std::vector<Acc> partial(workers, init);
  auto run = [&](unsigned w) {
    const std::uint64_t lo = paths * w / workers, hi = paths * (w + 1) / workers;
    for (std::uint64_t p = lo; p < hi; ++p) body(p, partial[w]);
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& th : pool) th.join();
  }
  Acc out = std::move(init);
  for (auto& a : partial) merge(out, a);
  return out;
}

/// States of one path at each of the (ascending) query times, consuming the
/// stream exactly like simulate_path does.
inline std::vector<State> sample_states_at(const Dilation& d, const MarkSampler& marks, State k, std::span<const Time> times,
                                           RandomStream& rng) {
  std::vector<State> out(times.size(), k);
  if (times.empty()) return out;
  ArrivalSampler arrivals(d.law, marks, rng);
  State s = k;
  std::size_t q = 0;
  while (q < times.size() && times[q] <= Time::zero()) out[q++] = s;
  while (q < times.size()) {
    const auto p = arrivals.next();
    while (q < times.size() && p.time > times[q]) out[q++] = s;
    if (q == times.size()) break;
    s = d.coupling.apply(s, p.mark).state;
  }
  return out;
}

struct EmpiricalDistribution {
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;

  double frequency(std::size_t j) const { return total ? static_cast<double>(counts[j]) / static_cast<double>(total) : 0.0; }
  /// Plug-in standard error of each frequency.
  std::vector<double> standard_errors() const {
    std::vector<double> se(counts.size());
    for (std::size_t j = 0; j < counts.size(); ++j) se[j] = stats::proportion_se(frequency(j), total);
    return se;
  }
};

/// Frequencies of {X_t = j} over independent paths started at k; path p
/// draws from stream (seed, p).
inline EmpiricalDistribution empirical_semigroup(const Dilation& d, State k, Time t, std::uint64_t paths, std::uint64_t seed) {
  if (paths == 0) throw Error(ErrorCode::OutOfRange, "paths must be >= 1");
  if (t < Time::zero()) throw Error(ErrorCode::NegativeTime, "t must be >= 0");
  if (k >= d.states()) throw Error(ErrorCode::OutOfRange, "initial state out of range");
  const std::size_t n = d.states();
  const MarkSampler marks(d.law);
  const Time times[1] = {t};
  auto counts = parallel_paths(
      paths, std::vector<std::uint64_t>(n, 0),
      [&](std::uint64_t p, std::vector<std::uint64_t>& acc) {
        RandomStream rng(seed, p);
        ++acc[sample_states_at(d, marks, k, times, rng)[0]];
      },
      [](std::vector<std::uint64_t>& into, const std::vector<std::uint64_t>& from) {
        for (std::size_t j = 0; j < into.size(); ++j) into[j] += from[j];
      });
  return {std::move(counts), paths};
}

/// Joint counts of (X_t1, X_t2) for t1 ≤ t2, row-major n × n.
inline std::vector<std::uint64_t> empirical_joint(const Dilation& d, State k, Time t1, Time t2, std::uint64_t paths, std::uint64_t seed) {
  if (t1 > t2) throw Error(ErrorCode::OutOfRange, "t1 must not exceed t2");
  const std::size_t n = d.states();
  const MarkSampler marks(d.law);
  const Time times[2] = {t1, t2};
  return parallel_paths(
      paths, std::vector<std::uint64_t>(n * n, 0),
      [&](std::uint64_t p, std::vector<std::uint64_t>& acc) {
        RandomStream rng(seed, p);
        const auto s = sample_states_at(d, marks, k, times, rng);
        ++acc[s[0] * n + s[1]];
      },
      [](std::vector<std::uint64_t>& into, const std::vector<std::uint64_t>& from) {
        for (std::size_t j = 0; j < into.size(); ++j) into[j] += from[j];
      });
}

namespace detail {

inline void require_well_formed(const Trajectory& traj, std::size_t n) {
  if (traj.initial >= n) throw Error(ErrorCode::MalformedTrajectory, "initial state out of range");
  Time prev = Time::zero();
  for (std::size_t k = 0; k < traj.jumps.size(); ++k) {
    const auto& j = traj.jumps[k];
    if (!(j.time > prev) || j.time > traj.horizon) throw Error(ErrorCode::MalformedTrajectory, "jump " + std::to_string(k) + " time out of order or horizon");
    if (j.state >= n) throw Error(ErrorCode::MalformedTrajectory, "jump " + std::to_string(k) + " state out of range");
    prev = j.time;
  }
}

}  // namespace detail

/// Pathwise check of df(X_t) = Σ_g (f∘φ^E(·, g) - f)(X_{t-}) dN_g(t): at each
/// jump the increment of f equals f(φ^E(X_{t-}, g)) - f(X_{t-}) exactly, and
/// f(X_t) is constant in between (jumps are the only state changes stored).
template <class T>
bool verify_flow_sde(const Trajectory& traj, const Coupling& phi, std::span<const T> f) {
  if (f.size() != phi.states()) throw Error(ErrorCode::DimensionMismatch, "function size differs from n");
  detail::require_well_formed(traj, phi.states());
  State prev = traj.initial;
  for (const auto& j : traj.jumps) {
    const T observed = f[j.state] - f[prev];
    const T predicted = f[phi.apply(prev, j.mark).state] - f[prev];
    if (observed != predicted) return false;
    prev = j.state;
  }
  return true;
}

template <class T>
bool verify_flow_sde(const Trajectory& traj, const Coupling& phi, const std::vector<T>& f) {
  return verify_flow_sde(traj, phi, std::span<const T>(f));
}

/// Replays the per-mark arrival times in time order through φ^E. The path
/// is a deterministic function of the initial state and the innovation.
inline Trajectory innovation_reconstruct(State k, const std::map<Mark, std::vector<Time>>& counting, const Coupling& phi, Time horizon) {
  std::vector<std::pair<Time, Mark>> events;
  for (const auto& [mark, times] : counting) {
    for (std::size_t q = 0; q < times.size(); ++q) {
      if (q > 0 && !(times[q - 1] < times[q])) throw Error(ErrorCode::OverlappingTimes, "arrival times of a mark not strictly increasing");
      events.emplace_back(times[q], mark);
    }
  }
  std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t q = 1; q < events.size(); ++q) {
    if (events[q - 1].first == events[q].first) throw Error(ErrorCode::OverlappingTimes, "two marks arrive at the same time");
  }
  if (k >= phi.states()) throw Error(ErrorCode::OutOfRange, "initial state out of range");
  Trajectory traj{k, {}, horizon};
  State s = k;
  for (const auto& [t, g] : events) {
    if (t <= Time::zero() || t > horizon) continue;
    s = phi.apply(s, g).state;
    traj.jumps.push_back({t, g, s});
  }
  return traj;
}

/// Monte Carlo comparison of the path law at time t against a reference row.
struct SemigroupReport {
  State k = 0;
  double t = 0.0;
  std::uint64_t paths = 0;
  std::vector<double> empirical;
  std::vector<double> exact;
  double max_abs_dev = 0.0;
  /// Largest |empirical - exact| / SE(exact) over states.
  double max_z = 0.0;
  double chi2 = 0.0;
  double p_value = 1.0;
  double se_factor = stats::kStandardErrors;
  double alpha = stats::kChiSquareAlpha;
  bool pass = true;
};

inline SemigroupReport compare_distribution(State k, double t, std::span<const std::uint64_t> counts, std::span<const double> exact,
                                            double se_factor = stats::kStandardErrors, double alpha = stats::kChiSquareAlpha) {
  SemigroupReport rep;
  rep.k = k;
  rep.t = t;
  rep.se_factor = se_factor;
  rep.alpha = alpha;
  for (auto c : counts) rep.paths += c;
  rep.exact.assign(exact.begin(), exact.end());
  bool within = true;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    const double f = rep.paths ? static_cast<double>(counts[j]) / static_cast<double>(rep.paths) : 0.0;
    rep.empirical.push_back(f);
    const double dev = std::abs(f - exact[j]);
    rep.max_abs_dev = std::max(rep.max_abs_dev, dev);
    const double se = stats::proportion_se(std::clamp(exact[j], 0.0, 1.0), rep.paths);
    if (se > 0.0) {
      rep.max_z = std::max(rep.max_z, dev / se);
      if (dev > se_factor * se) within = false;
    } else if (dev > 1e-12) {
      // A degenerate cell (probability 0 or 1) must be matched exactly.
      rep.max_z = std::numeric_limits<double>::infinity();
      within = false;
    }
  }
  const auto chi = stats::chi_square_gof(counts, exact);
  rep.chi2 = chi.statistic;
  rep.p_value = chi.p_value;
  rep.pass = within && (chi.dof == 0 ? chi.statistic == 0.0 : chi.p_value > alpha);
  return rep;
}

/// Empirical law of X_t from k against row k of e^{Rt}.
inline SemigroupReport semigroup_report(const Dilation& d, const RateMatrix& r, State k, double t, std::uint64_t paths, std::uint64_t seed,
                                        double se_factor = stats::kStandardErrors, double alpha = stats::kChiSquareAlpha) {
  const auto emp = empirical_semigroup(d, k, Time::from_seconds(t), paths, seed);
  const auto e = expm_rate(r, t);
  std::vector<double> row(r.size());
  for (std::size_t j = 0; j < r.size(); ++j) row[j] = e(k, j);
  return compare_distribution(k, t, emp.counts, row, se_factor, alpha);
}

}  // namespace dilatron
