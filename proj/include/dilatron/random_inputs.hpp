#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "dilatron/dilation.hpp"
#include "dilatron/markov_core.hpp"
#include "dilatron/rng.hpp"
#include "dilatron/time.hpp"

// Random instances for property checks.

namespace dilatron::random {

/// Off-diagonal rates uniform on [0, max_rate); each is zeroed with
/// probability `zero_prob` so that sparse generators are exercised too.
inline RateMatrix rate_matrix(std::size_t n, RandomStream& rng, double max_rate = 1.0, double zero_prob = 0.0) {
  const auto ni = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(ni, ni);
  for (Eigen::Index i = 0; i < ni; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < ni; ++j) {
      if (i == j) continue;
      const double v = rng.uniform() < zero_prob ? 0.0 : rng.uniform() * max_rate;
      r(i, j) = v;
      s += v;
    }
    r(i, i) = -s;
  }
  return RateMatrix::validate(r);
}

/// Rows drawn by normalizing uniform weights; each entry is zeroed with
/// probability `zero_prob` (at least one entry per row survives).
inline StochasticMatrix stochastic_matrix(std::size_t n, RandomStream& rng, double zero_prob = 0.0) {
  const auto ni = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(ni, ni);
  for (Eigen::Index i = 0; i < ni; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < ni; ++j) {
      const double v = rng.uniform() < zero_prob ? 0.0 : rng.uniform_open0();
      p(i, j) = v;
      s += v;
    }
    if (s == 0.0) {
      p(i, static_cast<Eigen::Index>(rng.next_u32() % n)) = 1.0;
      s = 1.0;
    }
    p.row(i) /= s;
    // Put the rounding residue on the largest entry so the row sums to 1
    // within an ulp or two.
    Eigen::Index jmax = 0;
    p.row(i).maxCoeff(&jmax);
    p(i, jmax) += 1.0 - p.row(i).sum();
  }
  return StochasticMatrix::validate(p);
}

/// A configuration on the window (lo, hi] with `count` points at random
/// tick-grid times and marks uniform over G.
inline MarkedConfiguration configuration(const MarkSpace& space, RandomStream& rng, Time lo, Time hi, std::size_t count) {
  std::vector<Time> times;
  const auto span = static_cast<std::uint64_t>(hi.ticks() - lo.ticks());
  while (times.size() < count) {
    const Time t = Time::from_ticks(lo.ticks() + 1 + static_cast<Time::rep>(rng.next_u64() % span));
    if (std::find(times.begin(), times.end(), t) == times.end()) times.push_back(t);
  }
  std::sort(times.begin(), times.end());
  std::vector<MarkedPoint> pts;
  for (Time t : times) pts.push_back({space.mark(rng.next_u64() % space.size()), t});
  return MarkedConfiguration(std::move(pts), lo, hi);
}

/// Uniform time on the tick grid in [lo, hi].
inline Time time_between(RandomStream& rng, Time lo, Time hi) {
  const auto span = static_cast<std::uint64_t>(hi.ticks() - lo.ticks()) + 1;
  return Time::from_ticks(lo.ticks() + static_cast<Time::rep>(rng.next_u64() % span));
}

}  // namespace dilatron::random
