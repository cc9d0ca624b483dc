#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "dilatron/error.hpp"

namespace dilatron::stats {

/// Default thresholds for statistical verdicts.
inline constexpr double kStandardErrors = 3.0;
inline constexpr double kChiSquareAlpha = 0.001;

struct ChiSquare {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
};

/// Upper tail of the chi-square distribution.
inline double chi_square_sf(double x, std::size_t dof) {
  if (dof == 0) return x > 0.0 ? 0.0 : 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(static_cast<double>(dof) / 2.0, x / 2.0);
}

/// Pearson goodness of fit of observed counts against cell probabilities.
/// Cells with zero probability contribute no degree of freedom; any count
/// in such a cell makes the fit impossible (p = 0).
inline ChiSquare chi_square_gof(std::span<const std::uint64_t> counts, std::span<const double> probs) {
  if (counts.size() != probs.size()) throw Error(ErrorCode::DimensionMismatch, "counts vs probabilities");
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  ChiSquare out;
  if (total == 0) return out;
  std::size_t cells = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const double expected = probs[k] * static_cast<double>(total);
    if (probs[k] <= 0.0) {
      if (counts[k] > 0) return {std::numeric_limits<double>::infinity(), 0, 0.0};
      continue;
    }
    ++cells;
    const double d = static_cast<double>(counts[k]) - expected;
    out.statistic += d * d / expected;
  }
  out.dof = cells > 0 ? cells - 1 : 0;
  out.p_value = chi_square_sf(out.statistic, out.dof);
  return out;
}

/// Two-sample chi-square test of homogeneity (2 × k contingency table).
inline ChiSquare chi_square_homogeneity(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "sample category counts differ");
  double na = 0.0, nb = 0.0;
  for (auto c : a) na += static_cast<double>(c);
  for (auto c : b) nb += static_cast<double>(c);
  ChiSquare out;
  if (na == 0.0 || nb == 0.0) return out;
  const double total = na + nb;
  std::size_t cells = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double col = static_cast<double>(a[k] + b[k]);
    if (col == 0.0) continue;
    ++cells;
    const double ea = na * col / total, eb = nb * col / total;
    out.statistic += (static_cast<double>(a[k]) - ea) * (static_cast<double>(a[k]) - ea) / ea;
    out.statistic += (static_cast<double>(b[k]) - eb) * (static_cast<double>(b[k]) - eb) / eb;
  }
  out.dof = cells > 0 ? cells - 1 : 0;
  out.p_value = chi_square_sf(out.statistic, out.dof);
  return out;
}

/// Standard error of a sample proportion with true probability p.
inline double proportion_se(double p, std::uint64_t n) {
  return n == 0 ? 0.0 : std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

/// Running mean and variance (Welford).
class RunningMoments {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  void merge(const RunningMoments& o) {
    if (o.n_ == 0) return;
    const double n = static_cast<double>(n_ + o.n_);
    const double d = o.mean_ - mean_;
    m2_ += o.m2_ + d * d * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
    mean_ += d * static_cast<double>(o.n_) / n;
    n_ += o.n_;
  }
  std::uint64_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double standard_error() const { return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace dilatron::stats
