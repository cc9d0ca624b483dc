#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>

#include "dilatron/error.hpp"

namespace dilatron {

/// A point on the real time axis, stored as a signed count of ticks of
/// 2^-32 time units, with dedicated encodings for -inf and +inf.
///
/// Shifts of marked configurations must compose exactly (shifting by t and
/// then by -t is the identity), which rounding in double arithmetic cannot
/// guarantee. Integer ticks make every group law in the dilation exact.
class Time {
 public:
  using rep = std::int64_t;
  static constexpr int kFractionBits = 32;
  static constexpr double kTicksPerUnit = 4294967296.0;  // 2^32

  constexpr Time() = default;

  static constexpr Time from_ticks(rep ticks) { return Time(ticks); }

  /// Rounds to the nearest tick. Values beyond the representable range throw.
  static Time from_seconds(double t) {
    if (std::isinf(t)) return t > 0 ? infinity() : neg_infinity();
    const double ticks = std::nearbyint(t * kTicksPerUnit);
    if (!(std::abs(ticks) < 9.0e18)) throw Error(ErrorCode::OutOfRange, "time out of representable range");
    return Time(static_cast<rep>(ticks));
  }

  static constexpr Time zero() { return Time(0); }
  static constexpr Time infinity() { return Time(kPosInf); }
  static constexpr Time neg_infinity() { return Time(kNegInf); }

  constexpr rep ticks() const { return ticks_; }
  constexpr bool is_finite() const { return ticks_ != kPosInf && ticks_ != kNegInf; }

  double seconds() const {
    if (ticks_ == kPosInf) return std::numeric_limits<double>::infinity();
    if (ticks_ == kNegInf) return -std::numeric_limits<double>::infinity();
    return static_cast<double>(ticks_) / kTicksPerUnit;
  }

  constexpr Time operator-() const {
    if (ticks_ == kPosInf) return neg_infinity();
    if (ticks_ == kNegInf) return infinity();
    return Time(-ticks_);
  }

  /// Infinite bounds absorb finite shifts. inf + (-inf) is not meaningful
  /// and never arises: shift amounts are always finite.
  friend constexpr Time operator+(Time a, Time b) {
    if (!a.is_finite()) return a;
    if (!b.is_finite()) return b;
    return Time(a.ticks_ + b.ticks_);
  }
  friend constexpr Time operator-(Time a, Time b) { return a + (-b); }

  friend constexpr auto operator<=>(Time, Time) = default;
  friend constexpr bool operator==(Time, Time) = default;

 private:
  static constexpr rep kPosInf = std::numeric_limits<rep>::max();
  static constexpr rep kNegInf = std::numeric_limits<rep>::min() + 1;

  constexpr explicit Time(rep ticks) : ticks_(ticks) {}

  rep ticks_ = 0;
};

inline Time operator""_t(long double t) { return Time::from_seconds(static_cast<double>(t)); }
inline Time operator""_t(unsigned long long t) { return Time::from_seconds(static_cast<double>(t)); }

}  // namespace dilatron
