#pragma once
// Exact-first numeric substrate: rational endpoints with interval semantics.
//
// A Scalar is a closed interval [lo, hi] with rational (GMP) endpoints.  Exact
// values are width-zero intervals; arithmetic on exact inputs stays exact
// because rational arithmetic never rounds.  Irrational inputs (decimal
// strings with a precision request) enter as small enclosures and every
// operation propagates the enclosure outward, so each result is a certified
// set containing the true value.

#include <gmpxx.h>

#include <optional>
#include <stdexcept>
#include <string>

namespace tfspec {

using Int = mpz_class;
using Rat = mpq_class;

// Typed failure conditions; `code` matches the names used in messages/tests.
enum class Errc {
  InvalidInput,
  OutOfDomain,
  NoAdjacentBranch,
  NotMonotone,
  NotMaximal,
  NotExpanding,
  NotOnto,
  DepthTooLarge,
  DegreeTooLarge,
  UndecidableAtDepth,
  AmbiguousOrder,
  DivisionByZero,
  UntaggedJump,
  ZeroWeightOnOrbit,
  WeightVanishes,
  LambdaTooLarge,
  LambdaTildeTooSmall,
  NormalizationZero,
  PrecisionInsufficient,
  BudgetExceeded,
  TruncationTooShallow,
  PointOnBoundary,
  RootIsolationFailure,
  PreconditionK0,
  ApproximationError,
  DegenerateBin,
  SolverFailure,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& what);

const char* errc_name(Errc code);

// Three-valued answer for interval comparisons.
enum class Trool { False, True, Unknown };

class Scalar {
 public:
  Scalar() : lo_(0), hi_(0) {}
  Scalar(long v) : lo_(v), hi_(v) {}
  Scalar(const Rat& v) : lo_(v), hi_(v) {}
  Scalar(Rat lo, Rat hi);

  static Scalar rational(long num, long den);
  // Parses "p/q", integer, or decimal strings; always exact.
  static Scalar parse_exact(const std::string& s);
  // Decimal value with a requested enclosure radius of 2^-bits.
  static Scalar from_decimal(const std::string& dec, unsigned bits);

  bool exact() const { return lo_ == hi_; }
  const Rat& lo() const { return lo_; }
  const Rat& hi() const { return hi_; }
  Rat mid() const { return (lo_ + hi_) / 2; }
  Rat width() const { return hi_ - lo_; }
  const Rat& rat() const;  // exact value; throws if not exact

  Scalar operator-() const { return Scalar(-hi_, -lo_); }
  Scalar& operator+=(const Scalar& o);
  Scalar& operator-=(const Scalar& o);
  Scalar& operator*=(const Scalar& o);
  Scalar& operator/=(const Scalar& o);
  friend Scalar operator+(Scalar a, const Scalar& b) { return a += b; }
  friend Scalar operator-(Scalar a, const Scalar& b) { return a -= b; }
  friend Scalar operator*(Scalar a, const Scalar& b) { return a *= b; }
  friend Scalar operator/(Scalar a, const Scalar& b) { return a /= b; }

  Scalar abs() const;
  Scalar pow(unsigned n) const;  // repeated multiplication
  Scalar recip() const { return Scalar(Rat(1)) / *this; }

  // Set predicates.
  bool contains(const Rat& v) const { return lo_ <= v && v <= hi_; }
  bool contains_zero() const { return contains(Rat(0)); }
  bool overlaps(const Scalar& o) const { return !(hi_ < o.lo_ || o.hi_ < lo_); }
  bool is_zero() const { return exact() && lo_ == 0; }

  // Interval comparisons.
  Trool cmp_lt(const Scalar& o) const;
  Trool cmp_le(const Scalar& o) const;
  Trool cmp_eq(const Scalar& o) const;
  bool certainly_lt(const Scalar& o) const { return cmp_lt(o) == Trool::True; }
  bool certainly_le(const Scalar& o) const { return cmp_le(o) == Trool::True; }
  bool certainly_gt(const Scalar& o) const { return o.certainly_lt(*this); }
  bool certainly_ge(const Scalar& o) const { return o.certainly_le(*this); }
  bool certainly_ne(const Scalar& o) const { return !overlaps(o); }
  // Exact structural equality of representations.
  bool same(const Scalar& o) const { return lo_ == o.lo_ && hi_ == o.hi_; }

  // Decided order for sorting; throws AmbiguousOrder when undecidable.
  bool decided_lt(const Scalar& o) const;

  // Sign of every point in the interval: -1/0/+1; throws when mixed.
  int sign() const;

  Scalar min(const Scalar& o) const;
  Scalar max(const Scalar& o) const;
  Scalar hull(const Scalar& o) const;  // smallest interval containing both

  double to_double() const;
  // "p/q (exact)" or midpoint decimal with width annotation.
  std::string str() const;
  // Fixed-point decimal of the midpoint with `digits` fractional digits
  // (deterministic; used by CSV/SVG emitters).
  std::string decimal(int digits) const;

 private:
  Rat lo_, hi_;
};

// Enclosure of q^(1/n); exact when numerator and denominator are perfect
// n-th powers.  Requires q >= 0.  `bits` controls the enclosure width target.
Scalar nth_root(const Scalar& q, unsigned n, unsigned bits = 96);

// Deterministic fixed-point rendering of a rational.
std::string rat_decimal(const Rat& v, int digits);
std::string rat_str(const Rat& v);

}  // namespace tfspec
