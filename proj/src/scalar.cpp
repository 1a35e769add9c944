#include "tfspec/scalar.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace tfspec {

void fail(Errc code, const std::string& what) {
  throw Error(code, std::string(errc_name(code)) + ": " + what);
}

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::InvalidInput: return "InvalidInput";
    case Errc::OutOfDomain: return "OutOfDomain";
    case Errc::NoAdjacentBranch: return "NoAdjacentBranch";
    case Errc::NotMonotone: return "NotMonotone";
    case Errc::NotMaximal: return "NotMaximal";
    case Errc::NotExpanding: return "NotExpanding";
    case Errc::NotOnto: return "NotOnto";
    case Errc::DepthTooLarge: return "DepthTooLarge";
    case Errc::DegreeTooLarge: return "DegreeTooLarge";
    case Errc::UndecidableAtDepth: return "UndecidableAtDepth";
    case Errc::AmbiguousOrder: return "AmbiguousOrder";
    case Errc::DivisionByZero: return "DivisionByZero";
    case Errc::UntaggedJump: return "UntaggedJump";
    case Errc::ZeroWeightOnOrbit: return "ZeroWeightOnOrbit";
    case Errc::WeightVanishes: return "WeightVanishes";
    case Errc::LambdaTooLarge: return "LambdaTooLarge";
    case Errc::LambdaTildeTooSmall: return "LambdaTildeTooSmall";
    case Errc::NormalizationZero: return "NormalizationZero";
    case Errc::PrecisionInsufficient: return "PrecisionInsufficient";
    case Errc::BudgetExceeded: return "BudgetExceeded";
    case Errc::TruncationTooShallow: return "TruncationTooShallow";
    case Errc::PointOnBoundary: return "PointOnBoundary";
    case Errc::RootIsolationFailure: return "RootIsolationFailure";
    case Errc::PreconditionK0: return "PreconditionK0";
    case Errc::ApproximationError: return "ApproximationError";
    case Errc::DegenerateBin: return "DegenerateBin";
    case Errc::SolverFailure: return "SolverFailure";
  }
  return "UnknownError";
}

Scalar::Scalar(Rat lo, Rat hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
  if (lo_ > hi_) fail(Errc::InvalidInput, "interval endpoints out of order");
}

Scalar Scalar::rational(long num, long den) {
  if (den == 0) fail(Errc::DivisionByZero, "rational with zero denominator");
  Rat q(num, den);
  q.canonicalize();
  return Scalar(q);
}

namespace {

Rat parse_rat(const std::string& s) {
  std::string t = s;
  // strip spaces
  t.erase(std::remove(t.begin(), t.end(), ' '), t.end());
  if (t.empty()) fail(Errc::InvalidInput, "empty numeric string");
  auto slash = t.find('/');
  if (slash != std::string::npos) {
    Rat q;
    if (q.set_str(t, 10) != 0) fail(Errc::InvalidInput, "bad rational: " + s);
    if (q.get_den() == 0) fail(Errc::DivisionByZero, "zero denominator: " + s);
    q.canonicalize();
    return q;
  }
  auto dot = t.find('.');
  auto epos = t.find_first_of("eE");
  long expo = 0;
  if (epos != std::string::npos) {
    expo = std::stol(t.substr(epos + 1));
    t = t.substr(0, epos);
    dot = t.find('.');
  }
  std::string digits = t;
  long frac = 0;
  if (dot != std::string::npos) {
    frac = static_cast<long>(t.size() - dot - 1);
    digits = t.substr(0, dot) + t.substr(dot + 1);
  }
  if (digits.empty() || digits == "-" || digits == "+")
    fail(Errc::InvalidInput, "bad number: " + s);
  Int num;
  if (num.set_str(digits, 10) != 0) fail(Errc::InvalidInput, "bad number: " + s);
  Rat q(num);
  long net = expo - frac;
  Int pow10;
  mpz_ui_pow_ui(pow10.get_mpz_t(), 10, static_cast<unsigned long>(net >= 0 ? net : -net));
  if (net >= 0)
    q *= Rat(pow10);
  else
    q /= Rat(pow10);
  q.canonicalize();
  return q;
}

}  // namespace

Scalar Scalar::parse_exact(const std::string& s) { return Scalar(parse_rat(s)); }

Scalar Scalar::from_decimal(const std::string& dec, unsigned bits) {
  Rat v = parse_rat(dec);
  Int two_pow;
  mpz_ui_pow_ui(two_pow.get_mpz_t(), 2, bits);
  Rat rad(1);
  rad /= Rat(two_pow);
  return Scalar(v - rad, v + rad);
}

const Rat& Scalar::rat() const {
  if (!exact()) fail(Errc::PrecisionInsufficient, "exact value required, have enclosure " + str());
  return lo_;
}

Scalar& Scalar::operator+=(const Scalar& o) {
  lo_ += o.lo_;
  hi_ += o.hi_;
  return *this;
}

Scalar& Scalar::operator-=(const Scalar& o) {
  Rat nlo = lo_ - o.hi_;
  Rat nhi = hi_ - o.lo_;
  lo_ = std::move(nlo);
  hi_ = std::move(nhi);
  return *this;
}

Scalar& Scalar::operator*=(const Scalar& o) {
  if (exact() && o.exact()) {
    lo_ *= o.lo_;
    hi_ = lo_;
    return *this;
  }
  std::array<Rat, 4> p = {lo_ * o.lo_, lo_ * o.hi_, hi_ * o.lo_, hi_ * o.hi_};
  lo_ = *std::min_element(p.begin(), p.end());
  hi_ = *std::max_element(p.begin(), p.end());
  return *this;
}

Scalar& Scalar::operator/=(const Scalar& o) {
  if (o.contains_zero()) fail(Errc::DivisionByZero, "division by interval containing zero");
  if (exact() && o.exact()) {
    lo_ /= o.lo_;
    hi_ = lo_;
    return *this;
  }
  std::array<Rat, 4> p = {lo_ / o.lo_, lo_ / o.hi_, hi_ / o.lo_, hi_ / o.hi_};
  lo_ = *std::min_element(p.begin(), p.end());
  hi_ = *std::max_element(p.begin(), p.end());
  return *this;
}

Scalar Scalar::abs() const {
  if (lo_ >= 0) return *this;
  if (hi_ <= 0) return -*this;
  Rat m = std::max(Rat(-lo_), hi_);
  return Scalar(Rat(0), m);
}

Scalar Scalar::pow(unsigned n) const {
  Scalar r(1L);
  for (unsigned i = 0; i < n; ++i) r *= *this;
  return r;
}

Trool Scalar::cmp_lt(const Scalar& o) const {
  if (hi_ < o.lo_) return Trool::True;
  if (lo_ >= o.hi_) return Trool::False;
  return Trool::Unknown;
}

Trool Scalar::cmp_le(const Scalar& o) const {
  if (hi_ <= o.lo_) return Trool::True;
  if (lo_ > o.hi_) return Trool::False;
  return Trool::Unknown;
}

Trool Scalar::cmp_eq(const Scalar& o) const {
  if (exact() && o.exact()) return lo_ == o.lo_ ? Trool::True : Trool::False;
  if (!overlaps(o)) return Trool::False;
  return Trool::Unknown;
}

bool Scalar::decided_lt(const Scalar& o) const {
  switch (cmp_lt(o)) {
    case Trool::True: return true;
    case Trool::False: return false;
    case Trool::Unknown:
      if (same(o)) return false;
      fail(Errc::AmbiguousOrder, "cannot order " + str() + " against " + o.str());
  }
  return false;
}

int Scalar::sign() const {
  if (lo_ > 0) return 1;
  if (hi_ < 0) return -1;
  if (is_zero()) return 0;
  fail(Errc::AmbiguousOrder, "sign of interval straddling zero: " + str());
}

Scalar Scalar::min(const Scalar& o) const {
  return Scalar(std::min(lo_, o.lo_), std::min(hi_, o.hi_));
}

Scalar Scalar::max(const Scalar& o) const {
  return Scalar(std::max(lo_, o.lo_), std::max(hi_, o.hi_));
}

Scalar Scalar::hull(const Scalar& o) const {
  return Scalar(std::min(lo_, o.lo_), std::max(hi_, o.hi_));
}

double Scalar::to_double() const { return mid().get_d(); }

std::string rat_str(const Rat& v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string rat_decimal(const Rat& v, int digits) {
  Int scale;
  mpz_ui_pow_ui(scale.get_mpz_t(), 10, static_cast<unsigned long>(digits));
  Rat scaled = v * Rat(scale);
  // round half away from zero, deterministically
  Int num = scaled.get_num(), den = scaled.get_den();
  Int q, r;
  mpz_tdiv_qr(q.get_mpz_t(), r.get_mpz_t(), num.get_mpz_t(), den.get_mpz_t());
  Int r2 = ::abs(r) * 2;
  if (r2 >= den) q += (sgn(num) >= 0 ? 1 : -1);
  bool neg = q < 0;
  Int aq = ::abs(q);
  std::string s = aq.get_str();
  if (static_cast<int>(s.size()) <= digits) s.insert(0, digits + 1 - s.size(), '0');
  s.insert(s.size() - digits, ".");
  if (digits == 0) s.pop_back();
  return (neg ? "-" : "") + s;
}

std::string Scalar::decimal(int digits) const { return rat_decimal(mid(), digits); }

std::string Scalar::str() const {
  if (exact()) return rat_str(lo_) + " (exact)";
  double w = Rat(hi_ - lo_).get_d();
  char buf[64];
  std::snprintf(buf, sizeof(buf), " (width %.3g)", w);
  return decimal(15) + buf;
}

namespace {

// Largest integer r with r^n <= x (x >= 0); `exact` reports r^n == x.
Int int_nth_root(const Int& x, unsigned n, bool& exact) {
  Int r;
  int ex = mpz_root(r.get_mpz_t(), x.get_mpz_t(), n);
  exact = ex != 0;
  return r;
}

// Enclosure of q^(1/n) for an exact non-negative rational q.
Scalar rat_nth_root(const Rat& q, unsigned n, unsigned bits) {
  if (q < 0) fail(Errc::InvalidInput, "nth_root of negative value");
  if (q == 0) return Scalar(Rat(0));
  bool en = false, ed = false;
  Int rn = int_nth_root(q.get_num(), n, en);
  Int rd = int_nth_root(q.get_den(), n, ed);
  if (en && ed) {
    Rat r(rn, rd);
    r.canonicalize();
    return Scalar(r);
  }
  // Binary search on rationals: maintain lo^n <= q <= hi^n.
  Rat lo(rn, rd + 1), hi(rn + 1, rd);
  lo.canonicalize();
  hi.canonicalize();
  if (lo < 0) lo = 0;
  auto pow_rat = [n](const Rat& v) {
    Rat r(1);
    for (unsigned i = 0; i < n; ++i) r *= v;
    return r;
  };
  while (pow_rat(lo) > q) lo /= 2;  // safety; should not trigger
  while (pow_rat(hi) < q) hi *= 2;
  Int two_pow;
  mpz_ui_pow_ui(two_pow.get_mpz_t(), 2, bits);
  Rat target(1);
  target /= Rat(two_pow);
  // Width halves per step; the relative scale of q^(1/n) keeps steps bounded.
  for (int it = 0; it < 4 * static_cast<int>(bits) + 64 && hi - lo > target; ++it) {
    Rat mid = (lo + hi) / 2;
    Rat p = pow_rat(mid);
    if (p == q) return Scalar(mid);
    if (p < q)
      lo = mid;
    else
      hi = mid;
  }
  return Scalar(lo, hi);
}

}  // namespace

Scalar nth_root(const Scalar& q, unsigned n, unsigned bits) {
  if (n == 0) fail(Errc::InvalidInput, "0th root");
  if (n == 1) return q;
  if (q.lo() < 0) fail(Errc::InvalidInput, "nth_root of possibly-negative enclosure");
  Scalar lo_root = rat_nth_root(q.lo(), n, bits);
  if (q.exact()) return lo_root;
  Scalar hi_root = rat_nth_root(q.hi(), n, bits);
  return Scalar(lo_root.lo(), hi_root.hi());
}

}  // namespace tfspec
