#pragma once
// Dense polynomials over Scalar with certified range/sign/integral helpers.
//
// Every helper returns enclosures: results are exact whenever the inputs and
// the relevant critical points are rational, and tight intervals otherwise.

#include <vector>

#include "tfspec/scalar.hpp"

namespace tfspec {

class Poly {
 public:
  Poly() = default;
  explicit Poly(Scalar c0) { c_.push_back(std::move(c0)); trim(); }
  explicit Poly(std::vector<Scalar> coeffs) : c_(std::move(coeffs)) { trim(); }
  static Poly zero() { return Poly(); }
  static Poly constant(const Scalar& v) { return Poly(v); }
  static Poly affine(const Scalar& c0, const Scalar& c1) { return Poly({c0, c1}); }
  static Poly x() { return Poly({Scalar(0L), Scalar(1L)}); }

  bool is_zero() const { return c_.empty(); }
  // degree of the zero polynomial reported as -1
  int degree() const { return static_cast<int>(c_.size()) - 1; }
  const std::vector<Scalar>& coeffs() const { return c_; }
  Scalar coeff(size_t i) const { return i < c_.size() ? c_[i] : Scalar(0L); }

  Scalar eval(const Scalar& x) const;  // interval Horner

  Poly operator-() const;
  Poly operator+(const Poly& o) const;
  Poly operator-(const Poly& o) const;
  Poly operator*(const Poly& o) const;
  Poly scaled(const Scalar& s) const;
  Poly derivative() const;
  Poly antiderivative() const;  // constant term 0
  Poly compose(const Poly& inner) const;

  // Structural equality: identical coefficient intervals.
  bool same(const Poly& o) const;
  // All coefficients exact and equal.
  bool identical_exact(const Poly& o) const;
  bool all_exact() const;

  std::string str() const;

 private:
  void trim();
  std::vector<Scalar> c_;  // c_[i] * x^i
};

// Enclosure of { p(x) : x in [a,b] } by interval evaluation with limited
// subdivision (tightness improves with `depth`).
Scalar range_bound(const Poly& p, const Scalar& a, const Scalar& b, int depth = 0);

// Certified sign of p on [a,b]: +1 / -1 if p is provably positive/negative
// everywhere, 0 if p is the zero polynomial; nullopt when not certifiable
// within the subdivision budget (e.g. p changes sign or touches zero).
std::optional<int> certified_sign(const Poly& p, const Scalar& a, const Scalar& b,
                                  int max_depth = 40);

// Exact integral of p over [a,b] (antiderivative difference).
Scalar integral(const Poly& p, const Scalar& a, const Scalar& b);

// Enclosure of the integral of |p| over [a,b].  Exact when every sign change
// of p inside [a,b] happens at a rational point found by the splitter (always
// true for degree <= 1 with exact coefficients); otherwise the enclosure
// width is controlled by the subdivision cutoff 2^-eps_bits.
Scalar integral_abs(const Poly& p, const Scalar& a, const Scalar& b, unsigned eps_bits = 80);

// Enclosure of sup_{[a,b]} |p|.  Exact for degree <= 2 with exact data and for
// certified-monotone p; branch-and-bound enclosure otherwise.
Scalar sup_abs(const Poly& p, const Scalar& a, const Scalar& b, unsigned eps_bits = 64);

// Unique root of p(x) = y on [a,b] for p certified strictly monotone there.
// Exact if a bisection midpoint or an affine solve hits it; enclosure of
// width <= 2^-bits otherwise.
Scalar monotone_root(const Poly& p, const Scalar& y, const Scalar& a, const Scalar& b,
                     unsigned bits = 128);

}  // namespace tfspec
