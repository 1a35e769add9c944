#include "tfspec/poly.hpp"

#include <sstream>

namespace tfspec {

void Poly::trim() {
  while (!c_.empty() && c_.back().is_zero()) c_.pop_back();
}

Scalar Poly::eval(const Scalar& x) const {
  Scalar acc(0L);
  for (auto it = c_.rbegin(); it != c_.rend(); ++it) acc = acc * x + *it;
  return acc;
}

Poly Poly::operator-() const {
  std::vector<Scalar> r;
  r.reserve(c_.size());
  for (const auto& ci : c_) r.push_back(-ci);
  return Poly(std::move(r));
}

Poly Poly::operator+(const Poly& o) const {
  std::vector<Scalar> r(std::max(c_.size(), o.c_.size()), Scalar(0L));
  for (size_t i = 0; i < c_.size(); ++i) r[i] += c_[i];
  for (size_t i = 0; i < o.c_.size(); ++i) r[i] += o.c_[i];
  return Poly(std::move(r));
}

Poly Poly::operator-(const Poly& o) const { return *this + (-o); }

Poly Poly::operator*(const Poly& o) const {
  if (is_zero() || o.is_zero()) return Poly();
  std::vector<Scalar> r(c_.size() + o.c_.size() - 1, Scalar(0L));
  for (size_t i = 0; i < c_.size(); ++i)
    for (size_t j = 0; j < o.c_.size(); ++j) r[i + j] += c_[i] * o.c_[j];
  return Poly(std::move(r));
}

Poly Poly::scaled(const Scalar& s) const {
  std::vector<Scalar> r;
  r.reserve(c_.size());
  for (const auto& ci : c_) r.push_back(ci * s);
  return Poly(std::move(r));
}

Poly Poly::derivative() const {
  if (c_.size() <= 1) return Poly();
  std::vector<Scalar> r;
  r.reserve(c_.size() - 1);
  for (size_t i = 1; i < c_.size(); ++i) r.push_back(c_[i] * Scalar(static_cast<long>(i)));
  return Poly(std::move(r));
}

Poly Poly::antiderivative() const {
  std::vector<Scalar> r(c_.size() + 1, Scalar(0L));
  for (size_t i = 0; i < c_.size(); ++i)
    r[i + 1] = c_[i] / Scalar(static_cast<long>(i + 1));
  return Poly(std::move(r));
}

Poly Poly::compose(const Poly& inner) const {
  Poly acc;
  for (auto it = c_.rbegin(); it != c_.rend(); ++it) acc = acc * inner + Poly(*it);
  return acc;
}

bool Poly::same(const Poly& o) const {
  if (c_.size() != o.c_.size()) return false;
  for (size_t i = 0; i < c_.size(); ++i)
    if (!c_[i].same(o.c_[i])) return false;
  return true;
}

bool Poly::identical_exact(const Poly& o) const {
  if (c_.size() != o.c_.size()) return false;
  for (size_t i = 0; i < c_.size(); ++i) {
    if (!c_[i].exact() || !o.c_[i].exact() || !(c_[i].lo() == o.c_[i].lo())) return false;
  }
  return true;
}

bool Poly::all_exact() const {
  for (const auto& ci : c_)
    if (!ci.exact()) return false;
  return true;
}

std::string Poly::str() const {
  if (is_zero()) return "0";
  std::ostringstream os;
  for (size_t i = 0; i < c_.size(); ++i) {
    if (i) os << " + ";
    os << "(" << c_[i].str() << ")";
    if (i == 1) os << "*x";
    if (i > 1) os << "*x^" << i;
  }
  return os.str();
}

Scalar range_bound(const Poly& p, const Scalar& a, const Scalar& b, int depth) {
  Scalar hullx = a.hull(b);
  Scalar r = p.eval(hullx);
  if (depth <= 0) return r;
  Scalar m = Scalar(hullx.mid());
  Scalar left = range_bound(p, a, m, depth - 1);
  Scalar right = range_bound(p, m, b, depth - 1);
  Scalar sub = left.hull(right);
  // Intersect with the parent bound (both are valid enclosures).
  Rat lo = std::max(r.lo(), sub.lo());
  Rat hi = std::min(r.hi(), sub.hi());
  if (lo > hi) return sub;  // defensive; should not happen
  return Scalar(lo, hi);
}

namespace {

struct Seg {
  Scalar a, b;
  int depth;
};

}  // namespace

std::optional<int> certified_sign(const Poly& p, const Scalar& a, const Scalar& b,
                                  int max_depth) {
  if (p.is_zero()) return 0;
  std::vector<Seg> stack{{a, b, 0}};
  int seen = 0;  // ORed sign bits
  while (!stack.empty()) {
    Seg s = stack.back();
    stack.pop_back();
    Scalar r = p.eval(s.a.hull(s.b));
    if (r.lo() > 0) {
      seen |= 1;
      if (seen == 3) return std::nullopt;
      continue;
    }
    if (r.hi() < 0) {
      seen |= 2;
      if (seen == 3) return std::nullopt;
      continue;
    }
    if (s.depth >= max_depth) return std::nullopt;
    Scalar m(s.a.hull(s.b).mid());
    stack.push_back({s.a, m, s.depth + 1});
    stack.push_back({m, s.b, s.depth + 1});
  }
  if (seen == 1) return 1;
  if (seen == 2) return -1;
  return std::nullopt;
}

Scalar integral(const Poly& p, const Scalar& a, const Scalar& b) {
  Poly P = p.antiderivative();
  return P.eval(b) - P.eval(a);
}

namespace {

Scalar integral_abs_rec(const Poly& p, const Scalar& a, const Scalar& b, const Rat& eps,
                        int depth) {
  if (b.hi() <= a.lo()) return Scalar(0L);
  Scalar r = p.eval(a.hull(b));
  if (r.lo() >= 0) return integral(p, a, b);
  if (r.hi() <= 0) return -integral(p, a, b);
  // Affine with exact data: split at the exact root.
  if (p.degree() == 1 && p.all_exact() && a.exact() && b.exact()) {
    Scalar root = -p.coeff(0) / p.coeff(1);
    if (root.certainly_le(a)) return integral(p, a, b).abs();
    if (root.certainly_ge(b)) return integral(p, a, b).abs();
    return integral(p, a, root).abs() + integral(p, root, b).abs();
  }
  Rat w = b.hi() - a.lo();
  if (w <= eps || depth > 256) {
    // Sliver: |int p| <= int |p| <= w * sup|p|.
    Rat lo = integral(p, a, b).abs().lo();
    Rat hi = w * r.abs().hi();
    if (lo > hi) hi = lo;
    return Scalar(lo, hi);
  }
  Scalar m(a.hull(b).mid());
  return integral_abs_rec(p, a, m, eps, depth + 1) + integral_abs_rec(p, m, b, eps, depth + 1);
}

}  // namespace

Scalar integral_abs(const Poly& p, const Scalar& a, const Scalar& b, unsigned eps_bits) {
  if (p.is_zero()) return Scalar(0L);
  if (p.degree() == 0) return p.coeff(0).abs() * (b - a).max(Scalar(0L));
  Int two_pow;
  mpz_ui_pow_ui(two_pow.get_mpz_t(), 2, eps_bits);
  Rat eps(1);
  eps /= Rat(two_pow);
  return integral_abs_rec(p, a, b, eps, 0);
}

Scalar sup_abs(const Poly& p, const Scalar& a, const Scalar& b, unsigned eps_bits) {
  if (p.is_zero()) return Scalar(0L);
  if (p.degree() == 0) return p.coeff(0).abs();
  std::vector<Scalar> candidates{a, b};
  bool exact_path = false;
  if (p.degree() == 1) {
    exact_path = true;
  } else if (p.degree() == 2 && p.all_exact()) {
    Scalar crit = -p.coeff(1) / (Scalar(2L) * p.coeff(2));
    if (a.certainly_le(crit) && crit.certainly_le(b)) candidates.push_back(crit);
    exact_path = true;
  } else {
    // Monotone on [a,b]? Then endpoints suffice.
    auto dsign = certified_sign(p.derivative(), a, b, 12);
    if (dsign.has_value()) exact_path = true;
  }
  if (exact_path) {
    Scalar best(0L);
    for (const auto& c : candidates) best = best.max(p.eval(c).abs());
    return best;
  }
  // Branch and bound.
  Rat lower(0);
  auto note_sample = [&](const Scalar& x) {
    Rat v = p.eval(x).abs().lo();
    if (v > lower) lower = v;
  };
  note_sample(a);
  note_sample(b);
  Int two_pow;
  mpz_ui_pow_ui(two_pow.get_mpz_t(), 2, eps_bits);
  Rat eps(1);
  eps /= Rat(two_pow);
  std::vector<Seg> stack{{a, b, 0}};
  Rat residual_upper(0);  // max bound over retired segments
  long budget = 4000;
  while (!stack.empty()) {
    Seg s = stack.back();
    stack.pop_back();
    Scalar bound = p.eval(s.a.hull(s.b)).abs();
    if (bound.hi() <= lower) continue;  // cannot improve the sup
    Scalar m(s.a.hull(s.b).mid());
    note_sample(m);
    bool retire = bound.hi() - lower <= eps * std::max(Rat(1), lower) || s.depth > 40 ||
                  --budget <= 0;
    if (retire) {
      if (bound.hi() > residual_upper) residual_upper = bound.hi();
      continue;
    }
    stack.push_back({s.a, m, s.depth + 1});
    stack.push_back({m, s.b, s.depth + 1});
  }
  Rat upper = std::max(lower, residual_upper);
  return Scalar(lower, upper);
}

Scalar monotone_root(const Poly& p, const Scalar& y, const Scalar& a, const Scalar& b,
                     unsigned bits) {
  if (p.degree() == 1) {
    return (y - p.coeff(0)) / p.coeff(1);
  }
  auto dsign = certified_sign(p.derivative(), a, b, 24);
  if (!dsign.has_value() || *dsign == 0)
    fail(Errc::NotMonotone, "monotone_root requires a certified monotone polynomial");
  bool inc = *dsign > 0;
  Scalar fa = p.eval(a) - y, fb = p.eval(b) - y;
  if (fa.is_zero()) return a;
  if (fb.is_zero()) return b;
  Scalar lo = a, hi = b;
  // keep invariant: f(lo) <= 0 <= f(hi) for increasing (mirrored otherwise)
  auto below = [&](const Scalar& v) { return inc ? v.hi() <= 0 : v.lo() >= 0; };
  auto above = [&](const Scalar& v) { return inc ? v.lo() >= 0 : v.hi() <= 0; };
  if (!below(fa) || !above(fb)) {
    // y may lie at/beyond an endpoint enclosure; deteriorate gracefully
    if (fa.contains_zero() && fa.width() == 0) return a;
    if (fb.contains_zero() && fb.width() == 0) return b;
    if (!fa.contains_zero() && !below(fa)) fail(Errc::OutOfDomain, "root not bracketed");
    if (!fb.contains_zero() && !above(fb)) fail(Errc::OutOfDomain, "root not bracketed");
  }
  Int two_pow;
  mpz_ui_pow_ui(two_pow.get_mpz_t(), 2, bits);
  Rat eps(1);
  eps /= Rat(two_pow);
  for (int it = 0; it < 4 * static_cast<int>(bits) && (hi.hi() - lo.lo()) > eps; ++it) {
    Scalar m(lo.hull(hi).mid());
    Scalar fm = p.eval(m) - y;
    if (fm.is_zero()) return m;  // exact hit
    if (fm.contains_zero()) break;  // enclosure too wide to decide; stop refining
    if (below(fm))
      lo = m;
    else
      hi = m;
  }
  return Scalar(lo.lo(), hi.hi());
}

}  // namespace tfspec
