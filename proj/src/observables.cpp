#include "tfspec/observables.hpp"

#include <algorithm>
#include <utility>

#include "tfspec/orbits.hpp"

namespace tfspec {

namespace {

const Scalar& zero_scalar() {
  static const Scalar z(0L);
  return z;
}
const Scalar& one_scalar() {
  static const Scalar o(1L);
  return o;
}

bool tag_empty(const PointTag& t) { return std::holds_alternative<std::monostate>(t); }

// -1: x left of the breakpoint, 0: equal, +1: right.  Never guesses.
int classify_against(const Scalar& x, const Scalar& bp, const char* what) {
  if (x.cmp_eq(bp) == Trool::True) return 0;
  Trool lt = x.cmp_lt(bp);
  if (lt == Trool::True) return -1;
  if (bp.cmp_lt(x) == Trool::True) return +1;
  fail(Errc::PrecisionInsufficient, std::string("cannot order a point against a breakpoint in ") + what);
}

}  // namespace

PiecewiseSmooth::PiecewiseSmooth(std::vector<BreakPt> breaks, std::vector<Poly> pieces)
    : breaks_(std::move(breaks)), pieces_(std::move(pieces)) {
  if (pieces_.size() != breaks_.size() + 1)
    fail(Errc::InvalidInput, "piece count must be breakpoint count + 1");
  Scalar prev = zero_scalar();
  for (const auto& b : breaks_) {
    if (!decide(prev.cmp_lt(b.x), "observable breakpoints must be increasing within (0,1)"))
      fail(Errc::InvalidInput, "observable breakpoints must be strictly increasing inside (0,1)");
    prev = b.x;
  }
  if (!breaks_.empty() &&
      !decide(prev.cmp_lt(one_scalar()), "observable breakpoints must stay below 1"))
    fail(Errc::InvalidInput, "observable breakpoints must lie strictly inside (0,1)");
}

PiecewiseSmooth PiecewiseSmooth::from_poly(Poly p) {
  PiecewiseSmooth h;
  h.pieces_ = {std::move(p)};
  return h;
}

PiecewiseSmooth PiecewiseSmooth::step(const Scalar& at, PointTag tag) {
  return PiecewiseSmooth({BreakPt{at, tag}}, {Poly::zero(), Poly::constant(Scalar(1L))});
}

Scalar PiecewiseSmooth::value_one_sided(const Scalar& x, Side side) const {
  if (x.cmp_lt(zero_scalar()) == Trool::True || one_scalar().cmp_lt(x) == Trool::True)
    fail(Errc::OutOfDomain, "observable evaluated outside [0,1]");
  if (side == Side::Left && x.cmp_eq(zero_scalar()) == Trool::True)
    fail(Errc::OutOfDomain, "no left limit at 0");
  if (side == Side::Right && x.cmp_eq(one_scalar()) == Trool::True)
    fail(Errc::OutOfDomain, "no right limit at 1");
  size_t piece = breaks_.size();  // rightmost unless a breakpoint says otherwise
  for (size_t i = 0; i < breaks_.size(); ++i) {
    int c = classify_against(x, breaks_[i].x, "value_one_sided");
    if (c < 0) {
      piece = i;
      break;
    }
    if (c == 0) {
      piece = side == Side::Left ? i : i + 1;
      break;
    }
  }
  return pieces_[piece].eval(x);
}

Scalar PiecewiseSmooth::jump_at_index(size_t i) const {
  if (i >= breaks_.size()) fail(Errc::InvalidInput, "jump index out of range");
  return pieces_[i + 1].eval(breaks_[i].x) - pieces_[i].eval(breaks_[i].x);
}

PiecewiseSmooth PiecewiseSmooth::normalized() const {
  PiecewiseSmooth out;
  out.pieces_.clear();
  out.pieces_.push_back(pieces_[0]);
  for (size_t i = 0; i < breaks_.size(); ++i) {
    if (pieces_[i + 1].same(out.pieces_.back())) continue;  // zero jump, zero kink
    out.breaks_.push_back(breaks_[i]);
    out.pieces_.push_back(pieces_[i + 1]);
  }
  return out;
}

PiecewiseSmooth PiecewiseSmooth::derivative_abs() const {
  PiecewiseSmooth out = *this;
  for (auto& p : out.pieces_) p = p.derivative();
  return out;
}

namespace {

// Common refinement: the union of both breakpoint sets, with each side's
// piece stretched across the other's cuts.
struct Refined {
  std::vector<BreakPt> breaks;
  std::vector<const Poly*> left, right;  // piece of each operand per cell
};

Refined refine(const PiecewiseSmooth& a, const PiecewiseSmooth& b) {
  Refined r;
  size_t ia = 0, ib = 0;  // next unmerged breakpoint of each operand
  r.left.push_back(&a.pieces()[0]);
  r.right.push_back(&b.pieces()[0]);
  const auto& ba = a.breaks();
  const auto& bb = b.breaks();
  while (ia < ba.size() || ib < bb.size()) {
    int take;  // -1 from a, +1 from b, 0 both (equal points)
    if (ia == ba.size())
      take = +1;
    else if (ib == bb.size())
      take = -1;
    else
      take = classify_against(ba[ia].x, bb[ib].x, "piecewise refinement");
    BreakPt bp;
    if (take <= 0) {
      bp = ba[ia];
      if (take == 0 && tag_empty(bp.tag)) bp.tag = bb[ib].tag;
      ++ia;
      if (take == 0) ++ib;
    } else {
      bp = bb[ib];
      ++ib;
    }
    r.breaks.push_back(bp);
    r.left.push_back(&a.pieces()[ia]);
    r.right.push_back(&b.pieces()[ib]);
  }
  return r;
}

template <typename F>
PiecewiseSmooth combine(const PiecewiseSmooth& a, const PiecewiseSmooth& b, F&& op) {
  Refined r = refine(a, b);
  std::vector<Poly> pieces;
  pieces.reserve(r.left.size());
  for (size_t i = 0; i < r.left.size(); ++i) pieces.push_back(op(*r.left[i], *r.right[i]));
  return PiecewiseSmooth(std::move(r.breaks), std::move(pieces));
}

}  // namespace

PiecewiseSmooth PiecewiseSmooth::operator+(const PiecewiseSmooth& o) const {
  return combine(*this, o, [](const Poly& p, const Poly& q) { return p + q; });
}

PiecewiseSmooth PiecewiseSmooth::operator-(const PiecewiseSmooth& o) const {
  return combine(*this, o, [](const Poly& p, const Poly& q) { return p - q; });
}

PiecewiseSmooth PiecewiseSmooth::operator*(const PiecewiseSmooth& o) const {
  return combine(*this, o, [](const Poly& p, const Poly& q) { return p * q; });
}

PiecewiseSmooth PiecewiseSmooth::scaled(const Scalar& s) const {
  PiecewiseSmooth out = *this;
  for (auto& p : out.pieces_) p = p.scaled(s);
  return out;
}

bool PiecewiseSmooth::same(const PiecewiseSmooth& o) const {
  if (breaks_.size() != o.breaks_.size()) return false;
  for (size_t i = 0; i < breaks_.size(); ++i) {
    if (!breaks_[i].x.same(o.breaks_[i].x)) return false;
    if (!(breaks_[i].tag == o.breaks_[i].tag)) return false;
  }
  for (size_t i = 0; i < pieces_.size(); ++i)
    if (!pieces_[i].same(o.pieces_[i])) return false;
  return true;
}

Scalar jump_at(const PiecewiseSmooth& h, const Scalar& x) {
  for (size_t i = 0; i < h.breaks().size(); ++i) {
    Trool eq = x.cmp_eq(h.breaks()[i].x);
    if (eq == Trool::True) return h.jump_at_index(i);
    if (eq == Trool::Unknown && x.overlaps(h.breaks()[i].x))
      fail(Errc::PrecisionInsufficient, "cannot decide whether the point is a breakpoint");
  }
  return Scalar(0L);
}

std::pair<PiecewiseSmooth, JumpVector> decompose_derivative(const PiecewiseSmooth& h) {
  JumpVector jumps;
  jumps.reserve(h.breaks().size());
  for (size_t i = 0; i < h.breaks().size(); ++i)
    jumps.push_back({h.breaks()[i].x, h.breaks()[i].tag, h.jump_at_index(i)});
  return {h.derivative_abs(), std::move(jumps)};
}

namespace {

// Applies `f` to every piece of h over its closed cell and accumulates.
template <typename F>
Scalar accumulate_pieces(const PiecewiseSmooth& h, F&& f) {
  Scalar total(0L);
  Scalar lo(0L);
  for (size_t i = 0; i < h.pieces().size(); ++i) {
    Scalar hi = i < h.breaks().size() ? h.breaks()[i].x : Scalar(1L);
    total += f(h.pieces()[i], lo, hi);
    lo = hi;
  }
  return total;
}

Scalar l1_norm(const PiecewiseSmooth& h) {
  return accumulate_pieces(h, [](const Poly& p, const Scalar& a, const Scalar& b) {
    return integral_abs(p, a, b);
  });
}

Scalar linf_norm(const PiecewiseSmooth& h) {
  Scalar best(0L);
  Scalar lo(0L);
  for (size_t i = 0; i < h.pieces().size(); ++i) {
    Scalar hi = i < h.breaks().size() ? h.breaks()[i].x : Scalar(1L);
    best = best.max(sup_abs(h.pieces()[i], lo, hi));
    lo = hi;
  }
  return best;
}

Scalar total_jump_mass(const PiecewiseSmooth& h) {
  Scalar total(0L);
  for (size_t i = 0; i < h.breaks().size(); ++i) total += h.jump_at_index(i).abs();
  return total;
}

}  // namespace

Scalar compute_norm(const PiecewiseSmooth& h, NormKind kind, int r) {
  switch (kind) {
    case NormKind::L1:
      return l1_norm(h);
    case NormKind::Linf:
      return linf_norm(h);
    case NormKind::BV:
      return l1_norm(h) + l1_norm(h.derivative_abs()) + total_jump_mass(h);
    case NormKind::Cr: {
      if (r < 0) fail(Errc::InvalidInput, "C_r norm requires r >= 0");
      Scalar total(0L);
      PiecewiseSmooth d = h;
      for (int t = 0; t <= r; ++t) {
        total += l1_norm(d);
        if (t < r) d = d.derivative_abs();
      }
      return total;
    }
  }
  fail(Errc::InvalidInput, "unknown norm kind");
}

// ---------------------------------------------------------------------------
// Weights

Weight Weight::constant(const Scalar& c) {
  return Weight{PiecewiseSmooth::constant(c), WeightMode::Constant};
}

Weight Weight::inverse_abs_derivative(const PiecewiseMap& map) {
  std::vector<BreakPt> breaks;
  std::vector<Poly> pieces;
  for (int i = 0; i < map.branch_count(); ++i) {
    const Branch& b = map.branches[i];
    if (b.poly.degree() > 1)
      fail(Errc::DegreeTooLarge,
           "1/|T'| is only piecewise polynomial for affine branches");
    Scalar slope = b.poly.coeff(1);
    if (slope.contains_zero()) fail(Errc::DivisionByZero, "branch with vanishing slope");
    pieces.push_back(Poly::constant(slope.abs().recip()));
    if (i + 1 < map.branch_count()) breaks.push_back({map.breakpoints[i + 1], PointTag{}});
  }
  return Weight{PiecewiseSmooth(std::move(breaks), std::move(pieces)),
                WeightMode::InverseDerivative};
}

Weight Weight::custom(PiecewiseSmooth phi) {
  return Weight{std::move(phi), WeightMode::Custom};
}

// ---------------------------------------------------------------------------
// Weighted jump norms

Scalar WeightScheme::zeta_at(int j, int k) const {
  if (j < 0 || j >= static_cast<int>(zeta.size()))
    fail(Errc::InvalidInput, "zeta weight requested for an unknown orbit");
  if (k < 0 || k > K || k >= static_cast<int>(zeta[j].size()))
    fail(Errc::DepthTooLarge, "zeta weight requested beyond the truncation depth");
  return zeta[j][k];
}

Scalar zeta_jump_norm(const PiecewiseSmooth& h, const WeightScheme& scheme,
                      const OrbitTable& table) {
  Scalar total(0L);
  for (size_t i = 0; i < h.breaks().size(); ++i) {
    Scalar j = h.jump_at_index(i);
    const PointTag& tag = h.breaks()[i].tag;
    if (std::holds_alternative<OrbTag>(tag)) {
      const OrbTag& t = std::get<OrbTag>(tag);
      if (t.j < 0 || t.j >= static_cast<int>(table.orbits.size()))
        fail(Errc::InvalidInput, "orbit tag references an unknown orbit");
      const auto& pts = table.orbits[t.j].points;
      if (t.k < 0 || t.k >= static_cast<int>(pts.size()))
        fail(Errc::DepthTooLarge, "orbit tag deeper than the stored orbit");
      if (!decide(h.breaks()[i].x.cmp_eq(pts[t.k].x), "orbit tag / breakpoint match"))
        fail(Errc::InvalidInput, "orbit tag does not match the breakpoint value");
      total += scheme.zeta_at(t.j, t.k) * j.abs();
    } else if (std::holds_alternative<BkTag>(tag)) {
      total += j.abs();
    } else {
      if (j.cmp_eq(Scalar(0L)) == Trool::True) continue;
      fail(Errc::UntaggedJump, "nonzero jump at an untagged breakpoint");
    }
  }
  return total;
}

Scalar custom_norm(const PiecewiseSmooth& h, const WeightScheme& scheme,
                   const OrbitTable& table) {
  if (scheme.r < 1) fail(Errc::InvalidInput, "custom norm requires r >= 1");
  Scalar total(0L);
  PiecewiseSmooth d = h;
  for (int t = 0; t <= scheme.r; ++t) {
    total += l1_norm(d);
    if (t <= scheme.r - 1) total += zeta_jump_norm(d, scheme, table);
    if (t < scheme.r) d = d.derivative_abs();
  }
  return total;
}

// ---------------------------------------------------------------------------
// JSON

PiecewiseSmooth obs_from_json(const nlohmann::json& j) {
  std::vector<BreakPt> breaks;
  for (const auto& b : j.at("breakpoints")) breaks.push_back({scalar_from_json(b), PointTag{}});
  std::vector<Poly> pieces;
  for (const auto& pj : j.at("pieces")) {
    std::vector<Scalar> coeffs;
    for (const auto& c : pj.at("coeffs")) coeffs.push_back(scalar_from_json(c));
    pieces.push_back(Poly(std::move(coeffs)));
  }
  if (j.contains("tags")) {
    for (const auto& tj : j.at("tags")) {
      Scalar x = scalar_from_json(tj.at("point"));
      bool found = false;
      for (auto& b : breaks) {
        if (!b.x.same(x)) continue;
        if (tj.contains("orbit"))
          b.tag = OrbTag{tj.at("orbit").at(0).get<int>(), tj.at("orbit").at(1).get<int>()};
        else
          b.tag = BkTag{tj.at("b").get<int>()};
        found = true;
        break;
      }
      if (!found) fail(Errc::InvalidInput, "tag for a point that is not a breakpoint");
    }
  }
  return PiecewiseSmooth(std::move(breaks), std::move(pieces));
}

nlohmann::json obs_to_json(const PiecewiseSmooth& h) {
  nlohmann::json j;
  j["breakpoints"] = nlohmann::json::array();
  j["pieces"] = nlohmann::json::array();
  j["tags"] = nlohmann::json::array();
  for (const auto& b : h.breaks()) {
    j["breakpoints"].push_back(scalar_to_json(b.x));
    if (std::holds_alternative<OrbTag>(b.tag)) {
      const auto& t = std::get<OrbTag>(b.tag);
      j["tags"].push_back({{"point", scalar_to_json(b.x)}, {"orbit", {t.j, t.k}}});
    } else if (std::holds_alternative<BkTag>(b.tag)) {
      j["tags"].push_back({{"point", scalar_to_json(b.x)}, {"b", std::get<BkTag>(b.tag).idx}});
    }
  }
  for (const auto& p : h.pieces()) {
    nlohmann::json pj;
    pj["coeffs"] = nlohmann::json::array();
    for (int c = 0; c <= p.degree(); ++c) pj["coeffs"].push_back(scalar_to_json(p.coeff(c)));
    if (p.degree() < 0) pj["coeffs"].push_back(scalar_to_json(Scalar(0L)));
    j["pieces"].push_back(pj);
  }
  return j;
}

}  // namespace tfspec
