#include "tfspec/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#ifdef TFSPEC_HAVE_OPENMP
#include <omp.h>
#endif

namespace tfspec {

namespace {

bool dec_le(const Scalar& a, const Scalar& b, const char* what) {
  return decide(a.cmp_le(b), what);
}
bool dec_lt(const Scalar& a, const Scalar& b, const char* what) {
  return decide(a.cmp_lt(b), what);
}

// The piece of h covering the whole open interval (lo, hi); fails when a
// breakpoint of h lands strictly inside.
const Poly& piece_on(const PiecewiseSmooth& h, const Scalar& lo, const Scalar& hi,
                     const char* what) {
  size_t idx = 0;
  const auto& breaks = h.breaks();
  while (idx < breaks.size() && dec_le(breaks[idx].x, lo, what)) ++idx;
  if (idx < breaks.size() && !dec_le(hi, breaks[idx].x, what))
    fail(Errc::InvalidInput, std::string(what) + ": breakpoint strictly inside a branch domain");
  return h.pieces()[idx];
}

// Index of the first piece of h lying to the right of `lo`.
size_t first_piece_index(const PiecewiseSmooth& h, const Scalar& lo, const char* what) {
  size_t idx = 0;
  const auto& breaks = h.breaks();
  while (idx < breaks.size() && dec_le(breaks[idx].x, lo, what)) ++idx;
  return idx;
}

bool tag_is_empty(const PointTag& t) { return std::holds_alternative<std::monostate>(t); }

PointTag merge_tags(const PointTag& a, const PointTag& b) {
  if (tag_is_empty(a)) return b;
  if (tag_is_empty(b)) return a;
  if (a == b) return a;
  fail(Errc::InvalidInput, "conflicting tags at a transfer-result breakpoint");
}

// Identifies a point against the orbit table: orbit points first (any depth),
// then the finite part.  Unresolvable points stay untagged.
PointTag lookup_point_tag(const OrbitTable& table, const Scalar& v) {
  for (size_t j = 0; j < table.orbits.size(); ++j) {
    const auto& pts = table.orbits[j].points;
    for (size_t k = 0; k < pts.size(); ++k)
      if (v.same(pts[k].x) || v.cmp_eq(pts[k].x) == Trool::True)
        return OrbTag{static_cast<int>(j), static_cast<int>(k)};
  }
  for (size_t i = 0; i < table.finite_part.size(); ++i)
    if (v.same(table.finite_part[i].x) || v.cmp_eq(table.finite_part[i].x) == Trool::True)
      return BkTag{static_cast<int>(i)};
  return {};
}

// Tag for the one-sided image of the boundary point c: the head of the orbit
// anchored there when one exists, otherwise a value lookup.
PointTag boundary_image_tag(const OrbitTable* table, const Scalar& c, Side side,
                            const Scalar& v) {
  if (!table) return {};
  for (size_t j = 0; j < table->orbits.size(); ++j)
    if (table->orbits[j].anchor_side == side && table->orbits[j].anchor.same(c))
      return OrbTag{static_cast<int>(j), 0};
  return lookup_point_tag(*table, v);
}

// Tag for the image of an interior breakpoint carrying `tag`, shifted `steps`
// levels down its orbit.
PointTag shifted_tag(const PointTag& tag, int steps, const Scalar& image,
                     const OrbitTable* table) {
  if (std::holds_alternative<OrbTag>(tag)) {
    OrbTag t = std::get<OrbTag>(tag);
    return OrbTag{t.j, t.k + steps};
  }
  if (std::holds_alternative<BkTag>(tag) && table) return lookup_point_tag(*table, image);
  return {};
}

// ---------------------------------------------------------------------------
// Summand assembly: partial pieces on subintervals of [0,1] are collected
// together with the interior cut points they introduce, then summed cellwise
// over the common partition.

struct Assembler {
  struct Cut {
    Scalar x;
    PointTag tag;
  };
  // kind 0: left endpoint of [0,1]; 1: right endpoint; 2: cands[cut]
  struct EndRef {
    int kind = 2;
    size_t cut = 0;
  };
  struct RawPart {
    EndRef a, b;
    Poly p;
  };

  std::vector<Cut> cands;
  std::vector<RawPart> parts;

  size_t add_cut(const Scalar& x, const PointTag& tag) {
    for (size_t i = 0; i < cands.size(); ++i) {
      if (x.same(cands[i].x)) {
        cands[i].tag = merge_tags(cands[i].tag, tag);
        return i;
      }
      Trool eq = x.cmp_eq(cands[i].x);
      if (eq == Trool::True) {
        cands[i].tag = merge_tags(cands[i].tag, tag);
        return i;
      }
      if (eq == Trool::Unknown)
        fail(Errc::PrecisionInsufficient, "cannot separate transfer-result breakpoints");
    }
    cands.push_back({x, tag});
    return cands.size() - 1;
  }

  EndRef endpoint(const Scalar& y, const PointTag& tag) {
    static const Scalar zero(0L), one(1L);
    Trool gt0 = zero.cmp_lt(y);
    Trool lt1 = y.cmp_lt(one);
    if (gt0 == Trool::True && lt1 == Trool::True) return {2, add_cut(y, tag)};
    if (gt0 == Trool::False) return {0, 0};
    if (lt1 == Trool::False) return {1, 0};
    fail(Errc::PrecisionInsufficient,
         "cannot decide whether a branch-image endpoint touches the boundary");
  }

  void add_part(EndRef a, EndRef b, Poly p) {
    if (p.is_zero()) return;
    parts.push_back({a, b, std::move(p)});
  }

  PiecewiseSmooth finish() const {
    std::vector<size_t> order(cands.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return cands[a].x.decided_lt(cands[b].x); });
    std::vector<size_t> rank(cands.size());
    for (size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;

    auto pos = [&](const EndRef& e) -> size_t {
      if (e.kind == 0) return 0;
      if (e.kind == 1) return cands.size() + 1;
      return rank[e.cut] + 1;
    };

    std::vector<Poly> pieces(cands.size() + 1);
    for (const auto& part : parts) {
      size_t a = pos(part.a), b = pos(part.b);
      if (a >= b) fail(Errc::InvalidInput, "degenerate branch image in transfer assembly");
      for (size_t i = a; i < b; ++i) pieces[i] = pieces[i] + part.p;
    }
    std::vector<BreakPt> breaks;
    breaks.reserve(cands.size());
    for (size_t r = 0; r < order.size(); ++r)
      breaks.push_back({cands[order[r]].x, cands[order[r]].tag});
    return PiecewiseSmooth(std::move(breaks), std::move(pieces)).normalized();
  }
};

// ---------------------------------------------------------------------------
// Curved-branch pullback: interpolate f through the branch inverse at
// near-Chebyshev nodes and widen by a certified bound on the error.

Rat rat_approx(double v) {
  const long den = 1L << 20;
  return Rat(static_cast<long>(std::llround(v * static_cast<double>(den))), den);
}

// Rigorous sup bound for q on [lo, hi]: rewrite q(mid + half*s) as a
// Chebyshev sum  sum_k a_k T_k(s)  by exact rational recurrences; since
// |T_k| <= 1 on [-1, 1], sup |q| <= sum_k |a_k|.  Unlike subdivision this
// is immune to cancellation between large monomial coefficients, which is
// exactly the shape interpolation defects take.
Scalar cheb_sum_bound(const Poly& q, const Rat& lo, const Rat& hi) {
  if (q.is_zero()) return Scalar(0L);
  Rat mid = (lo + hi) / 2;
  Rat half = (hi - lo) / 2;
  Poly t = q.compose(Poly::affine(Scalar(mid), Scalar(half)));
  const int d = t.degree();
  std::vector<Scalar> b;  // Chebyshev coefficients, accumulated Horner-style
  for (int j = d; j >= 0; --j) {
    // b <- s * b + coeff(j), using s*T_0 = T_1 and s*T_k = (T_{k+1}+T_{k-1})/2.
    std::vector<Scalar> nb(b.size() + 1, Scalar(0L));
    for (size_t k = 0; k < b.size(); ++k) {
      if (k == 0) {
        nb[1] = nb[1] + b[0];
      } else {
        Scalar hcoef = b[k] / Scalar(2L);
        nb[k + 1] = nb[k + 1] + hcoef;
        nb[k - 1] = nb[k - 1] + hcoef;
      }
    }
    nb[0] = nb[0] + t.coeff(j);
    b = std::move(nb);
  }
  Scalar s(0L);
  for (const auto& c : b) s = s + c.abs();
  return s;
}

Poly curved_pullback(const Branch& br, const Poly& f, const Scalar& u, const Scalar& v,
                     const Scalar& y_lo, const Scalar& y_hi, const TransferOptions& opts) {
  const int d = opts.interp_degree;
  if (d < 1 || d > opts.degree_budget)
    fail(Errc::DegreeTooLarge, "interpolation degree outside the degree budget");
  Rat mid = (y_lo.mid() + y_hi.mid()) / 2;
  Rat half = (y_hi.mid() - y_lo.mid()) / 2;
  if (half <= 0) fail(Errc::InvalidInput, "degenerate image interval for curved pullback");

  std::vector<Scalar> nodes;
  std::vector<Scalar> vals;
  nodes.reserve(d + 1);
  for (int i = 0; i <= d; ++i) {
    double c = std::cos((2.0 * i + 1.0) * M_PI / (2.0 * (d + 1)));
    Scalar y(mid + half * rat_approx(c));
    Scalar x = monotone_root(br.poly, y, u, v, 192);
    nodes.push_back(std::move(y));
    vals.push_back(f.eval(x));
  }

  // Newton divided differences over the exact rational nodes.
  std::vector<Scalar> dd = vals;
  for (int j = 1; j <= d; ++j)
    for (int i = d; i >= j; --i) dd[i] = (dd[i] - dd[i - 1]) / (nodes[i] - nodes[i - j]);
  Poly acc = Poly::constant(dd[d]);
  for (int i = d - 1; i >= 0; --i)
    acc = acc * Poly::affine(-nodes[i], Scalar(1L)) + Poly::constant(dd[i]);

  // Certify the interpolation error on the domain side, where the defect is
  // itself a polynomial, and widen the constant coefficient by it.
  Poly defect = acc.compose(br.poly) - f;
  Scalar err = cheb_sum_bound(defect, u.lo(), v.hi());
  Int tol_den = Int(1) << opts.approx_tol_bits;
  Rat tol = Rat(1) / Rat(tol_den);
  if (err.hi() > tol)
    fail(Errc::ApproximationError, "certified interpolation error exceeds the tolerance");
  return acc + Poly::constant(Scalar(-err.hi(), err.hi()));
}

Poly invert_affine(const Poly& p) {
  if (p.degree() > 1)
    fail(Errc::DegreeTooLarge, "inverse of a nonaffine iterate requested");
  Scalar c1 = p.coeff(1);
  return Poly::affine(-(p.coeff(0) / c1), c1.recip());
}

// Interior breakpoints of h strictly inside (lo, hi), together with the index
// of the first piece of h covering the left end.
struct InnerBreaks {
  size_t first_piece = 0;
  std::vector<const BreakPt*> cuts;
};

InnerBreaks inner_breaks(const PiecewiseSmooth& h, const Scalar& lo, const Scalar& hi,
                         const char* what) {
  InnerBreaks in;
  in.first_piece = first_piece_index(h, lo, what);
  for (size_t q = in.first_piece; q < h.breaks().size(); ++q) {
    if (!dec_lt(h.breaks()[q].x, hi, what)) break;
    in.cuts.push_back(&h.breaks()[q]);
  }
  return in;
}

void check_orb_tag(const OrbitTable* table, const PointTag& tag, int branch) {
  if (!table || !std::holds_alternative<OrbTag>(tag)) return;
  const OrbTag& t = std::get<OrbTag>(tag);
  if (t.j < 0 || t.j >= static_cast<int>(table->orbits.size()))
    fail(Errc::InvalidInput, "orbit tag references an unknown orbit");
  const auto& pts = table->orbits[t.j].points;
  if (t.k >= 0 && t.k < static_cast<int>(pts.size()) && pts[t.k].branch != branch)
    fail(Errc::InvalidInput, "orbit tag inconsistent with the branch containing the point");
}

}  // namespace

PiecewiseSmooth apply_transfer(const PiecewiseMap& map, const Weight& weight,
                               const PiecewiseSmooth& h, const OrbitTable* table,
                               const TransferOptions& opts) {
  Assembler acc;
  for (int i = 0; i < map.branch_count(); ++i) {
    const Branch& br = map.branches[i];
    const Scalar& c_lo = map.breakpoints[i];
    const Scalar& c_hi = map.breakpoints[i + 1];
    const Poly& phi = piece_on(weight.phi, c_lo, c_hi, "weight piece lookup");
    const bool affine = br.poly.degree() <= 1;
    const Poly inv = affine ? affine_inverse(br) : Poly();

    InnerBreaks in = inner_breaks(h, c_lo, c_hi, "transfer subdivision");
    const size_t cells = in.cuts.size() + 1;

    // Endpoint data per subcell boundary: x value, image value, end reference.
    std::vector<Scalar> xs(cells + 1), ys(cells + 1);
    std::vector<Assembler::EndRef> refs(cells + 1);
    xs[0] = c_lo;
    ys[0] = br.lo_image;
    refs[0] = acc.endpoint(ys[0], boundary_image_tag(table, c_lo, Side::Right, ys[0]));
    xs[cells] = c_hi;
    ys[cells] = br.hi_image;
    refs[cells] = acc.endpoint(ys[cells], boundary_image_tag(table, c_hi, Side::Left, ys[cells]));
    for (size_t s = 0; s < in.cuts.size(); ++s) {
      xs[s + 1] = in.cuts[s]->x;
      ys[s + 1] = br.poly.eval(xs[s + 1]);
      check_orb_tag(table, in.cuts[s]->tag, i);
      PointTag tag = shifted_tag(in.cuts[s]->tag, 1, ys[s + 1], table);
      refs[s + 1] = {2, acc.add_cut(ys[s + 1], tag)};
    }

    for (size_t s = 0; s < cells; ++s) {
      const Poly& hp = h.pieces()[in.first_piece + s];
      Poly prod = phi * hp;
      if (prod.is_zero()) continue;
      if (prod.degree() > opts.degree_budget)
        fail(Errc::DegreeTooLarge,
             "transfer piece degree " + std::to_string(prod.degree()) +
                 " exceeds the budget " + std::to_string(opts.degree_budget));
      Poly pulled = affine ? prod.compose(inv)
                           : curved_pullback(br, prod, xs[s], xs[s + 1],
                                             br.orientation > 0 ? ys[s] : ys[s + 1],
                                             br.orientation > 0 ? ys[s + 1] : ys[s], opts);
      if (br.orientation > 0)
        acc.add_part(refs[s], refs[s + 1], std::move(pulled));
      else
        acc.add_part(refs[s + 1], refs[s], std::move(pulled));
    }
  }
  return acc.finish();
}

namespace {

PiecewiseSmooth transfer_direct_cells(const PiecewiseMap& map, const Weight& weight,
                                      const PiecewiseSmooth& h, int n,
                                      const OrbitTable* table, const TransferOptions& opts) {
  RefinedPartition part = refine_partition(map, n);
  std::vector<const Poly*> phi_on(map.branch_count());
  for (int i = 0; i < map.branch_count(); ++i)
    phi_on[i] = &piece_on(weight.phi, map.breakpoints[i], map.breakpoints[i + 1],
                          "weight piece lookup");

  Assembler acc;
  for (const Cell& cell : part.cells) {
    // Weight product along the itinerary, via the prefix iterates.
    Poly pref = Poly::x();
    Poly phi_n = Poly::constant(Scalar(1L));
    for (size_t k = 0; k < cell.word.size(); ++k) {
      phi_n = phi_n * phi_on[cell.word[k]]->compose(pref);
      pref = map.branches[cell.word[k]].poly.compose(pref);
    }
    const Poly inv = invert_affine(cell.iterate);

    InnerBreaks in = inner_breaks(h, cell.lo, cell.hi, "transfer subdivision");
    const size_t cells = in.cuts.size() + 1;
    std::vector<Scalar> ys(cells + 1);
    std::vector<Assembler::EndRef> refs(cells + 1);
    ys[0] = cell.iterate.eval(cell.lo);
    ys[cells] = cell.iterate.eval(cell.hi);
    refs[0] = acc.endpoint(ys[0], table ? lookup_point_tag(*table, ys[0]) : PointTag{});
    refs[cells] =
        acc.endpoint(ys[cells], table ? lookup_point_tag(*table, ys[cells]) : PointTag{});
    for (size_t s = 0; s < in.cuts.size(); ++s) {
      ys[s + 1] = cell.iterate.eval(in.cuts[s]->x);
      PointTag tag = shifted_tag(in.cuts[s]->tag, n, ys[s + 1], table);
      refs[s + 1] = {2, acc.add_cut(ys[s + 1], tag)};
    }

    for (size_t s = 0; s < cells; ++s) {
      Poly prod = phi_n * h.pieces()[in.first_piece + s];
      if (prod.is_zero()) continue;
      if (prod.degree() > opts.degree_budget)
        fail(Errc::DegreeTooLarge,
             "transfer piece degree " + std::to_string(prod.degree()) +
                 " exceeds the budget " + std::to_string(opts.degree_budget));
      Poly pulled = prod.compose(inv);
      if (cell.orientation > 0)
        acc.add_part(refs[s], refs[s + 1], std::move(pulled));
      else
        acc.add_part(refs[s + 1], refs[s], std::move(pulled));
    }
  }
  return acc.finish();
}

}  // namespace

PiecewiseSmooth apply_transfer_n(const PiecewiseMap& map, const Weight& weight,
                                 const PiecewiseSmooth& h, int n, const OrbitTable* table,
                                 IteratePath path, const TransferOptions& opts) {
  if (n < 0) fail(Errc::InvalidInput, "negative iterate count");
  if (n == 0) return h;
  if (path == IteratePath::DirectCells)
    return transfer_direct_cells(map, weight, h, n, table, opts);
  PiecewiseSmooth out = h;
  for (int t = 0; t < n; ++t) out = apply_transfer(map, weight, out, table, opts);
  return out;
}

// ---------------------------------------------------------------------------
// Jump propagation

namespace {

// Jump of h at a point known to carry `tag` when it is a breakpoint of h:
// tag lookup first, value comparison as fallback, zero when absent.
Scalar jump_by_tag(const PiecewiseSmooth& h, const PointTag& tag, const Scalar& x) {
  for (size_t i = 0; i < h.breaks().size(); ++i)
    if (!tag_is_empty(h.breaks()[i].tag) && h.breaks()[i].tag == tag)
      return h.jump_at_index(i);
  for (size_t i = 0; i < h.breaks().size(); ++i) {
    Trool eq = x.cmp_eq(h.breaks()[i].x);
    if (eq == Trool::True) return h.jump_at_index(i);
    if (eq == Trool::Unknown && x.overlaps(h.breaks()[i].x))
      fail(Errc::PrecisionInsufficient, "cannot match a breakpoint against an orbit point");
  }
  return Scalar(0L);
}

}  // namespace

JumpShiftReport verify_jump_shift(const PiecewiseMap& map, const Weight& weight,
                                  const OrbitTable& table, const PiecewiseSmooth& h,
                                  const KRange& k_range) {
  if (table.k0 < 0)
    fail(Errc::PreconditionK0, "uniqueness threshold unknown for this table");
  if (k_range.k_min < std::max(1, table.k0))
    fail(Errc::PreconditionK0, "jump-shift range starts below the uniqueness threshold");
  if (k_range.k_max < k_range.k_min) fail(Errc::InvalidInput, "empty jump-shift range");
  if (k_range.k_max > table.depth - 1)
    fail(Errc::DepthTooLarge, "jump-shift range exceeds the table depth");

  PiecewiseSmooth Lh = apply_transfer(map, weight, h, &table);
  JumpShiftReport report;
  report.max_residual = Scalar(0L);
  for (size_t j = 0; j < table.orbits.size(); ++j) {
    const auto& pts = table.orbits[j].points;
    if (k_range.k_max >= static_cast<int>(pts.size()))
      fail(Errc::DepthTooLarge, "jump-shift range exceeds the stored orbit length");
    for (int k = k_range.k_min; k <= k_range.k_max; ++k) {
      const OrbitPoint& prev = pts[k - 1];
      Scalar phi_prev = weight.phi.value_one_sided(prev.x, prev.side);
      Scalar jh = jump_by_tag(h, OrbTag{static_cast<int>(j), k - 1}, prev.x);
      Scalar predicted = Scalar(static_cast<long>(prev.gamma)) * phi_prev * jh;
      Scalar observed = jump_by_tag(Lh, OrbTag{static_cast<int>(j), k}, pts[k].x);
      Scalar residual = (observed - predicted).abs();
      report.max_residual = report.max_residual.max(residual);
      report.entries.push_back({static_cast<int>(j), k, std::move(observed),
                                std::move(predicted), std::move(residual)});
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Distortion coefficients

Poly DistortionCell::b_poly(int l, int p) const {
  if (l < 0 || p < l || p >= static_cast<int>(num.size()))
    fail(Errc::InvalidInput, "distortion coefficient index out of range");
  if (p == l) return num[p][l];
  if (phi_n.degree() == 0)
    return num[p][l].scaled(phi_n.coeff(0).recip().pow(static_cast<unsigned>(p - l)));
  fail(Errc::DegreeTooLarge,
       "distortion coefficient is a genuine rational function; "
       "piecewise-constant weight required for a polynomial form");
}

Scalar DistortionTable::sup_norm(int l, int p) const {
  if (l < 0 || p < l || p > r) fail(Errc::InvalidInput, "distortion index out of range");
  Scalar best(0L);
  for (const auto& cell : cells) {
    Scalar s_num = sup_abs(cell.num[p][l], cell.y_lo, cell.y_hi);
    const int k = p - l;
    Scalar val;
    if (k == 0) {
      val = s_num;
    } else if (cell.phi_n.degree() == 0) {
      val = s_num / cell.phi_n.coeff(0).abs().pow(static_cast<unsigned>(k));
    } else {
      Scalar den = range_bound(cell.phi_n, cell.y_lo, cell.y_hi, 4).abs();
      if (den.lo() <= 0) fail(Errc::WeightVanishes, "weight product not bounded away from zero");
      Rat dn = den.lo(), up = den.hi(), dn_k = 1, up_k = 1;
      for (int t = 0; t < k; ++t) {
        dn_k *= dn;
        up_k *= up;
      }
      val = Scalar(s_num.lo() / up_k, s_num.hi() / dn_k);
    }
    best = best.max(val);
  }
  return best;
}

DistortionTable distortion_coefficients(const PiecewiseMap& map, const Weight& weight,
                                        int n, int r, bool parallel) {
  if (n < 1) fail(Errc::InvalidInput, "distortion table requires n >= 1");
  if (r < 0) fail(Errc::InvalidInput, "distortion table requires r >= 0");
  std::vector<const Poly*> phi_on(map.branch_count());
  for (int i = 0; i < map.branch_count(); ++i) {
    const Branch& br = map.branches[i];
    if (br.poly.degree() > 1)
      fail(Errc::DegreeTooLarge, "distortion table requires affine branches");
    phi_on[i] = &piece_on(weight.phi, map.breakpoints[i], map.breakpoints[i + 1],
                          "weight piece lookup");
    auto sign = certified_sign(*phi_on[i], map.breakpoints[i], map.breakpoints[i + 1]);
    if (!sign || *sign == 0)
      fail(Errc::WeightVanishes,
           "weight has a root on the closure of branch " + std::to_string(i));
  }

  RefinedPartition part = refine_partition(map, n);
  DistortionTable out;
  out.n = n;
  out.r = r;
  out.cells.resize(part.cells.size());

  auto build = [&](size_t ci) {
    const Cell& cell = part.cells[ci];
    DistortionCell dc;
    dc.lo = cell.lo;
    dc.hi = cell.hi;
    dc.word = cell.word;
    dc.slope = cell.iterate.coeff(1);
    const Scalar theta = dc.slope.recip();

    // Weight product and the numerator of its logarithmic derivative, both on
    // the domain side; the quotient is assembled as a sum over the itinerary
    // so no explicit power of the product appears.
    std::vector<Poly> comp(cell.word.size()), pref(cell.word.size());
    Poly run = Poly::x();
    for (size_t k = 0; k < cell.word.size(); ++k) {
      pref[k] = run;
      comp[k] = phi_on[cell.word[k]]->compose(run);
      run = map.branches[cell.word[k]].poly.compose(run);
    }
    Poly den = Poly::constant(Scalar(1L));
    for (const Poly& c : comp) den = den * c;
    Poly numq;
    for (size_t k = 0; k < cell.word.size(); ++k) {
      Poly term = phi_on[cell.word[k]]->derivative().compose(pref[k]) * pref[k].derivative();
      if (term.is_zero()) continue;
      for (size_t i = 0; i < comp.size(); ++i)
        if (i != k) term = term * comp[i];
      numq = numq + term;
    }

    // N[p][l] with A_{l,p} = N[p][l] / den^(p-l), via the one-step recursion.
    std::vector<std::vector<Poly>> N(r + 1);
    N[0] = {Poly::constant(Scalar(1L))};
    for (int p = 0; p < r; ++p) {
      N[p + 1].assign(p + 2, Poly());
      for (int l = 0; l <= p + 1; ++l) {
        Poly cur = l <= p ? N[p][l] : Poly();
        Poly prev = l >= 1 ? N[p][l - 1] : Poly();
        Poly t = cur.derivative() * den + (cur * den.derivative()).scaled(Scalar(long(l - p))) +
                 cur * numq + prev;
        N[p + 1][l] = t.scaled(theta);
      }
    }

    const Poly inv = invert_affine(cell.iterate);
    dc.phi_n = den.compose(inv);
    dc.num.resize(r + 1);
    for (int p = 0; p <= r; ++p) {
      dc.num[p].resize(p + 1);
      for (int l = 0; l <= p; ++l) dc.num[p][l] = N[p][l].compose(inv);
      const Poly& diag = dc.num[p][p];
      if (diag.degree() > 0 || !diag.coeff(0).overlaps(theta.pow(static_cast<unsigned>(p))))
        fail(Errc::ApproximationError, "closing identity for the diagonal coefficient violated");
    }
    Scalar a = cell.iterate.eval(cell.lo), b = cell.iterate.eval(cell.hi);
    dc.y_lo = cell.orientation > 0 ? a : b;
    dc.y_hi = cell.orientation > 0 ? b : a;
    out.cells[ci] = std::move(dc);
  };

  if (parallel) {
    std::exception_ptr err;
#ifdef TFSPEC_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long ci = 0; ci < static_cast<long>(out.cells.size()); ++ci) {
      try {
        build(static_cast<size_t>(ci));
      } catch (...) {
#ifdef TFSPEC_HAVE_OPENMP
#pragma omp critical
#endif
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
  } else {
    for (size_t ci = 0; ci < out.cells.size(); ++ci) build(ci);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Derivative identities

namespace {

// 1/T' as a piecewise-constant observable (affine branches).
PiecewiseSmooth inverse_derivative_signed(const PiecewiseMap& map) {
  std::vector<BreakPt> breaks;
  std::vector<Poly> pieces;
  for (int i = 0; i < map.branch_count(); ++i) {
    const Branch& br = map.branches[i];
    if (br.poly.degree() > 1)
      fail(Errc::DegreeTooLarge, "derivative identity requires affine branches");
    if (i > 0) breaks.push_back({map.breakpoints[i], PointTag{}});
    pieces.push_back(Poly::constant(br.poly.coeff(1).recip()));
  }
  return PiecewiseSmooth(std::move(breaks), std::move(pieces));
}

// phi' / (phi T') as a piecewise observable; polynomial only when phi is
// piecewise constant (then identically zero).
PiecewiseSmooth weight_quotient(const PiecewiseMap& map, const Weight& weight) {
  std::vector<BreakPt> breaks;
  std::vector<Poly> pieces;
  for (int i = 0; i < map.branch_count(); ++i) {
    const Poly& phi = piece_on(weight.phi, map.breakpoints[i], map.breakpoints[i + 1],
                               "weight piece lookup");
    if (!phi.derivative().is_zero())
      fail(Errc::DegreeTooLarge,
           "weight quotient is not a polynomial; piecewise-constant weight required");
    if (i > 0) breaks.push_back({map.breakpoints[i], PointTag{}});
    pieces.push_back(Poly());
  }
  return PiecewiseSmooth(std::move(breaks), std::move(pieces));
}

}  // namespace

Scalar verify_derivative_identity(const PiecewiseMap& map, const Weight& weight,
                                  const PiecewiseSmooth& h) {
  PiecewiseSmooth theta = inverse_derivative_signed(map);
  PiecewiseSmooth q = weight_quotient(map, weight);
  PiecewiseSmooth lhs = apply_transfer(map, weight, h).derivative_abs();
  PiecewiseSmooth rhs = apply_transfer(map, weight, q * h) +
                        apply_transfer(map, weight, theta * h.derivative_abs());
  return compute_norm(lhs - rhs, NormKind::Linf);
}

SuperDaReport lemma_superDa_check(const PiecewiseMap& map, const Weight& weight,
                                  const PiecewiseSmooth& h, int n, int p) {
  if (n < 1) fail(Errc::InvalidInput, "superposition check requires n >= 1");
  if (p < 0) fail(Errc::InvalidInput, "superposition check requires p >= 0");

  PiecewiseSmooth lhs = apply_transfer_n(map, weight, h, n);
  for (int t = 0; t < p; ++t) lhs = lhs.derivative_abs();

  DistortionTable dist = distortion_coefficients(map, weight, n, p);
  RefinedPartition part = refine_partition(map, n);

  SuperDaReport report;
  PiecewiseSmooth rhs;
  PiecewiseSmooth dl = h;
  for (int l = 0; l <= p; ++l) {
    std::vector<BreakPt> breaks;
    std::vector<Poly> pieces;
    for (size_t c = 0; c < part.cells.size(); ++c) {
      if (c > 0) breaks.push_back({part.cells[c].lo, PointTag{}});
      pieces.push_back(dist.cells[c].b_poly(l, p).compose(part.cells[c].iterate));
    }
    PiecewiseSmooth A(std::move(breaks), std::move(pieces));
    rhs = rhs + apply_transfer_n(map, weight, A * dl, n);
    report.a_sup.push_back(dist.sup_norm(l, p));
    if (l < p) dl = dl.derivative_abs();
  }
  report.residual = compute_norm(lhs - rhs, NormKind::Linf);
  return report;
}

}  // namespace tfspec
