#include "tfspec/orbits.hpp"

#include <algorithm>
#include <sstream>

namespace tfspec {

namespace {

Side flip(Side s) { return s == Side::Left ? Side::Right : Side::Left; }

// Equality of enclosure points where an undecided answer is fatal: orbit
// classification cannot proceed without deciding coincidences.
bool points_equal(const Scalar& a, const Scalar& b, const char* what) {
  Trool eq = a.cmp_eq(b);
  if (eq == Trool::Unknown)
    fail(Errc::UndecidableAtDepth,
         std::string("cannot decide a point coincidence (") + what +
             "); enclosures overlap without being exact");
  return eq == Trool::True;
}

struct Located {
  int branch;
  bool on_gamma;
};

// Branch containing x when approached from `side`; flags boundary hits.
Located locate(const PiecewiseMap& map, const Scalar& x, Side side) {
  const auto& bp = map.breakpoints;
  for (size_t i = 0; i < bp.size(); ++i) {
    Trool eq = x.cmp_eq(bp[i]);
    if (eq == Trool::True) return {adjacent_branch(map, x, side), true};
    if (eq == Trool::Unknown && x.overlaps(bp[i]))
      fail(Errc::UndecidableAtDepth,
           "cannot decide whether an orbit point hits a branch boundary");
  }
  for (int i = 0; i < map.branch_count(); ++i)
    if (bp[i].cmp_lt(x) == Trool::True && x.cmp_lt(bp[i + 1]) == Trool::True)
      return {i, false};
  fail(Errc::OutOfDomain, "orbit point escaped [0,1]");
}

struct WalkPoint {
  Scalar x;
  Side side;
  int branch;
  bool on_gamma;
};

struct RawSeq {
  Scalar anchor;
  Side anchor_side;
  int anchor_branch;
  std::vector<WalkPoint> pts;  // T(anchor^side), T^2(anchor^side), ...
  bool folded = false;
  int fold_end = 0;  // pts[0..fold_end) cover the eventually periodic orbit
};

// The seed is breakpoint `c` approached from `side`; its adjacent branch is
// known by construction (passing it avoids ordering an enclosure breakpoint
// against itself) and its image is the branch's stored one-sided limit.
RawSeq walk_seed(const PiecewiseMap& map, const Scalar& c, Side side, int branch,
                 int depth) {
  RawSeq seq;
  seq.anchor = c;
  seq.anchor_side = side;
  seq.anchor_branch = branch;
  const Branch& br = map.branches[branch];
  Scalar x = side == Side::Right ? br.lo_image : br.hi_image;
  Side s = br.orientation > 0 ? side : flip(side);
  for (int k = 0; k < depth; ++k) {
    Located loc = locate(map, x, s);
    seq.pts.push_back({x, s, loc.branch, loc.on_gamma});
    if (k + 1 == depth) break;
    x = map.branches[loc.branch].poly.eval(x);
    s = map.branches[loc.branch].orientation > 0 ? s : flip(s);
  }
  return seq;
}

// First self-recurrence folds the sequence: an exact revisit (same side when
// on a boundary, since the continuation is one-sided there) makes the orbit
// eventually periodic, hence part of the finite set.
void detect_fold(RawSeq& seq) {
  for (size_t k = 1; k < seq.pts.size() && !seq.folded; ++k) {
    for (size_t p = 0; p < k; ++p) {
      if (!points_equal(seq.pts[k].x, seq.pts[p].x, "periodicity scan")) continue;
      if (seq.pts[k].on_gamma && seq.pts[k].side != seq.pts[p].side) continue;
      seq.folded = true;
      seq.fold_end = static_cast<int>(k);
      break;
    }
  }
}

}  // namespace

OrbitTable discontinuity_orbits(const PiecewiseMap& map, int depth) {
  if (depth < 1) fail(Errc::InvalidInput, "orbit truncation depth must be >= 1");
  map.validate();

  OrbitTable table;
  table.depth = depth;
  for (const auto& c : map.breakpoints) table.finite_part.push_back({c, true});

  auto in_finite = [&](const Scalar& x) {
    for (const auto& f : table.finite_part)
      if (points_equal(x, f.x, "finite-part membership")) return true;
    return false;
  };
  auto add_finite = [&](const Scalar& x) {
    if (!in_finite(x)) table.finite_part.push_back({x, false});
  };

  std::vector<RawSeq> seqs;
  for (int i = 0; i < map.branch_count(); ++i) {
    seqs.push_back(walk_seed(map, map.breakpoints[i], Side::Right, i, depth));
    seqs.push_back(walk_seed(map, map.breakpoints[i + 1], Side::Left, i, depth));
  }
  for (auto& s : seqs) {
    detect_fold(s);
    if (s.folded)
      for (int k = 0; k < s.fold_end; ++k) add_finite(s.pts[k].x);
  }

  // Claims: a sequence becomes an orbit only when every stored point is
  // fresh; otherwise its fresh prefix joins the finite part.  Hits on
  // already-claimed orbits are recorded for the re-basing pass.
  struct Claimed {
    Scalar anchor;
    Side anchor_side;
    int anchor_branch;
    std::vector<WalkPoint> pts;
  };
  struct Entry {
    int orbit;
    int index;   // orbit position hit
    int length;  // boundary path length of the hit (own index + 1)
    int seq;
  };
  std::vector<Claimed> claimed;
  std::vector<Entry> entries;

  auto find_claimed = [&](const Scalar& x) -> std::pair<int, int> {
    for (size_t j = 0; j < claimed.size(); ++j)
      for (size_t i = 0; i < claimed[j].pts.size(); ++i)
        if (points_equal(x, claimed[j].pts[i].x, "orbit membership"))
          return {static_cast<int>(j), static_cast<int>(i)};
    return {-1, -1};
  };

  for (size_t s = 0; s < seqs.size(); ++s) {
    if (seqs[s].folded) continue;
    const auto& pts = seqs[s].pts;
    std::vector<int> fresh;
    bool stopped = false, walked_known = false;
    for (size_t k = 0; k < pts.size(); ++k) {
      if (pts[k].on_gamma) {
        stopped = true;  // continuation is another boundary point's sequence
        break;
      }
      auto hit = find_claimed(pts[k].x);
      if (hit.first >= 0) {
        entries.push_back({hit.first, hit.second, static_cast<int>(k) + 1,
                           static_cast<int>(s)});
        stopped = true;
        break;
      }
      if (in_finite(pts[k].x)) {
        walked_known = true;
        continue;
      }
      fresh.push_back(static_cast<int>(k));
    }
    if (!stopped && !walked_known) {
      claimed.push_back({seqs[s].anchor, seqs[s].anchor_side,
                         seqs[s].anchor_branch, pts});
    } else {
      for (int k : fresh) add_finite(pts[k].x);
    }
  }

  // Re-basing: if a boundary path reaches orbit position i in fewer than
  // i+1 steps, the orbit must start at the deepest such entry, which is the
  // direct image of that path's boundary point.
  for (size_t j = 0; j < claimed.size(); ++j) {
    int shift = 0;
    const Entry* base = nullptr;
    for (const auto& e : entries) {
      if (e.orbit != static_cast<int>(j)) continue;
      int off = e.index - e.length + 1;
      if (off > shift) {
        shift = off;
        base = &e;
      }
    }
    if (shift == 0) continue;
    for (int k = 0; k < shift; ++k) add_finite(claimed[j].pts[k].x);
    claimed[j].pts.erase(claimed[j].pts.begin(), claimed[j].pts.begin() + shift);
    claimed[j].anchor = seqs[base->seq].anchor;
    claimed[j].anchor_side = seqs[base->seq].anchor_side;
    claimed[j].anchor_branch = seqs[base->seq].anchor_branch;
    const Branch& abr = map.branches[claimed[j].anchor_branch];
    Scalar img =
        claimed[j].anchor_side == Side::Right ? abr.lo_image : abr.hi_image;
    if (!points_equal(img, claimed[j].pts[0].x, "re-based orbit anchor"))
      fail(Errc::InvalidInput, "internal: re-based orbit start is not a boundary image");
  }

  std::sort(claimed.begin(), claimed.end(), [](const Claimed& a, const Claimed& b) {
    if (a.anchor.same(b.anchor)) return a.anchor_side == Side::Left && b.anchor_side == Side::Right;
    return a.anchor.decided_lt(b.anchor);
  });
  for (size_t j = 0; j < claimed.size(); ++j) {
    DiscOrbit orb;
    orb.j = static_cast<int>(j);
    orb.anchor = claimed[j].anchor;
    orb.anchor_side = claimed[j].anchor_side;
    orb.anchor_branch = claimed[j].anchor_branch;
    orb.open_at_depth = true;
    for (const auto& p : claimed[j].pts)
      orb.points.push_back({p.x, p.side, p.branch, map.branches[p.branch].orientation});
    table.orbits.push_back(std::move(orb));
  }
  table.markov = table.orbits.empty();
  return table;
}

namespace {

// Either an orbit point (orbit >= 0) or a finite-part point.
struct DeltaRef {
  Scalar x;
  int orbit;
  int index;
};

std::vector<DeltaRef> delta_points(const OrbitTable& table) {
  std::vector<DeltaRef> delta;
  for (const auto& f : table.finite_part) delta.push_back({f.x, -1, -1});
  for (const auto& orb : table.orbits)
    for (size_t k = 0; k < orb.points.size(); ++k)
      delta.push_back({orb.points[k].x, orb.j, static_cast<int>(k)});
  return delta;
}

}  // namespace

int find_k0(const OrbitTable& table, const PiecewiseMap& map) {
  if (table.orbits.empty())
    fail(Errc::InvalidInput, "find_k0 requires at least one infinite orbit");
  std::vector<DeltaRef> delta = delta_points(table);

  int worst = 0;
  bool fails_at_end = false;
  for (const auto& orb : table.orbits) {
    int last = static_cast<int>(orb.points.size()) - 1;
    for (int k = 1; k <= last; ++k) {
      std::vector<Scalar> hits;
      bool has_pred = false;
      for (const auto& pre : preimages(map, orb.points[k].x)) {
        bool member = false;
        for (const auto& d : delta) {
          Trool eq = pre.x.cmp_eq(d.x);
          if (eq == Trool::Unknown && pre.x.overlaps(d.x))
            fail(Errc::PrecisionInsufficient,
                 "cannot decide preimage membership in the truncated orbit set");
          if (eq == Trool::True) {
            member = true;
            break;
          }
        }
        if (!member) continue;
        bool seen = false;
        for (const auto& h : hits)
          if (h.cmp_eq(pre.x) == Trool::True) seen = true;
        if (!seen) hits.push_back(pre.x);
        if (pre.x.cmp_eq(orb.points[k - 1].x) == Trool::True) has_pred = true;
      }
      if (!has_pred)
        fail(Errc::InvalidInput, "internal: orbit predecessor missing from preimages");
      if (hits.size() != 1) {
        worst = std::max(worst, k);
        if (k == last) fails_at_end = true;
      }
    }
  }
  if (fails_at_end)
    fail(Errc::TruncationTooShallow,
         "preimage uniqueness still fails at the truncation depth");
  return worst + 1;
}

std::vector<std::vector<int>> branch_signs(const OrbitTable& table,
                                           const PiecewiseMap& map) {
  std::vector<std::vector<int>> signs;
  for (const auto& orb : table.orbits) {
    std::vector<int> row;
    for (const auto& p : orb.points) {
      for (const auto& c : map.breakpoints) {
        Trool eq = p.x.cmp_eq(c);
        if (eq == Trool::True)
          fail(Errc::PointOnBoundary, "orbit point lies on a branch boundary");
        if (eq == Trool::Unknown && p.x.overlaps(c))
          fail(Errc::PrecisionInsufficient,
               "cannot separate an orbit point from a branch boundary");
      }
      int b = -1;
      for (int i = 0; i < map.branch_count(); ++i)
        if (map.breakpoints[i].cmp_lt(p.x) == Trool::True &&
            p.x.cmp_lt(map.breakpoints[i + 1]) == Trool::True)
          b = i;
      if (b < 0) fail(Errc::OutOfDomain, "orbit point escaped [0,1]");
      row.push_back(map.branches[b].orientation);
    }
    signs.push_back(std::move(row));
  }
  return signs;
}

std::vector<Scalar> phi_products(const PiecewiseMap& map, const Weight& weight,
                                 const DiscOrbit& orbit, int n_max) {
  (void)map;
  if (n_max < 1) fail(Errc::InvalidInput, "phi_products requires n_max >= 1");
  if (n_max > static_cast<int>(orbit.points.size()) + 1)
    fail(Errc::DepthTooLarge, "orbit truncated below the requested product range");
  std::vector<Scalar> out;
  out.reserve(n_max);
  out.push_back(weight.eval_one_sided(orbit.anchor, orbit.anchor_side));
  for (int n = 2; n <= n_max; ++n) {
    const OrbitPoint& p = orbit.points[n - 2];
    out.push_back(out.back() * weight.eval_one_sided(p.x, p.side));
  }
  return out;
}

LambdaEstimate lambda_bounds(const PiecewiseMap& map, const Weight& weight,
                             const OrbitTable& table, int j, const NRange& range,
                             const std::optional<Scalar>& certified_tail) {
  if (j < 0 || j >= static_cast<int>(table.orbits.size()))
    fail(Errc::InvalidInput, "lambda_bounds: no such orbit");
  if (range.n_min < 1 || range.n_max < range.n_min)
    fail(Errc::InvalidInput, "lambda_bounds: empty product range");
  const DiscOrbit& orbit = table.orbits[j];

  LambdaEstimate est;
  est.j = j;
  est.point = orbit.anchor;
  est.side = orbit.anchor_side;

  std::vector<Scalar> prods = phi_products(map, weight, orbit, range.n_max);
  est.anchor_phi = prods[0];
  bool zero = false;
  for (const auto& p : prods) zero = zero || p.is_zero();
  for (int n = range.n_min; n <= range.n_max; ++n)
    est.partial_products.push_back(nth_root(prods[n - 1].abs(), n));

  if (zero) {
    // The weight vanishes along the orbit: every deeper product is exactly
    // zero, so both invariants collapse to the trivial value.
    est.zero_weight = true;
    est.exact_limit = true;
    est.limit = Scalar(0L);
    est.lambda_inf_est = Scalar(0L);
    est.lambda_sup_est = Scalar(0L);
    est.cauchy_diagnostic = Scalar(0L);
    return est;
  }

  int count = range.n_max - range.n_min + 1;
  int window = std::max(1, count / 4);  // last quarter of the range
  Scalar inf_est = est.partial_products[count - window];
  Scalar sup_est = inf_est;
  for (int i = count - window + 1; i < count; ++i) {
    inf_est = inf_est.min(est.partial_products[i]);
    sup_est = sup_est.max(est.partial_products[i]);
  }
  est.cauchy_diagnostic = sup_est - inf_est;
  est.lambda_inf_est = inf_est;
  est.lambda_sup_est = sup_est;

  if (certified_tail) {
    // All weight factors beyond the table equal the certified value, so the
    // products converge to it exactly.  The last stored factors must not
    // contradict the certificate.
    const Scalar& t = *certified_tail;
    int checks = std::min<int>(4, static_cast<int>(orbit.points.size()));
    for (int i = 0; i < checks; ++i) {
      const OrbitPoint& p = orbit.points[orbit.points.size() - 1 - i];
      if (weight.eval_one_sided(p.x, p.side).cmp_eq(t) == Trool::False)
        fail(Errc::InvalidInput, "certified tail contradicts stored weight values");
    }
    est.exact_limit = true;
    est.limit = t.abs();
    est.lambda_inf_est = *est.limit;
    est.lambda_sup_est = *est.limit;
  }
  return est;
}

std::pair<Scalar, Scalar> lambda_overall(
    const PiecewiseMap& map, const Weight& weight, const OrbitTable& table,
    const NRange& range, const std::vector<std::optional<Scalar>>& certified_tails) {
  if (table.markov) return {Scalar(0L), Scalar(0L)};
  if (!certified_tails.empty() && certified_tails.size() != table.orbits.size())
    fail(Errc::InvalidInput, "one certified tail per orbit expected");
  Scalar inf_max, sup_max;
  for (size_t j = 0; j < table.orbits.size(); ++j) {
    LambdaEstimate est =
        lambda_bounds(map, weight, table, static_cast<int>(j), range,
                      certified_tails.empty() ? std::optional<Scalar>{}
                                              : certified_tails[j]);
    if (j == 0) {
      inf_max = est.lambda_inf_est;
      sup_max = est.lambda_sup_est;
    } else {
      inf_max = inf_max.max(est.lambda_inf_est);
      sup_max = sup_max.max(est.lambda_sup_est);
    }
  }
  return {inf_max, sup_max};
}

std::pair<Scalar, Scalar> lambda_overall(const PiecewiseMap& map,
                                         const Weight& weight,
                                         const NRange& range) {
  OrbitTable table = discontinuity_orbits(map, std::max(64, range.n_max - 1));
  return lambda_overall(map, weight, table, range, {});
}

std::string orbit_table_csv(const OrbitTable& table, const PiecewiseMap& map,
                            const Weight& weight) {
  (void)map;
  std::ostringstream os;
  os << "j,k,point,branch_index,gamma,phi_value\n";
  for (const auto& orb : table.orbits)
    for (size_t k = 0; k < orb.points.size(); ++k) {
      const OrbitPoint& p = orb.points[k];
      os << orb.j << ',' << k << ',' << p.x.str() << ',' << p.branch << ','
         << p.gamma << ',' << weight.eval_one_sided(p.x, p.side).str() << '\n';
    }
  return os.str();
}

}  // namespace tfspec
