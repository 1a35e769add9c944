#include "tfspec/map_core.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace tfspec {

namespace {

std::string word_str(const std::vector<int>& w) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < w.size(); ++i) {
    if (i) os << ',';
    os << w[i];
  }
  os << ')';
  return os.str();
}

}  // namespace

bool decide(Trool t, const char* what) {
  if (t == Trool::Unknown)
    fail(Errc::PrecisionInsufficient,
         std::string("undecidable comparison: ") + what);
  return t == Trool::True;
}

std::pair<Scalar, Scalar> Branch::image() const {
  return orientation > 0 ? std::make_pair(lo_image, hi_image)
                         : std::make_pair(hi_image, lo_image);
}

void PiecewiseMap::validate() const {
  const Scalar zero(0L), one(1L);
  if (breakpoints.size() < 2)
    fail(Errc::InvalidInput, "a map needs at least the breakpoints 0 and 1");
  if (!breakpoints.front().same(zero))
    fail(Errc::InvalidInput, "first breakpoint must be exactly 0");
  if (!breakpoints.back().same(one))
    fail(Errc::InvalidInput, "last breakpoint must be exactly 1");
  for (size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    if (!decide(breakpoints[i].cmp_lt(breakpoints[i + 1]), "breakpoint order"))
      fail(Errc::InvalidInput, "breakpoints must be strictly increasing");
  }
  if (branches.size() + 1 != breakpoints.size())
    fail(Errc::InvalidInput, "branch count must equal breakpoint count - 1");

  for (size_t i = 0; i < branches.size(); ++i) {
    const Branch& b = branches[i];
    if (!b.lo.same(breakpoints[i]) || !b.hi.same(breakpoints[i + 1]))
      fail(Errc::InvalidInput, "branch domain disagrees with the breakpoints");
    if (b.poly.degree() > degree_limit)
      fail(Errc::DegreeTooLarge, "branch polynomial degree exceeds the limit");
    auto s = certified_sign(b.poly.derivative(), b.lo, b.hi, 40);
    if (!s.has_value() || *s == 0)
      fail(Errc::NotMonotone,
           "branch " + std::to_string(i) + " is not certifiably strictly monotone");
    if (*s != b.orientation)
      fail(Errc::InvalidInput,
           "branch " + std::to_string(i) + " orientation disagrees with its derivative");
    // Stored endpoint images may be tighter than a fresh interval evaluation
    // (correlated coefficients) but must enclose the same value.
    if (!b.lo_image.overlaps(b.poly.eval(b.lo)) ||
        !b.hi_image.overlaps(b.poly.eval(b.hi)))
      fail(Errc::InvalidInput,
           "branch " + std::to_string(i) +
               " endpoint images contradict its polynomial");
    // Interval coefficients can make the image enclosure poke marginally past
    // an endpoint (lost correlations), so only a certain violation is fatal.
    auto [ia, ib] = b.image();
    if (ia.cmp_lt(zero) == Trool::True || one.cmp_lt(ib) == Trool::True)
      fail(Errc::OutOfDomain,
           "branch " + std::to_string(i) + " image escapes [0,1]");
  }

  // Maximality: adjacent branches must disagree in one-sided value or first
  // derivative at each interior breakpoint.
  for (size_t k = 1; k + 1 < breakpoints.size(); ++k) {
    const Branch& lft = branches[k - 1];
    const Branch& rgt = branches[k];
    const Scalar& c = breakpoints[k];
    Trool veq = lft.poly.eval(c).cmp_eq(rgt.poly.eval(c));
    Trool deq = lft.poly.derivative().eval(c).cmp_eq(rgt.poly.derivative().eval(c));
    if (veq == Trool::False || deq == Trool::False) continue;
    if (veq == Trool::True && deq == Trool::True)
      fail(Errc::NotMaximal,
           "branches " + std::to_string(k - 1) + " and " + std::to_string(k) +
               " merge smoothly at a breakpoint");
    fail(Errc::PrecisionInsufficient,
         "cannot decide maximality at breakpoint " + std::to_string(k));
  }
}

PiecewiseMap make_map(std::vector<Scalar> breakpoints, std::vector<Poly> polys,
                      int degree_limit) {
  if (breakpoints.size() != polys.size() + 1)
    fail(Errc::InvalidInput, "need exactly one polynomial per breakpoint gap");
  PiecewiseMap map;
  map.breakpoints = std::move(breakpoints);
  map.degree_limit = degree_limit;
  map.branches.reserve(polys.size());
  for (size_t i = 0; i < polys.size(); ++i) {
    Branch b;
    b.lo = map.breakpoints[i];
    b.hi = map.breakpoints[i + 1];
    b.poly = std::move(polys[i]);
    auto s = certified_sign(b.poly.derivative(), b.lo, b.hi, 40);
    if (!s.has_value() || *s == 0)
      fail(Errc::NotMonotone,
           "branch " + std::to_string(i) + " is not certifiably strictly monotone");
    b.orientation = *s;
    b.lo_image = b.poly.eval(b.lo);
    b.hi_image = b.poly.eval(b.hi);
    map.branches.push_back(std::move(b));
  }
  map.validate();
  return map;
}

// ---------------------------------------------------------------------------

int adjacent_branch(const PiecewiseMap& map, const Scalar& x, Side side) {
  const Scalar zero(0L), one(1L);
  if (decide(x.cmp_lt(zero), "x vs 0") || decide(one.cmp_lt(x), "x vs 1"))
    fail(Errc::OutOfDomain, "point outside [0,1]");
  const auto& bp = map.breakpoints;
  const int N = map.branch_count();
  if (side == Side::Left) {
    if (decide(x.cmp_le(zero), "x vs 0"))
      fail(Errc::NoAdjacentBranch, "no branch to the left of 0");
    for (int i = 0; i < N; ++i)
      if (decide(x.cmp_le(bp[i + 1]), "x vs breakpoint")) return i;
  } else {
    if (decide(one.cmp_le(x), "x vs 1"))
      fail(Errc::NoAdjacentBranch, "no branch to the right of 1");
    for (int i = N - 1; i >= 0; --i)
      if (decide(bp[i].cmp_le(x), "breakpoint vs x")) return i;
  }
  fail(Errc::OutOfDomain, "point not located in any branch");
}

Scalar evaluate_one_sided(const PiecewiseMap& map, const Scalar& x, Side side) {
  return map.branches[adjacent_branch(map, x, side)].poly.eval(x);
}

Scalar derivative_one_sided(const PiecewiseMap& map, const Scalar& x, Side side,
                            int order) {
  if (order < 0) fail(Errc::InvalidInput, "derivative order must be >= 0");
  if (order > map.degree_limit)
    fail(Errc::DegreeTooLarge, "derivative order exceeds the degree limit");
  Poly p = map.branches[adjacent_branch(map, x, side)].poly;
  for (int k = 0; k < order; ++k) p = p.derivative();
  return p.eval(x);
}

// ---------------------------------------------------------------------------

namespace {

// Refines every cell once: splits it along the preimages of the breakpoints
// under its iterate polynomial.
void extend_partition(const PiecewiseMap& map, RefinedPartition& part,
                      std::size_t max_cells) {
  const auto& bp = map.breakpoints;
  std::vector<Cell> next;
  for (const Cell& cell : part.cells) {
    Scalar va = cell.iterate.eval(cell.lo), vb = cell.iterate.eval(cell.hi);
    Scalar img_lo = cell.orientation > 0 ? va : vb;
    Scalar img_hi = cell.orientation > 0 ? vb : va;
    for (int jj = 0; jj < map.branch_count(); ++jj) {
      // Keep sub-cells ordered left to right in x: walk target branches
      // backwards under an orientation-reversing iterate.
      int j = cell.orientation > 0 ? jj : map.branch_count() - 1 - jj;
      // Open intersection of (img_lo, img_hi) with (c_j, c_{j+1}).  When an
      // image endpoint cannot be separated from the breakpoint (it encloses
      // it), the two pullback candidates coincide up to enclosure width and
      // their hull is a sound endpoint.
      Trool lo_cmp = img_lo.cmp_lt(bp[j]);        // True: breakpoint clips
      Trool hi_cmp = bp[j + 1].cmp_lt(img_hi);    // True: breakpoint clips
      Scalar t_lo = lo_cmp == Trool::True    ? bp[j]
                    : lo_cmp == Trool::False ? img_lo
                                             : img_lo.max(bp[j]);
      Scalar t_hi = hi_cmp == Trool::True    ? bp[j + 1]
                    : hi_cmp == Trool::False ? img_hi
                                             : img_hi.min(bp[j + 1]);
      Trool nonempty = t_lo.cmp_lt(t_hi);
      if (nonempty == Trool::Unknown)
        fail(Errc::PrecisionInsufficient,
             "cannot decide whether a refined cell is empty");
      if (nonempty == Trool::False) continue;
      // Pullback of a clipping breakpoint; the domain endpoint otherwise.
      auto pull_back = [&](Trool cmp, const Scalar& target, const Scalar& domain_end) {
        if (cmp == Trool::False) return domain_end;
        Scalar root = monotone_root(cell.iterate, target, cell.lo, cell.hi, 128);
        return cmp == Trool::True ? root : root.hull(domain_end);
      };
      Cell nc;
      if (cell.orientation > 0) {
        nc.lo = pull_back(lo_cmp, bp[j], cell.lo);
        nc.hi = pull_back(hi_cmp, bp[j + 1], cell.hi);
      } else {
        nc.lo = pull_back(hi_cmp, bp[j + 1], cell.lo);
        nc.hi = pull_back(lo_cmp, bp[j], cell.hi);
      }
      nc.word = cell.word;
      nc.word.push_back(j);
      nc.iterate = map.branches[j].poly.compose(cell.iterate);
      nc.orientation = cell.orientation * map.branches[j].orientation;
      next.push_back(std::move(nc));
      if (next.size() > max_cells)
        fail(Errc::DepthTooLarge, "refined partition exceeds the cell budget");
    }
  }
  part.cells = std::move(next);
  part.level += 1;
}

}  // namespace

RefinedPartition refine_partition(const PiecewiseMap& map, int n,
                                  std::size_t max_cells) {
  if (n < 1) fail(Errc::InvalidInput, "partition level must be >= 1");
  RefinedPartition part;
  part.level = 1;
  for (int i = 0; i < map.branch_count(); ++i) {
    const Branch& b = map.branches[i];
    part.cells.push_back(Cell{b.lo, b.hi, {i}, b.poly, b.orientation});
  }
  if (part.cells.size() > max_cells)
    fail(Errc::DepthTooLarge, "refined partition exceeds the cell budget");
  while (part.level < n) extend_partition(map, part, max_cells);
  return part;
}

// ---------------------------------------------------------------------------

std::vector<PreimagePoint> preimages(const PiecewiseMap& map, const Scalar& y,
                                     unsigned bits) {
  const Scalar zero(0L), one(1L);
  if (decide(y.cmp_lt(zero), "y vs 0") || decide(one.cmp_lt(y), "y vs 1"))
    fail(Errc::OutOfDomain, "preimage target outside [0,1]");
  std::vector<PreimagePoint> out;
  for (int i = 0; i < map.branch_count(); ++i) {
    const Branch& b = map.branches[i];
    auto [ia, ib] = b.image();
    Trool lo_ok = ia.cmp_le(y), hi_ok = y.cmp_le(ib);
    if (lo_ok == Trool::False || hi_ok == Trool::False) continue;
    if (lo_ok == Trool::Unknown || hi_ok == Trool::Unknown)
      fail(Errc::PrecisionInsufficient,
           "cannot decide whether y lies in the closed image of branch " +
               std::to_string(i));
    Scalar x = monotone_root(b.poly, y, b.lo, b.hi, bits);
    PreimagePoint pt;
    pt.x = x;
    pt.branch = i;
    bool at_lo = x.same(b.lo) || x.cmp_eq(b.lo) == Trool::True;
    bool at_hi = x.same(b.hi) || x.cmp_eq(b.hi) == Trool::True;
    if (!at_lo && !x.certainly_ne(b.lo))
      fail(Errc::PrecisionInsufficient, "root enclosure touches the branch endpoint");
    if (!at_hi && !x.certainly_ne(b.hi))
      fail(Errc::PrecisionInsufficient, "root enclosure touches the branch endpoint");
    pt.from_left = !at_lo;   // limit from inside the domain, x^- exists unless x = lo
    pt.from_right = !at_hi;  // x^+ exists unless x = hi
    out.push_back(std::move(pt));
  }
  return out;
}

// ---------------------------------------------------------------------------

ExpansionEstimate check_uniform_expansion(const PiecewiseMap& map, int n_max,
                                          std::size_t max_cells) {
  if (n_max < 1) fail(Errc::InvalidInput, "n_max must be >= 1");
  ExpansionEstimate est;
  RefinedPartition part = refine_partition(map, 1, max_cells);
  std::optional<Scalar> lambda;
  std::vector<Scalar> rates;
  std::string worst_word_at_top;
  for (int n = 1; n <= n_max; ++n) {
    Rat best_lb;
    const Cell* worst = nullptr;
    for (const Cell& cell : part.cells) {
      Scalar r = range_bound(cell.iterate.derivative(), cell.lo, cell.hi, 6);
      Rat lb = cell.orientation > 0 ? r.lo() : -r.hi();
      if (!worst || lb < best_lb) {
        best_lb = lb;
        worst = &cell;
      }
    }
    if (!worst || best_lb <= 0)
      fail(Errc::PrecisionInsufficient,
           "could not certify a positive derivative bound at level " +
               std::to_string(n));
    Scalar m_n = Scalar(best_lb);
    est.min_derivative.push_back(m_n);
    Scalar rate = nth_root(m_n.recip(), static_cast<unsigned>(n));
    lambda = lambda ? lambda->min(rate) : rate;
    if (n == n_max) worst_word_at_top = word_str(worst->word);
    if (n < n_max) extend_partition(map, part, max_cells);
  }
  est.lambda = *lambda;
  if (!est.lambda.certainly_lt(Scalar(1L)))
    fail(Errc::NotExpanding,
         "no contraction rate < 1 fits; worst level-" + std::to_string(n_max) +
             " cell has word " + worst_word_at_top + " with |(T^n)'| >= " +
             est.min_derivative.back().str());
  std::optional<Scalar> C;
  for (int n = 1; n <= n_max; ++n) {
    Scalar fit = est.min_derivative[n - 1] * est.lambda.pow(static_cast<unsigned>(n));
    C = C ? C->min(fit) : fit;
  }
  est.C = *C;
  return est;
}

// ---------------------------------------------------------------------------

PiecewiseMap doubling_map() {
  return make_map({Scalar(0L), Scalar::rational(1, 2), Scalar(1L)},
                  {Poly::affine(Scalar(0L), Scalar(2L)),
                   Poly::affine(Scalar(-1L), Scalar(2L))});
}

PiecewiseMap tent_map() {
  return make_map({Scalar(0L), Scalar::rational(1, 2), Scalar(1L)},
                  {Poly::affine(Scalar(0L), Scalar(2L)),
                   Poly::affine(Scalar(2L), Scalar(-2L))});
}

PiecewiseMap beta_map(const Rat& beta) {
  if (beta <= 1) fail(Errc::InvalidInput, "beta map requires beta > 1");
  Int n_branches;
  mpz_cdiv_q(n_branches.get_mpz_t(), beta.get_num_mpz_t(), beta.get_den_mpz_t());
  if (n_branches > 64) fail(Errc::InvalidInput, "beta too large");
  long N = n_branches.get_si();
  std::vector<Scalar> bps;
  std::vector<Poly> polys;
  for (long k = 0; k < N; ++k) {
    bps.push_back(Scalar(Rat(k) / beta));
    polys.push_back(Poly::affine(Scalar(Rat(-k)), Scalar(beta)));
  }
  bps.push_back(Scalar(1L));
  return make_map(std::move(bps), std::move(polys));
}

PiecewiseMap example_map(int m, const Scalar& rho) {
  if (m < 4) fail(Errc::InvalidInput, "the four-branch family requires m >= 4");
  if (!rho.certainly_gt(Scalar(0L)) || !rho.certainly_le(Scalar(static_cast<long>(m))))
    fail(Errc::InvalidInput, "rho must satisfy 0 < rho <= m");
  Scalar c1 = Scalar::rational(m - 3, m);
  Scalar c2 = Scalar::rational(m - 2, m);
  Scalar c3 = Scalar::rational(m - 1, m);
  std::vector<Poly> polys = {
      Poly::affine(Scalar(0L), Scalar::rational(m, m - 3)),
      Poly::affine(Scalar(static_cast<long>(-(m - 3))), Scalar(static_cast<long>(m))),
      Poly::affine(Scalar(static_cast<long>(-(m - 2))), Scalar(static_cast<long>(m))),
      Poly::affine(-(rho * c3), rho)};
  PiecewiseMap map = make_map({Scalar(0L), c1, c2, c3, Scalar(1L)}, std::move(polys));
  // The last branch is rho*(x - (m-1)/m): its one-sided limits are 0 and
  // rho/m for every rho, which the expanded coefficients cannot recover once
  // rho is an enclosure (the correlation between c0 and c1 is lost).
  map.branches[3].lo_image = Scalar(0L);
  map.branches[3].hi_image = rho * Scalar::rational(1, m);
  map.validate();
  return map;
}

Poly affine_inverse(const Branch& branch) {
  if (branch.poly.degree() != 1)
    fail(Errc::DegreeTooLarge, "exact inverse requires an affine branch");
  Scalar c0 = branch.poly.coeff(0), c1 = branch.poly.coeff(1);
  return Poly::affine(-c0 / c1, Scalar(1L) / c1);
}

// ---------------------------------------------------------------------------

Scalar scalar_from_json(const nlohmann::json& j) {
  if (j.is_string()) return Scalar::parse_exact(j.get<std::string>());
  if (j.is_number_integer()) return Scalar(static_cast<long>(j.get<long long>()));
  if (j.is_object()) {
    if (j.contains("dec"))
      return Scalar::from_decimal(j.at("dec").get<std::string>(),
                                  j.value("bits", 128u));
    if (j.contains("lo") && j.contains("hi")) {
      Scalar lo = Scalar::parse_exact(j.at("lo").get<std::string>());
      Scalar hi = Scalar::parse_exact(j.at("hi").get<std::string>());
      return Scalar(lo.rat(), hi.rat());
    }
  }
  fail(Errc::InvalidInput, "unrecognized scalar literal: " + j.dump());
}

nlohmann::json scalar_to_json(const Scalar& v) {
  if (v.exact()) return rat_str(v.rat());
  return nlohmann::json{{"lo", rat_str(v.lo())}, {"hi", rat_str(v.hi())}};
}

PiecewiseMap map_from_json(const nlohmann::json& j) {
  if (!j.contains("breakpoints") || !j.contains("branches"))
    fail(Errc::InvalidInput, "map JSON needs 'breakpoints' and 'branches'");
  std::vector<Scalar> bps;
  for (const auto& e : j.at("breakpoints")) bps.push_back(scalar_from_json(e));
  std::vector<Poly> polys;
  std::vector<int> declared;
  for (const auto& e : j.at("branches")) {
    std::vector<Scalar> coeffs;
    for (const auto& c : e.at("coeffs")) coeffs.push_back(scalar_from_json(c));
    polys.push_back(Poly(std::move(coeffs)));
    declared.push_back(e.value("orientation", 0));
  }
  PiecewiseMap map =
      make_map(std::move(bps), std::move(polys), j.value("degree_limit", 8));
  for (size_t i = 0; i < declared.size(); ++i)
    if (declared[i] != 0 && declared[i] != map.branches[i].orientation)
      fail(Errc::InvalidInput,
           "declared orientation of branch " + std::to_string(i) +
               " contradicts the certified derivative sign");
  return map;
}

nlohmann::json map_to_json(const PiecewiseMap& map) {
  nlohmann::json j;
  j["breakpoints"] = nlohmann::json::array();
  for (const auto& c : map.breakpoints) j["breakpoints"].push_back(scalar_to_json(c));
  j["branches"] = nlohmann::json::array();
  for (const auto& b : map.branches) {
    nlohmann::json e;
    e["coeffs"] = nlohmann::json::array();
    for (const auto& c : b.poly.coeffs()) e["coeffs"].push_back(scalar_to_json(c));
    e["orientation"] = b.orientation;
    j["branches"].push_back(e);
  }
  j["degree_limit"] = map.degree_limit;
  return j;
}

}  // namespace tfspec
