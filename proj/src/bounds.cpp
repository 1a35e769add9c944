#include "tfspec/bounds.hpp"

#include <algorithm>
#include <bit>
#include <exception>
#include <sstream>
#include <utility>

#ifdef TFSPEC_HAVE_OPENMP
#include <omp.h>
#endif

namespace tfspec {

namespace {

Rat mkrat(long num, long den) {
  Rat r(num, den);
  r.canonicalize();
  return r;
}

bool weight_is_piecewise_const(const Weight& w) {
  for (const auto& p : w.phi.pieces())
    if (p.degree() > 0) return false;
  return true;
}

bool map_is_affine(const PiecewiseMap& map) {
  for (const auto& br : map.branches)
    if (br.poly.degree() > 1) return false;
  return true;
}

// |phi| per branch, for piecewise-constant weights.
std::vector<Scalar> branch_abs_values(const PiecewiseMap& map, const Weight& w) {
  std::vector<Scalar> vals;
  vals.reserve(map.branches.size());
  for (const auto& br : map.branches)
    vals.push_back(w.phi.value_one_sided(br.lo, Side::Right).abs());
  return vals;
}

// The weight piece covering the whole branch domain (weight breakpoints lie
// within the map's breakpoint set, so exactly one piece covers each branch).
const Poly& weight_piece_on_branch(const Weight& w, const Branch& br) {
  const auto& bks = w.phi.breaks();
  size_t idx = 0;
  for (const auto& bp : bks) {
    Trool le = bp.x.cmp_le(br.lo);
    if (le == Trool::True)
      ++idx;
    else if (le == Trool::False)
      break;
    else
      fail(Errc::PrecisionInsufficient, "weight piece lookup undecidable at a branch boundary");
  }
  return w.phi.pieces()[idx];
}

// Exhaustive sup of |phi_n| over the level-n cells.
Scalar level_sup(const PiecewiseMap& map, const Weight& w, int n, std::size_t budget,
                 bool const_w, const std::vector<Scalar>& cvals) {
  RefinedPartition part = refine_partition(map, n, budget);
  Scalar best;
  bool first = true;
  for (const Cell& cell : part.cells) {
    Scalar s;
    if (const_w) {
      Scalar prod(1L);
      for (int b : cell.word) prod *= cvals[static_cast<size_t>(b)];
      s = prod;
    } else {
      Poly prefix = Poly::x();
      Poly val = Poly::constant(Scalar(1L));
      for (int b : cell.word) {
        const Branch& br = map.branches[static_cast<size_t>(b)];
        val = val * weight_piece_on_branch(w, br).compose(prefix);
        if (val.degree() > 64)
          fail(Errc::DegreeTooLarge, "weight product degree exceeds the budget");
        prefix = br.poly.compose(prefix);
      }
      s = sup_abs(val, cell.lo, cell.hi);
    }
    best = first ? s : best.max(s);
    first = false;
  }
  if (first) fail(Errc::InvalidInput, "empty dynamical partition");
  return best;
}

struct SupSeries {
  std::vector<Scalar> sup;  // sup |phi_n| over level-n cells, n = 1..n_max
  int enumerated_to = 0;
};

// Certified sups for every level up to n_max.  Levels beyond the enumeration
// budget use the bracket: sub-multiplicative block products above, an
// admissible-word witness below.
SupSeries weight_product_sups(const PiecewiseMap& map, const Weight& w,
                              const NRange& range, std::size_t budget) {
  if (range.n_min < 1 || range.n_max < range.n_min)
    fail(Errc::InvalidInput, "weight product range must satisfy 1 <= n_min <= n_max");
  bool const_w = weight_is_piecewise_const(w);
  std::vector<Scalar> cvals = const_w ? branch_abs_values(map, w) : std::vector<Scalar>{};

  SupSeries out;
  out.sup.resize(static_cast<size_t>(range.n_max));
  for (int n = 1; n <= range.n_max; ++n) {
    try {
      out.sup[static_cast<size_t>(n - 1)] = level_sup(map, w, n, budget, const_w, cvals);
      out.enumerated_to = n;
    } catch (const Error& e) {
      if (e.code() != Errc::DepthTooLarge) throw;
      break;
    }
  }
  int c = out.enumerated_to;
  if (c == range.n_max) return out;
  if (c < 1) fail(Errc::DepthTooLarge, "cell budget too small for level 1");
  if (!const_w || !map_is_affine(map))
    fail(Errc::DepthTooLarge,
         "level enumeration exceeded the cell budget; the bracket fallback needs affine "
         "branches and a piecewise-constant weight");

  // Witness lower bounds: extend admissible words one letter at a time,
  // keeping the certain core of each cylinder so every kept word is realized.
  struct BeamState {
    Rat lo, hi;
    Scalar prod;
  };
  std::vector<BeamState> beam;
  std::vector<Rat> lower(static_cast<size_t>(range.n_max) + 1, Rat(0));
  for (size_t i = 0; i < map.branches.size(); ++i) {
    const Branch& br = map.branches[i];
    Rat lo = br.lo.hi(), hi = br.hi.lo();
    if (lo < hi) {
      beam.push_back({lo, hi, cvals[i]});
      lower[1] = std::max(lower[1], cvals[i].lo());
    }
  }
  for (int n = 2; n <= range.n_max; ++n) {
    std::vector<BeamState> next;
    for (const auto& st : beam) {
      for (size_t i = 0; i < map.branches.size(); ++i) {
        const Branch& br = map.branches[i];
        auto im = br.image();
        Rat lo_core = std::max(im.first.hi(), st.lo);
        Rat hi_core = std::min(im.second.lo(), st.hi);
        if (!(lo_core < hi_core)) continue;
        Poly inv = affine_inverse(br);
        Scalar e1 = inv.eval(Scalar(lo_core));
        Scalar e2 = inv.eval(Scalar(hi_core));
        if (br.orientation < 0) std::swap(e1, e2);
        Rat nlo = std::max(e1.hi(), br.lo.hi());
        Rat nhi = std::min(e2.lo(), br.hi.lo());
        if (!(nlo < nhi)) continue;
        next.push_back({nlo, nhi, st.prod * cvals[i]});
      }
    }
    if (next.empty()) fail(Errc::ApproximationError, "witness beam found no admissible words");
    std::sort(next.begin(), next.end(), [](const BeamState& a, const BeamState& b) {
      if (a.prod.lo() != b.prod.lo()) return a.prod.lo() > b.prod.lo();
      return a.lo < b.lo;
    });
    if (next.size() > 8) next.resize(8);
    beam = std::move(next);
    if (n > c) lower[static_cast<size_t>(n)] = beam.front().prod.lo();
  }

  for (int n = c + 1; n <= range.n_max; ++n) {
    int q = n / c, rem = n % c;
    Scalar upper = out.sup[static_cast<size_t>(c - 1)].pow(static_cast<unsigned>(q));
    if (rem > 0) upper *= out.sup[static_cast<size_t>(rem - 1)];
    Rat lo = lower[static_cast<size_t>(n)];
    Rat hi = upper.hi();
    if (hi < lo) fail(Errc::ApproximationError, "witness exceeded the block upper bound");
    out.sup[static_cast<size_t>(n - 1)] = Scalar(lo, hi);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Itineraries

Itinerary Itinerary::thue_morse() { return Itinerary(Kind::ThueMorse, {}); }
Itinerary Itinerary::fibonacci() { return Itinerary(Kind::Fibonacci, {}); }

Itinerary Itinerary::periodic(std::vector<int> block) {
  if (block.empty()) fail(Errc::InvalidInput, "periodic itinerary needs a nonempty block");
  for (int v : block)
    if (v != 2 && v != 3) fail(Errc::InvalidInput, "itinerary letters must be 2 or 3");
  return Itinerary(Kind::Periodic, std::move(block));
}

int Itinerary::letter(size_t k) const {
  switch (kind_) {
    case Kind::ThueMorse:
      return (std::popcount(static_cast<unsigned long long>(k)) & 1) ? 3 : 2;
    case Kind::Fibonacci: {
      if (fib_cache_.size() <= k) {
        std::vector<int8_t> word{0};
        while (word.size() <= k) {
          std::vector<int8_t> next;
          next.reserve(word.size() * 2);
          for (int8_t ch : word) {
            next.push_back(0);
            if (ch == 0) next.push_back(1);
          }
          word = std::move(next);
        }
        fib_cache_ = std::move(word);
      }
      return fib_cache_[k] == 0 ? 2 : 3;
    }
    case Kind::Periodic:
      return block_[k % block_.size()];
  }
  fail(Errc::InvalidInput, "corrupt itinerary kind");
}

std::string Itinerary::name() const {
  switch (kind_) {
    case Kind::ThueMorse:
      return "thue-morse";
    case Kind::Fibonacci:
      return "fibonacci";
    case Kind::Periodic:
      return "periodic";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// BV essential radius

EssRadiusEstimate bv_essential_radius(const PiecewiseMap& map, const Weight& weight,
                                      const NRange& range, std::size_t cell_budget) {
  EssRadiusEstimate est;
  est.range = range;
  SupSeries eta = weight_product_sups(map, weight, range, cell_budget);
  SupSeries lam = (weight.mode == WeightMode::InverseDerivative)
                      ? eta
                      : weight_product_sups(map, Weight::inverse_abs_derivative(map),
                                            range, cell_budget);
  est.eta_enumerated_to = eta.enumerated_to;
  est.lambda_enumerated_to = lam.enumerated_to;
  for (int n = range.n_min; n <= range.n_max; ++n) {
    est.eta_est.push_back(nth_root(eta.sup[static_cast<size_t>(n - 1)],
                                   static_cast<unsigned>(n)));
    est.lambda_est.push_back(nth_root(lam.sup[static_cast<size_t>(n - 1)],
                                      static_cast<unsigned>(n)));
  }
  est.eta_final = est.eta_est.back();
  est.lambda_final = est.lambda_est.back();
  est.lambda_below_one = est.lambda_final.certainly_lt(Scalar(1L));
  return est;
}

// ---------------------------------------------------------------------------
// Example family

ExampleMapResult make_example_map(int m, const Itinerary& itinerary,
                                  unsigned precision_bits) {
  if (m < 4) fail(Errc::InvalidInput, "the family requires m >= 4");
  if (!itinerary.aperiodic())
    fail(Errc::InvalidInput,
         "an eventually periodic itinerary gives a Markov map; an aperiodic word is required");
  if (precision_bits < 8 || precision_bits > 65536)
    fail(Errc::PrecisionInsufficient, "precision must lie between 8 and 65536 bits");

  // Cylinder depth: m^K >= 2^precision_bits, at least two letters.
  Int pw(1);
  Int target = Int(1) << precision_bits;
  int K = 0;
  while (pw < target) {
    pw *= m;
    ++K;
  }
  K = std::max(K, 2);

  // Nested exact preimages under the two full middle branches: letter 2 lives
  // on ((m-3)/m, (m-2)/m), letter 3 on ((m-2)/m, (m-1)/m), both with slope m.
  Rat lo = mkrat(m - 3 + (itinerary.letter(static_cast<size_t>(K - 1)) == 3 ? 1 : 0), m);
  Rat hi = lo + mkrat(1, m);
  for (int k = K - 2; k >= 0; --k) {
    long off = m - 3 + (itinerary.letter(static_cast<size_t>(k)) == 3 ? 1 : 0);
    lo = (lo + off) / m;
    hi = (hi + off) / m;
  }
  Scalar b(lo, hi);
  Scalar rho = Scalar(Rat(m)) * b;

  ExampleMapResult out{PiecewiseMap{}, b, rho, K, itinerary.name()};
  try {
    out.map = example_map(m, rho);
  } catch (const Error& e) {
    fail(Errc::PrecisionInsufficient,
         std::string("enclosure too wide to validate the family member: ") + e.what());
  }
  return out;
}

int minimal_m_for_gap(const Rat& c) {
  if (c < 0 || c >= 1) fail(Errc::InvalidInput, "gap target must lie in [0, 1)");
  int m = 4;
  while (Rat(m - 4) / Rat(m) <= c) {
    ++m;
    if (m > 1000000) fail(Errc::InvalidInput, "gap target unreachably close to 1");
  }
  return m;
}

GapReport theorem3_gap(int m, const Itinerary& itinerary, const NRange& n_range,
                       unsigned precision_bits) {
  ExampleMapResult ex = make_example_map(m, itinerary, precision_bits);
  Weight w = Weight::inverse_abs_derivative(ex.map);

  // The cylinder construction pins the orbit branches for the first
  // cylinder_depth steps; iterate enclosures stay decidable two short of it.
  int depth = std::min(ex.cylinder_depth - 2, std::max(n_range.n_max + 4, 24));
  if (depth < n_range.n_max)
    fail(Errc::PrecisionInsufficient, "itinerary precision too low for the requested window");
  OrbitTable table = discontinuity_orbits(ex.map, depth);

  std::vector<std::optional<Scalar>> tails(table.orbits.size());
  int found = -1;
  for (size_t j = 0; j < table.orbits.size(); ++j) {
    const DiscOrbit& orb = table.orbits[j];
    if (!orb.anchor.contains(Rat(1))) continue;
    found = static_cast<int>(j);
    for (size_t k = 0; k < orb.points.size(); ++k) {
      int expect = itinerary.letter(k) == 2 ? 1 : 2;
      if (orb.points[k].branch != expect)
        fail(Errc::PrecisionInsufficient, "orbit left the prescribed itinerary inside the table");
    }
    // Every orbit step sits on a slope-m branch, inside the table by the
    // check above and beyond it by the cylinder construction.
    tails[j] = Scalar(mkrat(1, m));
  }
  if (found < 0) fail(Errc::InvalidInput, "expected an infinite orbit anchored at 1");

  auto [linf, lsup] = lambda_overall(ex.map, w, table, n_range, tails);
  (void)linf;
  EssRadiusEstimate ess = bv_essential_radius(ex.map, w, n_range);

  GapReport rep;
  rep.m = m;
  rep.b = ex.b;
  rep.rho = ex.rho;
  rep.bv_est = ess.eta_final;
  rep.lambda_est = lsup;
  rep.gap = rep.bv_est - rep.lambda_est;
  rep.aperiodicity_depth = depth;

  Scalar floor_gap = Scalar(mkrat(m - 4, m)) - Scalar(Rat(Int(1), Int(1) << 20));
  if (!rep.gap.certainly_ge(floor_gap))
    fail(Errc::ApproximationError, "measured gap fell below the certified floor (m-4)/m");
  return rep;
}

// ---------------------------------------------------------------------------
// Orbit-adapted jump weights

WeightScheme zeta_weights(const PiecewiseMap& map, const Weight& weight,
                          const OrbitTable& table, const Scalar& Lambda_tilde, int K) {
  if (K < 0) fail(Errc::InvalidInput, "zeta truncation depth must be nonnegative");
  if (!Lambda_tilde.certainly_gt(Scalar(0L)))
    fail(Errc::InvalidInput, "Lambda_tilde must be certainly positive");

  Scalar lsup(0L);
  if (!table.orbits.empty()) {
    int probe = 24;
    for (const auto& orb : table.orbits)
      probe = std::min(probe, static_cast<int>(orb.points.size()) + 1);
    probe = std::max(probe, 2);
    lsup = lambda_overall(map, weight, table, NRange{1, probe}, {}).second;
  }
  if (!lsup.certainly_lt(Lambda_tilde))
    fail(Errc::LambdaTildeTooSmall, "Lambda_tilde must certainly exceed the orbit invariant");

  // Minimal derivative order making the continuous part contract: the small-
  // level sups are valid upper bounds for the limits by sub-multiplicativity.
  EssRadiusEstimate ess = bv_essential_radius(map, weight, NRange{1, 4}, 4096);
  Scalar eta = ess.eta_est.front();
  Scalar lam = ess.lambda_est.front();
  for (const auto& v : ess.eta_est) eta = eta.min(v);
  for (const auto& v : ess.lambda_est) lam = lam.min(v);
  int r = -1;
  for (int cand = 1; cand <= 64; ++cand) {
    if ((eta * lam.pow(static_cast<unsigned>(cand - 1))).certainly_lt(Lambda_tilde)) {
      r = cand;
      break;
    }
  }
  if (r < 0)
    fail(Errc::LambdaTildeTooSmall,
         "no derivative order makes the continuous part contract below Lambda_tilde");

  WeightScheme scheme;
  scheme.Lambda_tilde = Lambda_tilde;
  scheme.r = r;
  scheme.K = K;
  scheme.zeta.resize(table.orbits.size());
  for (size_t j = 0; j < table.orbits.size(); ++j) {
    const auto& pts = table.orbits[j].points;
    if (K > static_cast<int>(pts.size()))
      fail(Errc::DepthTooLarge, "zeta depth exceeds the stored orbit");
    auto& zj = scheme.zeta[j];
    zj.resize(static_cast<size_t>(K) + 1);
    zj[0] = Scalar(1L);
    Scalar P(1L);
    for (int k = 1; k <= K; ++k) {
      const OrbitPoint& p = pts[static_cast<size_t>(k - 1)];
      Scalar phi_v = weight.eval_one_sided(p.x, p.side);
      if (phi_v.contains_zero())
        fail(Errc::ZeroWeightOnOrbit, "weight vanishes along the orbit; zeta undefined");
      P *= phi_v;
      zj[static_cast<size_t>(k)] = Lambda_tilde.pow(static_cast<unsigned>(k)) / P.abs();
    }
  }
  return scheme;
}

// ---------------------------------------------------------------------------
// Contraction measurement

std::vector<LYReport> lasota_yorke_ratio(const PiecewiseMap& map, const Weight& weight,
                                         const OrbitTable& table,
                                         const WeightScheme& scheme,
                                         const std::vector<PiecewiseSmooth>& h_suite,
                                         const NRange& n_range, bool parallel) {
  if (scheme.r < 1) fail(Errc::InvalidInput, "scheme requires r >= 1");
  if (n_range.n_min < 1 || n_range.n_max < n_range.n_min)
    fail(Errc::InvalidInput, "iterate range must satisfy 1 <= n_min <= n_max");
  if (h_suite.empty()) fail(Errc::InvalidInput, "empty observable suite");

  // Continuous-part weight phi * (1/|T'|)^(r-1), shared across the suite.
  Weight psi = weight;
  if (scheme.r > 1) {
    Weight invd = Weight::inverse_abs_derivative(map);
    PiecewiseSmooth phi_psi = weight.phi;
    for (int t = 1; t < scheme.r; ++t) phi_psi = phi_psi * invd.phi;
    psi = Weight::custom(std::move(phi_psi));
  }
  SupSeries tops = weight_product_sups(map, psi, NRange{1, n_range.n_max}, 20000);

  const int n_count = n_range.n_max - n_range.n_min + 1;
  const int total = n_count * static_cast<int>(h_suite.size());
  std::vector<LYReport> reports(static_cast<size_t>(total));

  auto build = [&](int idx) {
    const int n = n_range.n_min + idx / static_cast<int>(h_suite.size());
    const int hi = idx % static_cast<int>(h_suite.size());
    const PiecewiseSmooth& h = h_suite[static_cast<size_t>(hi)];

    LYReport rep;
    rep.n = n;
    rep.h_index = hi;
    rep.budget = scheme.Lambda_tilde.pow(static_cast<unsigned>(n));
    rep.top_term = tops.sup[static_cast<size_t>(n - 1)];

    Scalar in(0L);
    {
      PiecewiseSmooth d = h;
      for (int t = 0; t < scheme.r; ++t) {
        in += zeta_jump_norm(d, scheme, table);
        if (t + 1 < scheme.r) d = d.derivative_abs();
      }
    }
    rep.jump_norm_in = in;

    PiecewiseSmooth cur = apply_transfer_n(map, weight, h, n, &table);
    Scalar deep(0L);
    for (int t = 0; t < scheme.r; ++t) {
      for (size_t i = 0; i < cur.breaks().size(); ++i) {
        Scalar jmp = cur.jump_at_index(i);
        const PointTag& tag = cur.breaks()[i].tag;
        if (std::holds_alternative<OrbTag>(tag)) {
          const OrbTag& ot = std::get<OrbTag>(tag);
          Scalar wgt = scheme.zeta_at(ot.j, ot.k) * jmp.abs();
          if (ot.k >= n)
            deep += wgt;
          else
            rep.functional_part.push_back(wgt);
        } else if (std::holds_alternative<BkTag>(tag)) {
          rep.functional_part.push_back(jmp.abs());
        } else {
          if (jmp.cmp_eq(Scalar(0L)) == Trool::True) continue;
          fail(Errc::UntaggedJump, "iterate has a nonzero jump at an untagged breakpoint");
        }
      }
      if (t + 1 < scheme.r) cur = cur.derivative_abs();
    }
    rep.deep_jump_norm = deep;
    if (in.is_zero()) {
      rep.contraction_ratio = Scalar(0L);
      rep.jump_ok = deep.is_zero();
    } else {
      rep.contraction_ratio = deep / in;
      rep.jump_ok = deep.certainly_le(rep.budget * in);
    }
    reports[static_cast<size_t>(idx)] = std::move(rep);
  };

  if (parallel) {
    std::exception_ptr err;
#ifdef TFSPEC_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long i = 0; i < total; ++i) {
      try {
        build(static_cast<int>(i));
      } catch (...) {
#ifdef TFSPEC_HAVE_OPENMP
#pragma omp critical
#endif
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
  } else {
    for (int i = 0; i < total; ++i) build(i);
  }
  return reports;
}

// ---------------------------------------------------------------------------
// Results CSV

std::string bounds_results_csv(const std::vector<BoundsCsvRow>& rows) {
  std::ostringstream os;
  os << "experiment,m,n,bv_est,lambda_est,gap,ly_ratio,r,Lambda_tilde\n";
  for (const auto& row : rows) {
    std::string name = row.experiment;
    std::replace(name.begin(), name.end(), ',', ';');
    os << name << ',' << row.m << ',' << row.n << ',' << row.bv_est.decimal(12) << ','
       << row.lambda_est.decimal(12) << ',' << row.gap.decimal(12) << ','
       << row.ly_ratio.decimal(12) << ',' << row.r << ','
       << row.Lambda_tilde.decimal(12) << '\n';
  }
  return os.str();
}

}  // namespace tfspec
