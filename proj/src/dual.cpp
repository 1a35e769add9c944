#include "tfspec/dual.hpp"

#include <exception>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "json.hpp"

namespace tfspec {

namespace {

// Certified positive lower bound on |phi| over [0,1]; 0 when no such bound
// can be certified (sign change or undecided piece).
Rat weight_abs_min(const Weight& weight) {
  const PiecewiseSmooth& phi = weight.phi;
  std::vector<Scalar> xs;
  xs.push_back(Scalar(0L));
  for (const auto& b : phi.breaks()) xs.push_back(b.x);
  xs.push_back(Scalar(1L));
  Rat best(0);
  bool first = true;
  for (size_t i = 0; i < phi.pieces().size(); ++i) {
    Scalar r = range_bound(phi.pieces()[i], xs[i], xs[i + 1], 8);
    Rat cand(0);
    if (r.lo() > 0)
      cand = r.lo();
    else if (r.hi() < 0)
      cand = -r.hi();
    else
      return Rat(0);
    if (first || cand < best) best = cand;
    first = false;
  }
  return best;
}

// Jump of h at the break carrying `tag`, zero when no break carries it.
Scalar jump_with_tag(const PiecewiseSmooth& h, const PointTag& tag) {
  for (size_t i = 0; i < h.breaks().size(); ++i)
    if (h.breaks()[i].tag == tag) return h.jump_at_index(i);
  return Scalar(0L);
}

}  // namespace

Scalar CScalar::mod(unsigned bits) const {
  if (im.is_zero()) return re.abs();
  if (re.is_zero()) return im.abs();
  return nth_root(abs_sq(), 2, bits);
}

CScalar CScalar::pow(int k) const {
  if (k < 0) fail(Errc::InvalidInput, "negative complex power");
  CScalar acc(Scalar(1L));
  for (int i = 0; i < k; ++i) acc = acc * *this;
  return acc;
}

const Scalar& AlphaSequence::at(int k) const {
  if (k < k0 - 1 || k > K())
    fail(Errc::OutOfDomain, "alpha index outside the stored range");
  return values[static_cast<size_t>(k - (k0 - 1))];
}

AlphaSequence alpha_sequence(const OrbitTable& table, const Weight& weight,
                             int j, int K) {
  if (j < 0 || j >= static_cast<int>(table.orbits.size()))
    fail(Errc::InvalidInput, "orbit index out of range");
  if (table.k0 < 1)
    fail(Errc::PreconditionK0, "uniqueness threshold unknown; run find_k0 first");
  const DiscOrbit& orbit = table.orbits[j];
  const int k0 = table.k0;
  if (K < k0) fail(Errc::InvalidInput, "alpha sequence needs K >= k0");
  if (K > static_cast<int>(orbit.points.size()) - 1)
    fail(Errc::DepthTooLarge, "alpha sequence deeper than the stored orbit");

  AlphaSequence out;
  out.j = j;
  out.k0 = k0;
  out.values.reserve(static_cast<size_t>(K - k0 + 2));
  out.values.push_back(Scalar(1L));
  Scalar abs_prod(1L);  // independent product of |phi(a_i)|, i = k0-1..k-1
  for (int k = k0; k <= K; ++k) {
    const OrbitPoint& prev = orbit.points[static_cast<size_t>(k - 1)];
    Scalar phi = weight.phi.value_one_sided(prev.x, prev.side);
    if (phi.contains_zero())
      fail(Errc::ZeroWeightOnOrbit,
           "weight vanishes along the orbit; the invariant disc is empty");
    Scalar next = out.values.back() * Scalar(static_cast<long>(prev.gamma)) / phi;
    // Modulus identity: |alpha_k| * prod |phi(a_i)| = 1, with the product
    // accumulated independently of the recursion.
    abs_prod = abs_prod * phi.abs();
    if (!(next.abs() * abs_prod).contains(Rat(1)))
      fail(Errc::ApproximationError, "alpha modulus cross-check failed");
    out.values.push_back(std::move(next));
  }
  return out;
}

DualFunctional dual_functional(const PiecewiseMap& map, const Weight& weight,
                               const OrbitTable& table, int j,
                               const CScalar& lambda, int K,
                               const Scalar& lambda_inf_est) {
  (void)map;
  AlphaSequence alpha = alpha_sequence(table, weight, j, K);

  DualFunctional f;
  f.j = j;
  f.k0 = alpha.k0;
  f.K = K;
  f.lambda = lambda;
  f.lambda_mod = lambda.mod();
  if (!f.lambda_mod.certainly_lt(lambda_inf_est.abs()))
    fail(Errc::LambdaTooLarge, "lambda must lie strictly inside the certified disc");

  CScalar lam_pow = lambda.pow(f.k0);
  for (int k = f.k0; k <= K; ++k) {
    f.coeff.push_back(lam_pow.scaled(alpha.at(k)));
    if (k < K) lam_pow = lam_pow * lambda;
  }

  if (f.lambda_mod.is_zero()) {
    f.tail_coeff_bound = Scalar(0L);
    return f;
  }
  Rat phi_min = weight_abs_min(weight);
  if (phi_min <= 0)
    fail(Errc::WeightVanishes,
         "no certified positive weight minimum; truncation tail unbounded");
  Scalar q = f.lambda_mod / Scalar(phi_min);
  if (!q.certainly_lt(Scalar(1L)))
    fail(Errc::LambdaTooLarge,
         "|lambda| must stay below the certified weight minimum for a summable tail");
  Scalar last_mod = f.coeff.back().mod();
  f.tail_coeff_bound = last_mod * q / (Scalar(1L) - q);
  return f;
}

EllValue ell_lambda(const DualFunctional& f, const PiecewiseSmooth& h) {
  EllValue out;
  for (size_t i = 0; i < h.breaks().size(); ++i) {
    Scalar jump = h.jump_at_index(i);
    if (jump.is_zero()) continue;
    const PointTag& tag = h.breaks()[i].tag;
    if (std::holds_alternative<std::monostate>(tag))
      fail(Errc::UntaggedJump, "jump at an untagged breakpoint");
    if (!std::holds_alternative<OrbTag>(tag)) continue;  // boundary-image point
    const OrbTag& t = std::get<OrbTag>(tag);
    if (t.j != f.j || t.k < f.k0 || t.k > f.K) continue;  // outside truncation
    out.value = out.value + f.coeff[static_cast<size_t>(t.k - f.k0)].scaled(jump);
  }
  Scalar sup = compute_norm(h, NormKind::Linf);
  out.tail_bound = Scalar(2L) * sup * f.tail_coeff_bound;
  return out;
}

RankOneData construct_h_K(const PiecewiseMap& map, const Weight& weight,
                          const OrbitTable& table, int j) {
  if (j < 0 || j >= static_cast<int>(table.orbits.size()))
    fail(Errc::InvalidInput, "orbit index out of range");
  if (table.k0 < 1)
    fail(Errc::PreconditionK0, "uniqueness threshold unknown; run find_k0 first");
  const DiscOrbit& orbit = table.orbits[j];
  const int k0 = table.k0;
  if (k0 > static_cast<int>(orbit.points.size()) - 1)
    fail(Errc::DepthTooLarge, "orbit too shallow to reach the pivot depth");
  if (orbit.anchor_branch < 0)
    fail(Errc::InvalidInput, "orbit lacks a boundary preimage; re-basing is broken");

  const Branch& cell = map.branches[static_cast<size_t>(orbit.anchor_branch)];
  const bool left = orbit.anchor_side == Side::Left;
  const Scalar& g = left ? cell.hi : cell.lo;
  const Scalar& far = left ? cell.lo : cell.hi;
  if (!g.same(orbit.anchor))
    fail(Errc::InvalidInput, "orbit anchor does not bound its branch");

  // Tag for the support break that sits on the boundary point itself.
  PointTag g_tag{};
  for (size_t i = 0; i < map.breakpoints.size(); ++i)
    if (map.breakpoints[i].same(g)) g_tag = BkTag{static_cast<int>(i)};

  Scalar zero(0L), one(1L);
  for (int attempt = 0; attempt < 40; ++attempt) {
    // Quadratic bump on [s, g] (or [g, s]): 0 with flat contact at s, 1 at g.
    Scalar s = g + (far - g) / Scalar(1L << std::min(attempt, 30));
    Scalar d = g - s;
    Poly ramp = Poly::affine(-(s / d), d.recip());
    Poly bump = ramp * ramp;

    std::vector<BreakPt> breaks;
    std::vector<Poly> pieces;
    const Scalar& lo_pt = left ? s : g;
    const Scalar& hi_pt = left ? g : s;
    if (zero.cmp_lt(lo_pt) == Trool::True) {
      breaks.push_back({lo_pt, left ? PointTag{} : g_tag});
      pieces.push_back(Poly());
    }
    pieces.push_back(bump);
    if (hi_pt.cmp_lt(one) == Trool::True) {
      breaks.push_back({hi_pt, left ? g_tag : PointTag{}});
      pieces.push_back(Poly());
    }
    PiecewiseSmooth cur(std::move(breaks), std::move(pieces));

    for (int step = 0; step <= k0; ++step)
      cur = apply_transfer(map, weight, cur, &table);

    Scalar v = jump_with_tag(cur, PointTag{OrbTag{j, k0}});
    if (v.contains_zero()) continue;  // vanished or uncertified: shrink support

    RankOneData data;
    data.h_K = cur.scaled(v.recip());
    data.j = j;
    data.k0 = k0;
    data.pivot = orbit.points[static_cast<size_t>(k0 - 1)].x;
    data.normalizer = alpha_sequence(table, weight, j, k0).at(k0).recip();
    // No orbit jump deeper than the pivot may survive.
    for (size_t i = 0; i < data.h_K.breaks().size(); ++i) {
      const PointTag& tag = data.h_K.breaks()[i].tag;
      if (!std::holds_alternative<OrbTag>(tag)) continue;
      const OrbTag& t = std::get<OrbTag>(tag);
      if (t.j == j && t.k > k0 && !data.h_K.jump_at_index(i).is_zero())
        fail(Errc::InvalidInput, "unexpected jump below the pivot depth");
    }
    return data;
  }
  fail(Errc::NormalizationZero,
       "bump produced no certified jump at the pivot depth");
}

bool DualEigenCert::within() const {
  return residual.is_zero() || residual.certainly_le(allowance);
}

DualEigenCert dual_eigen_residual(const PiecewiseMap& map, const Weight& weight,
                                  const OrbitTable& table, const RankOneData& data,
                                  const DualFunctional& f, const PiecewiseSmooth& h) {
  if (f.j != data.j || f.k0 != data.k0)
    fail(Errc::InvalidInput, "functional and rank-one data disagree on the orbit");

  PiecewiseSmooth Lh = apply_transfer(map, weight, h, &table);
  EllValue eL = ell_lambda(f, Lh);
  EllValue eh = ell_lambda(f, h);
  EllValue eK = ell_lambda(f, data.h_K);

  Scalar c = data.normalizer * jump_with_tag(h, PointTag{OrbTag{f.j, f.k0 - 1}});
  CScalar diff = eL.value - eK.value.scaled(c) - f.lambda * eh.value;

  DualEigenCert cert;
  cert.residual = diff.mod();
  cert.allowance = eL.tail_bound + c.abs() * eK.tail_bound + f.lambda_mod * eh.tail_bound;
  return cert;
}

std::vector<CScalar> lambda_grid(const Scalar& lambda_inf_est) {
  Scalar radius = lambda_inf_est * Scalar::rational(9, 10);
  const long rays[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  std::vector<CScalar> grid;
  grid.reserve(32);
  for (const auto& ray : rays)
    for (long t = 1; t <= 8; ++t) {
      Scalar mag = radius * Scalar::rational(t, 8);
      grid.push_back({mag * Scalar(ray[0]), mag * Scalar(ray[1])});
    }
  return grid;
}

std::vector<GridCertRow> certify_grid(const PiecewiseMap& map, const Weight& weight,
                                      const OrbitTable& table, int j, int K,
                                      const Scalar& lambda_inf_est,
                                      const std::vector<PiecewiseSmooth>& suite,
                                      bool parallel) {
  RankOneData data = construct_h_K(map, weight, table, j);
  std::vector<CScalar> grid = lambda_grid(lambda_inf_est);
  std::vector<GridCertRow> rows(grid.size());

  auto body = [&](size_t g) {
    GridCertRow row;
    row.lambda = grid[g];
    row.pass = true;
    DualFunctional f = dual_functional(map, weight, table, j, grid[g], K, lambda_inf_est);
    for (const auto& h : suite) {
      DualEigenCert cert = dual_eigen_residual(map, weight, table, data, f, h);
      row.residual = row.residual.max(cert.residual);
      row.allowance = row.allowance.max(cert.allowance);
      row.pass = row.pass && cert.within();
    }
    rows[g] = std::move(row);
  };

  if (parallel) {
    std::exception_ptr first_error;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long g = 0; g < static_cast<long>(grid.size()); ++g) {
      try {
        body(static_cast<size_t>(g));
      } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
        if (!first_error) first_error = std::current_exception();
      }
    }
    if (first_error) std::rethrow_exception(first_error);
  } else {
    for (size_t g = 0; g < grid.size(); ++g) body(g);
  }
  return rows;
}

std::string grid_cert_json(const std::vector<GridCertRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json e;
    e["lambda"] = {{"re", scalar_to_json(r.lambda.re)}, {"im", scalar_to_json(r.lambda.im)}};
    e["residual"] = scalar_to_json(r.residual);
    e["allowance"] = scalar_to_json(r.allowance);
    e["verdict"] = r.pass ? "pass" : "fail";
    out.push_back(std::move(e));
  }
  return out.dump(2);
}

}  // namespace tfspec
