#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "tfspec/dual.hpp"

using namespace tfspec;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error to be thrown");
  return Errc::InvalidInput;
}

Scalar rat(long n, long d) { return Scalar::rational(n, d); }

Scalar around(const Rat& c, unsigned bits) {
  Rat eps(Int(1), Int(1) << bits);
  return Scalar(c - eps, c + eps);
}

std::optional<size_t> break_with_tag(const PiecewiseSmooth& h, const PointTag& t) {
  for (size_t i = 0; i < h.breaks().size(); ++i)
    if (h.breaks()[i].tag == t) return i;
  return std::nullopt;
}

struct BetaFixture {
  PiecewiseMap map = beta_map(Rat(3, 2));
  Weight w = Weight::constant(rat(2, 3));
  OrbitTable table;
  BetaFixture() {
    table = discontinuity_orbits(map, 16);
    table.k0 = find_k0(table, map);
  }
};

}  // namespace

TEST_CASE("alpha sequence inverts the weight products along the orbit") {
  BetaFixture fx;
  REQUIRE(fx.table.k0 == 1);

  AlphaSequence a = alpha_sequence(fx.table, fx.w, 0, 10);
  CHECK(a.k0 == 1);
  CHECK(a.K() == 10);
  CHECK(a.at(0).same(Scalar(1L)));
  // Constant weight 2/3, all orientations +1: alpha_k = (3/2)^k.
  for (int k = 1; k <= 10; ++k) CHECK(a.at(k).same(rat(3, 2).pow(k)));

  // Independent cross-check against the direct orbit weight products.
  std::vector<Scalar> prods =
      phi_products(fx.map, fx.w, fx.table.orbits[0], 12);
  for (int k = 1; k <= 10; ++k)
    CHECK(a.at(k).abs().same((prods[0] / prods[static_cast<size_t>(k)]).abs()));

  CHECK(code_of([&] { alpha_sequence(fx.table, fx.w, 0, 40); }) == Errc::DepthTooLarge);
  CHECK(code_of([&] { alpha_sequence(fx.table, fx.w, 0, 0); }) == Errc::InvalidInput);
  CHECK(code_of([&] { alpha_sequence(fx.table, fx.w, 3, 5); }) == Errc::InvalidInput);

  OrbitTable fresh = discontinuity_orbits(fx.map, 8);
  CHECK(code_of([&] { alpha_sequence(fresh, fx.w, 0, 4); }) == Errc::PreconditionK0);

  // Weight vanishing on the orbit (x - 1/2 is zero at a_0 = 1/2).
  Weight bad = Weight::custom(
      PiecewiseSmooth::from_poly(Poly::affine(rat(-1, 2), Scalar(1L))));
  CHECK(code_of([&] { alpha_sequence(fx.table, bad, 0, 4); }) ==
        Errc::ZeroWeightOnOrbit);
}

TEST_CASE("alpha sequence for the four-branch family") {
  PiecewiseMap map = example_map(10, rat(15, 2));
  Weight w = Weight::inverse_abs_derivative(map);
  OrbitTable table = discontinuity_orbits(map, 12);
  table.k0 = find_k0(table, map);
  REQUIRE(table.k0 == 1);

  // Orbit 3/4, 1/2, 5/7, 1/7, ... alternates between the slope-10 branches
  // (phi = 1/10) and the slope-10/7 branch (phi = 7/10).
  AlphaSequence a = alpha_sequence(table, w, 0, 4);
  CHECK(a.at(1).same(Scalar(10L)));
  CHECK(a.at(2).same(rat(100, 7)));
  CHECK(a.at(3).same(rat(1000, 7)));
  CHECK(a.at(4).same(rat(10000, 49)));
}

TEST_CASE("dual functional coefficients and geometric tail") {
  BetaFixture fx;
  const int K = 10;

  // Real lambda 1/3: lambda^k alpha_k = (1/2)^k, and the tail telescopes to
  // exactly (1/2)^K because q = |lambda|/min phi = 1/2.
  DualFunctional f =
      dual_functional(fx.map, fx.w, fx.table, 0, CScalar(rat(1, 3)), K, rat(2, 3));
  CHECK(f.k0 == 1);
  REQUIRE(static_cast<int>(f.coeff.size()) == K);
  for (int k = 1; k <= K; ++k) {
    CHECK(f.coeff[static_cast<size_t>(k - 1)].re.same(rat(1, 2).pow(k)));
    CHECK(f.coeff[static_cast<size_t>(k - 1)].im.is_zero());
  }
  CHECK(f.lambda_mod.same(rat(1, 3)));
  CHECK(f.tail_coeff_bound.same(Scalar(Rat(1, 1L << K))));

  // Purely imaginary lambda of the same modulus: identical tail, rotated
  // coefficients (i^k pattern).
  DualFunctional fi = dual_functional(fx.map, fx.w, fx.table, 0,
                                      CScalar(Scalar(0L), rat(1, 3)), K, rat(2, 3));
  CHECK(fi.coeff[0].re.is_zero());
  CHECK(fi.coeff[0].im.same(rat(1, 2)));
  CHECK(fi.coeff[1].re.same(rat(-1, 4)));
  CHECK(fi.coeff[1].im.is_zero());
  CHECK(fi.tail_coeff_bound.same(Scalar(Rat(1, 1L << K))));

  DualFunctional f0 =
      dual_functional(fx.map, fx.w, fx.table, 0, CScalar(Scalar(0L)), K, rat(2, 3));
  CHECK(f0.tail_coeff_bound.is_zero());
  for (const auto& c : f0.coeff) CHECK(c.is_zero());

  CHECK(code_of([&] {
          dual_functional(fx.map, fx.w, fx.table, 0, CScalar(rat(7, 10)), K, rat(2, 3));
        }) == Errc::LambdaTooLarge);
}

TEST_CASE("functional evaluation pairs jumps with the coefficient table") {
  BetaFixture fx;
  DualFunctional f =
      dual_functional(fx.map, fx.w, fx.table, 0, CScalar(rat(1, 3)), 10, rat(2, 3));

  // Continuous observable: zero value, tail proportional to the sup norm.
  PiecewiseSmooth smooth = PiecewiseSmooth::from_poly(Poly::x());
  EllValue ev = ell_lambda(f, smooth);
  CHECK(ev.value.is_zero());
  CHECK(ev.tail_bound.same(Scalar(2L) * Scalar(Rat(1, 1L << 10))));

  // Jump at depth 0 sits below the k0 cutoff.
  PiecewiseSmooth h0 = PiecewiseSmooth::step(rat(1, 2), OrbTag{0, 0});
  CHECK(ell_lambda(f, h0).value.is_zero());

  // One application pushes the jump to depth 1: contribution (1/2)*(2/3).
  PiecewiseSmooth h1 = apply_transfer(fx.map, fx.w, h0, &fx.table);
  EllValue e1 = ell_lambda(f, h1);
  CHECK(e1.value.re.same(rat(1, 3)));
  CHECK(e1.value.im.is_zero());

  // Single unit jump exactly at depth k0+1 contributes lambda^2 alpha_2.
  PiecewiseSmooth deep =
      PiecewiseSmooth::step(fx.table.orbits[0].points[2].x, OrbTag{0, 2});
  CHECK(ell_lambda(f, deep).value.re.same(rat(1, 4)));

  // Boundary-image tags carry no orbit contribution.
  PiecewiseSmooth at_b = PiecewiseSmooth::step(rat(2, 3), BkTag{1});
  CHECK(ell_lambda(f, at_b).value.is_zero());

  // Linearity, exactly.
  EllValue lhs = ell_lambda(f, h1.scaled(rat(5, 7)) + deep);
  CScalar rhs = e1.value.scaled(rat(5, 7)) + ell_lambda(f, deep).value;
  CHECK((lhs.value - rhs).is_zero());

  CHECK(code_of([&] { ell_lambda(f, PiecewiseSmooth::step(rat(1, 3))); }) ==
        Errc::UntaggedJump);
}

TEST_CASE("rank-one correction has a unit jump at the pivot and nothing deeper") {
  BetaFixture fx;
  RankOneData data = construct_h_K(fx.map, fx.w, fx.table);
  CHECK(data.k0 == 1);
  CHECK(data.pivot.same(rat(1, 2)));
  CHECK(data.normalizer.same(rat(2, 3)));

  auto idx = break_with_tag(data.h_K, OrbTag{0, 1});
  REQUIRE(idx.has_value());
  CHECK(data.h_K.breaks()[*idx].x.same(rat(3, 4)));
  CHECK(data.h_K.jump_at_index(*idx).same(Scalar(1L)));
  for (size_t i = 0; i < data.h_K.breaks().size(); ++i) {
    const PointTag& t = data.h_K.breaks()[i].tag;
    if (std::holds_alternative<OrbTag>(t))
      CHECK(std::get<OrbTag>(t).k <= 1);
  }

  // The functional evaluated on h_K collapses to the single pivot term.
  DualFunctional f =
      dual_functional(fx.map, fx.w, fx.table, 0, CScalar(rat(1, 3)), 10, rat(2, 3));
  EllValue e = ell_lambda(f, data.h_K);
  CHECK(e.value.re.same(rat(1, 2)));
  CHECK(e.value.im.is_zero());

  OrbitTable fresh = discontinuity_orbits(fx.map, 8);
  CHECK(code_of([&] { construct_h_K(fx.map, fx.w, fresh); }) == Errc::PreconditionK0);
}

TEST_CASE("rank-one correction for the four-branch family") {
  PiecewiseMap map = example_map(10, rat(15, 2));
  Weight w = Weight::inverse_abs_derivative(map);
  OrbitTable table = discontinuity_orbits(map, 12);
  table.k0 = find_k0(table, map);

  RankOneData data = construct_h_K(map, w, table);
  CHECK(data.pivot.same(rat(3, 4)));
  CHECK(data.normalizer.same(rat(1, 10)));
  auto idx = break_with_tag(data.h_K, OrbTag{0, 1});
  REQUIRE(idx.has_value());
  CHECK(data.h_K.breaks()[*idx].x.same(rat(1, 2)));
  CHECK(data.h_K.jump_at_index(*idx).same(Scalar(1L)));
}

TEST_CASE("dual eigen-equation residual vanishes for shallow jumps") {
  BetaFixture fx;
  const int K = 10;
  RankOneData data = construct_h_K(fx.map, fx.w, fx.table);
  DualFunctional f =
      dual_functional(fx.map, fx.w, fx.table, 0, CScalar(rat(1, 3)), K, rat(2, 3));

  PiecewiseSmooth h =
      apply_transfer(fx.map, fx.w, PiecewiseSmooth::step(rat(1, 2), OrbTag{0, 0}),
                     &fx.table);

  // The boundary identity: ell(Lh) - lambda ell(h) = lambda^{k0} J(h, a_{k0-1}).
  EllValue eL = ell_lambda(f, apply_transfer(fx.map, fx.w, h, &fx.table));
  EllValue eh = ell_lambda(f, h);
  CScalar boundary = eL.value - f.lambda * eh.value;
  CHECK(boundary.re.same(rat(-2, 9)));
  CHECK(boundary.im.is_zero());

  DualEigenCert cert = dual_eigen_residual(fx.map, fx.w, fx.table, data, f, h);
  CHECK(cert.residual.is_zero());
  CHECK(cert.within());

  // Continuous h and the lambda = 0 functional are degenerate exact cases.
  PiecewiseSmooth smooth = PiecewiseSmooth::from_poly(Poly::x());
  CHECK(dual_eigen_residual(fx.map, fx.w, fx.table, data, f, smooth).residual.is_zero());
  DualFunctional f0 =
      dual_functional(fx.map, fx.w, fx.table, 0, CScalar(Scalar(0L)), K, rat(2, 3));
  DualEigenCert z = dual_eigen_residual(fx.map, fx.w, fx.table, data, f0, h);
  CHECK(z.residual.is_zero());
  CHECK(z.allowance.is_zero());

  // Complex lambda on the imaginary axis stays exact as well.
  DualFunctional fi = dual_functional(fx.map, fx.w, fx.table, 0,
                                      CScalar(Scalar(0L), rat(1, 3)), K, rat(2, 3));
  CHECK(dual_eigen_residual(fx.map, fx.w, fx.table, data, fi, h).residual.is_zero());
}

TEST_CASE("truncated jumps are absorbed by the reported allowance") {
  BetaFixture fx;
  const int K = 10;
  RankOneData data = construct_h_K(fx.map, fx.w, fx.table);
  DualFunctional f =
      dual_functional(fx.map, fx.w, fx.table, 0, CScalar(rat(1, 3)), K, rat(2, 3));

  // Unit jump exactly at depth K: its image leaves the truncation window, so
  // the residual equals |lambda|*(1/2)^K = 1/3072 and must sit inside the
  // allowance.
  PiecewiseSmooth h =
      PiecewiseSmooth::step(fx.table.orbits[0].points[K].x, OrbTag{0, K});
  DualEigenCert cert = dual_eigen_residual(fx.map, fx.w, fx.table, data, f, h);
  CHECK(cert.residual.same(Scalar(Rat(1, 3072))));
  CHECK(!cert.residual.is_zero());
  CHECK(cert.within());
}

TEST_CASE("axis grid certification over an observable suite") {
  BetaFixture fx;
  std::vector<PiecewiseSmooth> suite;
  suite.push_back(PiecewiseSmooth::from_poly(Poly::x()));
  suite.push_back(apply_transfer(fx.map, fx.w,
                                 PiecewiseSmooth::step(rat(1, 2), OrbTag{0, 0}),
                                 &fx.table));
  suite.push_back(PiecewiseSmooth::step(fx.table.orbits[0].points[3].x, OrbTag{0, 3}) +
                  PiecewiseSmooth::from_poly(Poly::affine(Scalar(1L), rat(1, 4))));

  std::vector<CScalar> grid = lambda_grid(rat(2, 3));
  REQUIRE(grid.size() == 32);
  CHECK(grid[7].re.same(rat(3, 5)));  // 0.9 * 2/3 at the end of the first ray
  CHECK(grid[7].im.is_zero());

  std::vector<GridCertRow> rows =
      certify_grid(fx.map, fx.w, fx.table, 0, 10, rat(2, 3), suite);
  REQUIRE(rows.size() == 32);
  for (const auto& r : rows) {
    CHECK(r.pass);
    CHECK(r.residual.is_zero());  // depth-3 jumps stay inside K = 10
  }

  std::vector<GridCertRow> serial =
      certify_grid(fx.map, fx.w, fx.table, 0, 10, rat(2, 3), suite, false);
  REQUIRE(serial.size() == rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].residual.same(serial[i].residual));
    CHECK(rows[i].allowance.same(serial[i].allowance));
    CHECK(rows[i].pass == serial[i].pass);
  }

  std::string json = grid_cert_json(rows);
  CHECK(json.find("\"verdict\": \"pass\"") != std::string::npos);
  CHECK(json.find("\"fail\"") == std::string::npos);
}

TEST_CASE("enclosure-mode certificates stay decidable") {
  Scalar rho = around(Rat(15, 2), 100);
  PiecewiseMap map = example_map(10, rho);
  Weight w = Weight::inverse_abs_derivative(map);
  OrbitTable table = discontinuity_orbits(map, 8);
  table.k0 = 1;  // certified at the exact center parameter

  // The orbit never visits the enclosure-slope branch, so even though the
  // points are enclosures the piecewise-constant weight values are exact.
  AlphaSequence a = alpha_sequence(table, w, 0, 4);
  CHECK(a.at(1).same(Scalar(10L)));
  CHECK(a.at(2).same(rat(100, 7)));
  CHECK(a.at(4).same(rat(10000, 49)));

  RankOneData data = construct_h_K(map, w, table);
  DualFunctional f =
      dual_functional(map, w, table, 0, CScalar(rat(1, 20)), 6, rat(1, 10));
  PiecewiseSmooth h =
      apply_transfer(map, w, PiecewiseSmooth::constant(Scalar(1L)), &table);

  DualEigenCert cert = dual_eigen_residual(map, w, table, data, f, h);
  Rat tiny(Int(1), Int(1) << 60);
  CHECK(cert.residual.contains(Rat(0)));
  CHECK(cert.residual.hi() < tiny);
  CHECK(cert.within());
}
