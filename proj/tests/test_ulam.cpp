#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "tfspec/transfer.hpp"
#include "tfspec/ulam.hpp"

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

Rat mkrat(long n, long d) {
  Rat r(n, d);
  r.canonicalize();
  return r;
}

PiecewiseMap t10_exact() { return example_map(10, rat(15, 2)); }

// Left branch 5x/2 - x^2 (monotone onto [0,1]), right branch 2x - 1.
PiecewiseMap curved_map() {
  return make_map({Scalar(0L), rat(1, 2), Scalar(1L)},
                  {Poly({Scalar(0L), rat(5, 2), Scalar(-1L)}),
                   Poly::affine(Scalar(-1L), Scalar(2L))});
}

Weight srb(const PiecewiseMap& map) { return Weight::inverse_abs_derivative(map); }

Scalar ps_integral(const PiecewiseSmooth& h, const Scalar& a, const Scalar& b) {
  const auto& bks = h.breaks();
  const auto& ps = h.pieces();
  Scalar total(0L);
  for (size_t i = 0; i < ps.size(); ++i) {
    Scalar lo = (i == 0) ? Scalar(0L) : bks[i - 1].x;
    Scalar hi = (i == bks.size()) ? Scalar(1L) : bks[i].x;
    Scalar slo = lo.max(a);
    Scalar shi = hi.min(b);
    if (!slo.certainly_lt(shi)) continue;
    total += integral(ps[i], slo, shi);
  }
  return total;
}

PiecewiseSmooth reference_observable() {
  return PiecewiseSmooth::from_poly(Poly::x() * Poly::x()) +
         PiecewiseSmooth::step(rat(1, 3));
}

UlamMatrix swap_matrix() {
  UlamMatrix mat;
  mat.M = 2;
  mat.policy = BinPolicy::Uniform;
  mat.edges = {Scalar(0L), rat(1, 2), Scalar(1L)};
  mat.cols = {{{1, rat(1, 4)}}, {{0, rat(1, 4)}}};
  return mat;
}

}  // namespace

TEST_CASE("bin edges follow the uniform and aligned policies") {
  PiecewiseMap dbl = doubling_map();

  std::vector<Scalar> uni = bin_edges(dbl, 4, BinPolicy::Uniform);
  REQUIRE(uni.size() == 5);
  for (int k = 0; k <= 4; ++k) CHECK(uni[static_cast<size_t>(k)].same(rat(k, 4)));

  // The doubling map's only interior boundary datum is the breakpoint 1/2,
  // so the aligned policy reproduces the uniform grid.
  std::vector<Scalar> ali = bin_edges(dbl, 4, BinPolicy::GammaAligned);
  REQUIRE(ali.size() == 5);
  for (size_t k = 0; k < 5; ++k) CHECK(ali[k].same(uni[k]));

  // beta map: seeds {1/2 (branch image), 2/3 (breakpoint)} leave segments of
  // length 1/2, 1/6, 1/3; largest-quotient rounding splits six bins 3/1/2.
  std::vector<Scalar> beta = bin_edges(beta_map(mkrat(3, 2)), 6, BinPolicy::GammaAligned);
  const long num[] = {0, 1, 2, 3, 4, 5, 6};
  REQUIRE(beta.size() == 7);
  for (size_t k = 0; k < 7; ++k) CHECK(beta[k].same(rat(num[k], 6)));

  // Four-branch example: seeds {7/10, 3/4, 4/5, 9/10} (the last branch image
  // 3/4 joins the breakpoints); the long first segment absorbs every extra.
  std::vector<Scalar> t10 = bin_edges(t10_exact(), 8, BinPolicy::GammaAligned);
  REQUIRE(t10.size() == 9);
  CHECK(t10[0].same(Scalar(0L)));
  CHECK(t10[1].same(rat(7, 40)));
  CHECK(t10[2].same(rat(7, 20)));
  CHECK(t10[3].same(rat(21, 40)));
  CHECK(t10[4].same(rat(7, 10)));
  CHECK(t10[5].same(rat(3, 4)));
  CHECK(t10[6].same(rat(4, 5)));
  CHECK(t10[7].same(rat(9, 10)));
  CHECK(t10[8].same(Scalar(1L)));

  std::vector<Scalar> fine = bin_edges(t10_exact(), 100, BinPolicy::GammaAligned);
  REQUIRE(fine.size() == 101);
  for (size_t k = 0; k + 1 < fine.size(); ++k) CHECK(fine[k].certainly_lt(fine[k + 1]));

  CHECK(code_of([&] { bin_edges(dbl, 1, BinPolicy::Uniform); }) == Errc::InvalidInput);
  CHECK(code_of([&] { bin_edges(dbl, 0, BinPolicy::GammaAligned); }) == Errc::InvalidInput);
  CHECK(code_of([&] { bin_edges(t10_exact(), 4, BinPolicy::GammaAligned); }) ==
        Errc::DegenerateBin);
}

TEST_CASE("transition masses match hand integrals") {
  PiecewiseMap dbl = doubling_map();
  Weight half = Weight::constant(rat(1, 2));

  // Half-weighted doubling on two bins: every quarter of mass ends up in
  // every slot, mass(i,j) = (1/2) * (1/2) * |bin|.
  UlamMatrix m2 = ulam_matrix(dbl, half, 2, BinPolicy::Uniform);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(m2.mass_at(i, j).same(rat(1, 4)));
  CHECK(m2.column_mass(0).same(rat(1, 2)));
  CHECK(m2.column_mass(1).same(rat(1, 2)));
  CHECK(m2.row_mass(0).same(rat(1, 2)));
  CHECK(m2.total_mass().same(Scalar(1L)));
  CHECK(m2.bin_width(1).same(rat(1, 2)));

  // Four bins: column j feeds rows 2j and 2j+1 (mod 4) with an eighth each.
  UlamMatrix m4 = ulam_matrix(dbl, srb(dbl), 4, BinPolicy::Uniform);
  for (int j = 0; j < 4; ++j) {
    const int r0 = (2 * j) % 4, r1 = (2 * j + 1) % 4;
    CHECK(m4.mass_at(r0, j).same(rat(1, 8)));
    CHECK(m4.mass_at(r1, j).same(rat(1, 8)));
    CHECK(m4.column_mass(j).same(rat(1, 4)));
  }
  CHECK(m4.mass_at(2, 0).is_zero());
  CHECK(m4.mass_at(0, 1).is_zero());

  // Orientation-reversing branch: the tent map with constant weight 1/2
  // reproduces the doubling masses.
  UlamMatrix tent = ulam_matrix(tent_map(), half, 2, BinPolicy::Uniform);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(tent.mass_at(i, j).same(rat(1, 4)));

  // beta map on the aligned six-bin grid, weight 2/3 = 1/|T'|: masses are
  // plain lengths of the preimage slices.
  PiecewiseMap beta = beta_map(mkrat(3, 2));
  UlamMatrix b6 = ulam_matrix(beta, Weight::constant(rat(2, 3)), 6, BinPolicy::GammaAligned);
  CHECK(b6.mass_at(0, 0).same(rat(1, 9)));
  CHECK(b6.mass_at(1, 0).same(rat(1, 18)));
  CHECK(b6.mass_at(0, 4).same(rat(1, 9)));
  CHECK(b6.mass_at(1, 4).same(rat(1, 18)));
  for (int j = 0; j < 6; ++j) CHECK(b6.column_mass(j).same(b6.bin_width(j)));

  CHECK(code_of([&] { m2.mass_at(2, 0); }) == Errc::InvalidInput);
  CHECK(code_of([&] { m2.bin_width(-1); }) == Errc::InvalidInput);
}

TEST_CASE("row masses aggregate the transferred density") {
  PiecewiseMap map = t10_exact();
  Weight w = srb(map);
  UlamMatrix mat = ulam_matrix(map, w, 100, BinPolicy::GammaAligned);

  PiecewiseSmooth one = PiecewiseSmooth::constant(Scalar(1L));
  PiecewiseSmooth L1 = apply_transfer(map, w, one);
  for (int i = 0; i < mat.M; ++i) {
    Scalar direct = ps_integral(L1, mat.edges[static_cast<size_t>(i)],
                                mat.edges[static_cast<size_t>(i) + 1]);
    CHECK(mat.row_mass(i).same(direct));
  }
  CHECK(mat.total_mass().same(compute_norm(L1, NormKind::L1)));
  for (int j = 0; j < mat.M; ++j) CHECK(mat.column_mass(j).same(mat.bin_width(j)));
}

TEST_CASE("curved branches route preimages through root enclosures") {
  PiecewiseMap map = curved_map();
  Weight one = Weight::constant(Scalar(1L));
  UlamMatrix mat = ulam_matrix(map, one, 2, BinPolicy::Uniform);

  // With unit weight the mass of a slice is the length of its image, so both
  // halves of the curved branch carry exactly 1/2 (up to the root enclosure).
  CHECK(mat.mass_at(0, 0).contains(mkrat(1, 2)));
  CHECK(mat.mass_at(1, 0).contains(mkrat(1, 2)));
  CHECK(mat.mass_at(0, 0).width() < Rat(1, 1L << 40));
  CHECK(mat.mass_at(0, 1).same(rat(1, 2)));
  CHECK(mat.mass_at(1, 1).same(rat(1, 2)));
  CHECK(mat.column_mass(0).contains(Rat(1)));
  CHECK(mat.total_mass().contains(Rat(2)));
}

TEST_CASE("mass layout is identical across assembly orders") {
  PiecewiseMap beta = beta_map(mkrat(3, 2));
  Weight w = srb(beta);
  UlamMatrix par = ulam_matrix(beta, w, 16, BinPolicy::GammaAligned, true);
  UlamMatrix ser = ulam_matrix(beta, w, 16, BinPolicy::GammaAligned, false);
  REQUIRE(par.edges.size() == ser.edges.size());
  for (size_t k = 0; k < par.edges.size(); ++k) CHECK(par.edges[k].same(ser.edges[k]));
  REQUIRE(par.cols.size() == ser.cols.size());
  for (size_t j = 0; j < par.cols.size(); ++j) {
    REQUIRE(par.cols[j].size() == ser.cols[j].size());
    for (size_t k = 0; k < par.cols[j].size(); ++k) {
      CHECK(par.cols[j][k].first == ser.cols[j][k].first);
      CHECK(par.cols[j][k].second.same(ser.cols[j][k].second));
    }
  }
}

TEST_CASE("projection consistency contracts like the bin count") {
  PiecewiseMap dbl = doubling_map();
  Weight half = Weight::constant(rat(1, 2));

  // Two bins, h = x^2: matrix image integrals are 1/6 per bin against true
  // values 5/48 and 11/48, so the distance is 2 * 3/48.
  UlamMatrix m2 = ulam_matrix(dbl, half, 2, BinPolicy::Uniform);
  PiecewiseSmooth x2 = PiecewiseSmooth::from_poly(Poly::x() * Poly::x());
  CHECK(ulam_consistency_error(dbl, half, m2, x2).same(rat(1, 8)));

  // Smooth part plus a jump off the grid: the error scales like 1/M.
  PiecewiseSmooth href = reference_observable();
  double err[3];
  const int Ms[3] = {64, 256, 1024};
  for (int t = 0; t < 3; ++t) {
    UlamMatrix mat = ulam_matrix(dbl, half, Ms[t], BinPolicy::Uniform);
    err[t] = ulam_consistency_error(dbl, half, mat, href).mid().get_d();
  }
  CHECK(err[0] > err[1]);
  CHECK(err[1] > err[2]);
  CHECK(err[0] / err[1] > 3.2);
  CHECK(err[0] / err[1] < 4.8);
  CHECK(err[1] / err[2] > 3.2);
  CHECK(err[1] / err[2] < 4.8);
  const double slope = std::log(err[0] / err[2]) / std::log(16.0);
  CHECK(slope > 0.8);
  CHECK(slope < 1.2);

  PiecewiseMap beta = beta_map(mkrat(3, 2));
  Weight wb = srb(beta);
  UlamMatrix b32 = ulam_matrix(beta, wb, 32, BinPolicy::GammaAligned);
  UlamMatrix b128 = ulam_matrix(beta, wb, 128, BinPolicy::GammaAligned);
  Scalar e32 = ulam_consistency_error(beta, wb, b32, href);
  Scalar e128 = ulam_consistency_error(beta, wb, b128, href);
  CHECK(e128.certainly_lt(e32));

  UlamMatrix empty;
  CHECK(code_of([&] { ulam_consistency_error(dbl, half, empty, x2); }) == Errc::InvalidInput);
}

TEST_CASE("discretization spectrum ordering and diagnostics") {
  // Hand-built two-bin swap: averaged matrix [[0, 1/2], [1/2, 0]], so the
  // eigenvalues are the scaled unit roots +-1/2.
  UlamMatrix swap = swap_matrix();
  EigenResult er = eigen_spectrum(swap);
  CHECK(er.M == 2);
  REQUIRE(er.values.size() == 2);
  CHECK(std::abs(er.values[0] - std::complex<double>(0.5, 0.0)) < 1e-12);
  CHECK(std::abs(er.values[1] - std::complex<double>(-0.5, 0.0)) < 1e-12);
  CHECK(er.condition >= 1.0);
  CHECK(er.condition < 10.0);

  // Doubling with its SRB weight: the averaged matrix is the full-shift
  // block average whose fourth power is the rank-one uniform matrix, so the
  // spectrum is 1 with everything else nilpotent.  The defective zero block
  // is resolved no better than the fourth root of machine precision.
  PiecewiseMap dbl = doubling_map();
  UlamMatrix m16 = ulam_matrix(dbl, srb(dbl), 16, BinPolicy::Uniform);
  EigenResult dd = eigen_spectrum(m16);
  REQUIRE(dd.values.size() == 16);
  CHECK(std::abs(dd.values[0] - std::complex<double>(1.0, 0.0)) < 1e-10);
  CHECK(std::abs(dd.values[1]) < 1e-3);
  for (const auto& z : dd.values) CHECK(std::abs(z) < 1.0 + 1e-10);
  CHECK(dd.condition > 1e2);

  UlamMatrix overflow = swap_matrix();
  Int big = 1;
  for (int k = 0; k < 400; ++k) big *= 10;
  overflow.cols[0] = {{1, Scalar(Rat(big))}};
  CHECK(code_of([&] { eigen_spectrum(overflow); }) == Errc::SolverFailure);

  UlamMatrix malformed;
  CHECK(code_of([&] { eigen_spectrum(malformed); }) == Errc::InvalidInput);
}

TEST_CASE("beta map spectrum fills the essential disc with a thin fringe") {
  PiecewiseMap beta = beta_map(mkrat(3, 2));
  Weight w = Weight::constant(rat(2, 3));
  UlamMatrix mat = ulam_matrix(beta, w, 512, BinPolicy::GammaAligned);
  EigenResult er = eigen_spectrum(mat);
  REQUIRE(er.values.size() == 512);
  // Columns sum to the bin widths, so the averaged matrix is (similar to a)
  // column-stochastic one: the leading eigenvalue is exactly 1.
  CHECK(std::abs(er.values[0] - std::complex<double>(1.0, 0.0)) < 1e-8);

  // Besides 1, the operator owns a conjugate pair of genuine isolated
  // eigenvalues at -0.332 +- 0.653i (modulus 0.7327): the reciprocals 1/(bw)
  // of the roots of sum_k d_k w^k = 1, where d = 1,0,1,0,0,0,0,0,1,... are
  // the digits of the base-3/2 expansion of 1.  The discretization walks
  // toward the pair from inside (modulus 0.6905 / 0.7164 / 0.7205 at
  // M = 128 / 256 / 512).
  CHECK(std::abs(er.values[1]) > 0.69);
  CHECK(std::abs(er.values[1]) < 0.75);
  CHECK(er.values[1].real() > -0.40);
  CHECK(er.values[1].real() < -0.25);
  CHECK(std::abs(std::abs(er.values[1].imag()) - 0.65) < 0.05);
  CHECK(std::abs(er.values[1] - std::conj(er.values[2])) < 1e-9);

  // Everything else hugs the essential disc of radius 2/3: a genuine gap
  // below the leading eigenvalue, and at most a handful of outliers.
  int fringe = 0;
  for (size_t k = 1; k < er.values.size(); ++k) {
    CHECK(std::abs(er.values[k]) < 0.80);
    if (std::abs(er.values[k]) > 2.0 / 3.0 + 0.05) ++fringe;
  }
  CHECK(fringe <= 6);
}

TEST_CASE("spectral report aggregates invariants") {
  PiecewiseMap dbl = doubling_map();
  Weight half = Weight::constant(rat(1, 2));
  SpectralReport rep = spectral_report(dbl, half, {8, 16}, NRange{1, 8});
  CHECK(rep.markov);
  CHECK(rep.lambda_inf.is_zero());
  CHECK(rep.lambda_sup.is_zero());
  CHECK(rep.bv_radius.same(rat(1, 2)));
  CHECK(rep.label == "discretization spectrum");
  REQUIRE(rep.spectra.size() == 2);
  CHECK(rep.spectra[0].M == 8);
  CHECK(rep.spectra[1].M == 16);
  CHECK(std::abs(rep.spectra[0].values[0] - std::complex<double>(1.0, 0.0)) < 1e-10);
  CHECK(std::abs(rep.spectra[1].values[0] - std::complex<double>(1.0, 0.0)) < 1e-10);
  REQUIRE(rep.consistency_error.size() == 2);
  CHECK(rep.consistency_error[1].certainly_lt(rep.consistency_error[0]));

  std::string csv = eigenvalue_csv(rep);
  CHECK(csv.rfind("re,im,modulus,M\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 8 + 16);
  CHECK(csv.find(",8\n") != std::string::npos);
  CHECK(csv.find(",16\n") != std::string::npos);

  std::string svg = spectral_svg(rep);
  CHECK(svg.find("discretization spectrum (M = 8, 16)") != std::string::npos);
  CHECK(svg.find("radius-orbit") != std::string::npos);
  CHECK(svg.find("radius-bv") != std::string::npos);
  CHECK(svg.find("0.500000") != std::string::npos);
  CHECK(svg.find("class=\"ev\"") != std::string::npos);

  // Determinism across runs, including the parallel scheduling.
  SpectralReport again = spectral_report(dbl, half, {8, 16}, NRange{1, 8});
  CHECK(eigenvalue_csv(again) == csv);
  CHECK(spectral_svg(again) == svg);
}

TEST_CASE("coinciding reference radii collapse to one circle") {
  PiecewiseMap beta = beta_map(mkrat(3, 2));
  Weight w = Weight::constant(rat(2, 3));
  SpectralReport rep = spectral_report(beta, w, {6}, NRange{1, 8});
  CHECK_FALSE(rep.markov);
  CHECK(rep.lambda_sup.contains(mkrat(2, 3)));
  CHECK(rep.lambda_inf.contains(mkrat(2, 3)));
  CHECK(rep.bv_radius.same(rat(2, 3)));

  std::string svg = spectral_svg(rep);
  CHECK(svg.find("radius-coincident") != std::string::npos);
  CHECK(svg.find("radius-orbit") == std::string::npos);
  CHECK(svg.find("0.666667") != std::string::npos);
}

TEST_CASE("report separates orbit and variation radii on the example family") {
  PiecewiseMap map = t10_exact();
  Weight w = srb(map);
  SpectralReport rep = spectral_report(map, w, {20}, NRange{1, 16});
  CHECK_FALSE(rep.markov);
  CHECK(rep.bv_radius.same(rat(7, 10)));
  CHECK(rep.lambda_sup.certainly_gt(rat(3, 10)));
  CHECK(rep.lambda_sup.certainly_lt(rat(9, 20)));

  std::string svg = spectral_svg(rep);
  CHECK(svg.find("radius-orbit") != std::string::npos);
  CHECK(svg.find("0.700000") != std::string::npos);
  std::string csv = eigenvalue_csv(rep);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 21);

  // Aligned-family member with enclosure data end to end.
  ExampleMapResult fam = make_example_map(10, Itinerary::thue_morse(), 160);
  Weight wf = srb(fam.map);
  SpectralReport frep = spectral_report(fam.map, wf, {12}, NRange{1, 12});
  CHECK(frep.bv_radius.same(rat(7, 10)));
  CHECK(frep.lambda_sup.certainly_gt(rat(9, 100)));
  CHECK(frep.lambda_sup.certainly_lt(rat(23, 200)));
  CHECK(frep.spectra[0].values.size() == 12);

  CHECK(code_of([&] { spectral_report(map, w, {}, NRange{1, 4}); }) == Errc::InvalidInput);
  CHECK(code_of([&] { spectral_report(map, w, {1}, NRange{1, 4}); }) == Errc::InvalidInput);
  CHECK(code_of([&] { spectral_report(map, w, {8}, NRange{0, 4}); }) == Errc::InvalidInput);
  CHECK(code_of([&] { spectral_report(map, w, {8}, NRange{3, 2}); }) == Errc::InvalidInput);
}

TEST_CASE("plot output degrades gracefully") {
  SpectralReport rep;
  rep.label = "discretization spectrum";
  rep.lambda_inf = rat(3, 10);
  rep.lambda_sup = rat(3, 10);
  rep.bv_radius = rat(3, 10);

  std::string svg = spectral_svg(rep);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("radius-coincident") != std::string::npos);
  CHECK(svg.find("class=\"ev\"") == std::string::npos);
  CHECK(svg.find("0.300000") != std::string::npos);
  CHECK(eigenvalue_csv(rep) == "re,im,modulus,M\n");

  rep.lambda_inf = Scalar(0L);
  rep.lambda_sup = Scalar(0L);
  rep.bv_radius = rat(1, 2);
  std::string two = spectral_svg(rep);
  CHECK(two.find("radius-orbit") != std::string::npos);
  CHECK(two.find("radius-bv") != std::string::npos);
  CHECK(two.find("r=\"0.00\"") != std::string::npos);
}
