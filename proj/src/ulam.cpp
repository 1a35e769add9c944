#include "tfspec/ulam.hpp"

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <utility>

#include "tfspec/map_core.hpp"
#include "tfspec/poly.hpp"
#include "tfspec/transfer.hpp"

namespace tfspec {

namespace {

Rat mkrat(long num, long den) {
  Rat r(num, den);
  r.canonicalize();
  return r;
}

// The weight piece covering the whole branch domain (weight breakpoints lie
// within the map's breakpoint set, so exactly one piece covers each branch).
const Poly& ulam_weight_piece(const Weight& w, const Branch& br) {
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

// Exact integral of a piecewise polynomial over [a, b] within [0, 1].
Scalar piecewise_integral(const PiecewiseSmooth& h, const Scalar& a, const Scalar& b) {
  const auto& bks = h.breaks();
  const auto& ps = h.pieces();
  Scalar total(0L);
  for (size_t i = 0; i < ps.size(); ++i) {
    const Scalar& lo = (i == 0) ? Scalar(0L) : bks[i - 1].x;
    const Scalar& hi = (i == bks.size()) ? Scalar(1L) : bks[i].x;
    Scalar seg_lo = lo.max(a);
    Scalar seg_hi = hi.min(b);
    if (!seg_lo.certainly_lt(seg_hi)) continue;
    total += integral(ps[i], seg_lo, seg_hi);
  }
  return total;
}

struct BranchCtx {
  const Branch* br = nullptr;
  Poly integrand;  // phi * T' * orientation, i.e. phi * |T'| on the branch
  bool affine = true;
  Poly inv;  // exact inverse, affine branches only
};

std::vector<BranchCtx> branch_contexts(const PiecewiseMap& map, const Weight& weight) {
  std::vector<BranchCtx> out;
  out.reserve(map.branches.size());
  for (const Branch& br : map.branches) {
    BranchCtx c;
    c.br = &br;
    c.integrand = ulam_weight_piece(weight, br) * br.poly.derivative();
    if (br.orientation < 0) c.integrand = c.integrand.scaled(Scalar(-1L));
    c.affine = br.poly.degree() <= 1;
    if (c.affine) c.inv = affine_inverse(br);
    out.push_back(std::move(c));
  }
  return out;
}

// Masses of one column: bin_j is sliced against every branch domain, the
// slice image is intersected with each target bin, and the overlap is pulled
// back (exactly through affine inverses, through certified root enclosures
// otherwise) before integrating phi * |T'|.
std::vector<std::pair<int, Scalar>> build_column(const std::vector<BranchCtx>& ctx,
                                                 const std::vector<Scalar>& edges,
                                                 const std::vector<Rat>& mids, int j) {
  const int M = static_cast<int>(edges.size()) - 1;
  std::map<int, Scalar> acc;
  for (const BranchCtx& c : ctx) {
    const Branch& br = *c.br;
    Scalar slo = edges[static_cast<size_t>(j)].max(br.lo);
    Scalar shi = edges[static_cast<size_t>(j) + 1].min(br.hi);
    if (!slo.certainly_lt(shi)) continue;  // bin and branch domain do not overlap
    Scalar ylo = br.poly.eval(slo);
    Scalar yhi = br.poly.eval(shi);
    if (br.orientation < 0) std::swap(ylo, yhi);
    // First candidate row from the midpoint grid; any row with a certified
    // overlap sits at or above the located index, the extra step back only
    // absorbs enclosure fuzz.
    int i0 = static_cast<int>(std::upper_bound(mids.begin(), mids.end(), ylo.mid()) -
                              mids.begin()) -
             1;
    i0 = std::max(0, i0 - 1);
    for (int i = i0; i < M; ++i) {
      if (edges[static_cast<size_t>(i)].certainly_ge(yhi)) break;  // image exhausted
      Scalar olo = edges[static_cast<size_t>(i)].max(ylo);
      Scalar ohi = edges[static_cast<size_t>(i) + 1].min(yhi);
      if (!olo.certainly_lt(ohi)) continue;  // grazing overlap carries no mass
      Scalar xa, xb;
      if (c.affine) {
        xa = c.inv.eval(olo);
        xb = c.inv.eval(ohi);
      } else {
        xa = olo.same(ylo) ? (br.orientation > 0 ? slo : shi)
                           : monotone_root(br.poly, olo, slo, shi);
        xb = ohi.same(yhi) ? (br.orientation > 0 ? shi : slo)
                           : monotone_root(br.poly, ohi, slo, shi);
      }
      if (br.orientation < 0) std::swap(xa, xb);
      acc[i] += integral(c.integrand, xa, xb);
    }
  }
  return std::vector<std::pair<int, Scalar>>(acc.begin(), acc.end());
}

}  // namespace

// ---------------------------------------------------------------------------
// Bins

std::vector<Scalar> bin_edges(const PiecewiseMap& map, int M, BinPolicy policy) {
  if (M < 2) fail(Errc::InvalidInput, "bin count must be at least 2");
  std::vector<Scalar> edges;
  edges.reserve(static_cast<size_t>(M) + 1);
  if (policy == BinPolicy::Uniform) {
    for (int k = 0; k <= M; ++k) edges.push_back(Scalar(mkrat(k, M)));
    return edges;
  }

  // Seed with interior breakpoints and interior one-sided branch images.
  const Scalar zero(0L), one(1L);
  std::vector<Scalar> seeds;
  for (size_t i = 1; i + 1 < map.breakpoints.size(); ++i) seeds.push_back(map.breakpoints[i]);
  for (const Branch& br : map.branches) {
    for (const Scalar* y : {&br.lo_image, &br.hi_image}) {
      if (y->certainly_gt(zero) && y->certainly_lt(one))
        seeds.push_back(*y);
      else if (!(y->certainly_le(zero) || y->certainly_ge(one)))
        fail(Errc::PrecisionInsufficient, "cannot decide whether a branch image is interior");
    }
  }
  std::sort(seeds.begin(), seeds.end(), [](const Scalar& a, const Scalar& b) {
    if (a.same(b)) return false;
    return a.decided_lt(b);
  });
  std::vector<Scalar> gamma;
  gamma.push_back(zero);
  for (const Scalar& s : seeds) {
    if (!gamma.empty() && (s.same(gamma.back()) || s.cmp_eq(gamma.back()) == Trool::True))
      continue;
    gamma.push_back(s);
  }
  gamma.push_back(one);

  const int segments = static_cast<int>(gamma.size()) - 1;
  if (M < segments)
    fail(Errc::DegenerateBin, "bin count is smaller than the number of aligned segments");

  // Largest-quotient apportionment of the remaining bins by segment length.
  std::vector<Scalar> lengths;
  std::vector<int> counts(static_cast<size_t>(segments), 1);
  std::vector<Rat> quotients;
  for (int t = 0; t < segments; ++t) {
    lengths.push_back(gamma[static_cast<size_t>(t) + 1] - gamma[static_cast<size_t>(t)]);
    quotients.push_back(lengths.back().mid());
  }
  for (int extra = M - segments; extra > 0; --extra) {
    int best = 0;
    for (int t = 1; t < segments; ++t)
      if (quotients[static_cast<size_t>(t)] > quotients[static_cast<size_t>(best)]) best = t;
    int& k = counts[static_cast<size_t>(best)];
    ++k;
    quotients[static_cast<size_t>(best)] = lengths[static_cast<size_t>(best)].mid() / k;
  }

  for (int t = 0; t < segments; ++t) {
    edges.push_back(gamma[static_cast<size_t>(t)]);
    for (int q = 1; q < counts[static_cast<size_t>(t)]; ++q)
      edges.push_back(gamma[static_cast<size_t>(t)] +
                      lengths[static_cast<size_t>(t)] *
                          Scalar(mkrat(q, counts[static_cast<size_t>(t)])));
  }
  edges.push_back(one);

  for (size_t k = 0; k + 1 < edges.size(); ++k)
    if (!edges[k].certainly_lt(edges[k + 1]))
      fail(Errc::DegenerateBin, "bin edges cannot be certified distinct");
  return edges;
}

// ---------------------------------------------------------------------------
// Discretized operator

Scalar UlamMatrix::bin_width(int i) const {
  if (i < 0 || i >= M) fail(Errc::InvalidInput, "bin index out of range");
  return edges[static_cast<size_t>(i) + 1] - edges[static_cast<size_t>(i)];
}

Scalar UlamMatrix::mass_at(int i, int j) const {
  if (i < 0 || i >= M || j < 0 || j >= M) fail(Errc::InvalidInput, "bin index out of range");
  const auto& col = cols[static_cast<size_t>(j)];
  auto it = std::lower_bound(col.begin(), col.end(), i,
                             [](const std::pair<int, Scalar>& e, int row) { return e.first < row; });
  if (it != col.end() && it->first == i) return it->second;
  return Scalar(0L);
}

Scalar UlamMatrix::row_mass(int i) const {
  if (i < 0 || i >= M) fail(Errc::InvalidInput, "bin index out of range");
  Scalar sum(0L);
  for (const auto& col : cols)
    for (const auto& [row, m] : col)
      if (row == i) sum += m;
  return sum;
}

Scalar UlamMatrix::column_mass(int j) const {
  if (j < 0 || j >= M) fail(Errc::InvalidInput, "bin index out of range");
  Scalar sum(0L);
  for (const auto& [row, m] : cols[static_cast<size_t>(j)]) sum += m;
  return sum;
}

Scalar UlamMatrix::total_mass() const {
  Scalar sum(0L);
  for (const auto& col : cols)
    for (const auto& [row, m] : col) sum += m;
  return sum;
}

UlamMatrix ulam_matrix(const PiecewiseMap& map, const Weight& weight, int M,
                       BinPolicy policy, bool parallel) {
  UlamMatrix out;
  out.M = M;
  out.policy = policy;
  out.edges = bin_edges(map, M, policy);
  const std::vector<BranchCtx> ctx = branch_contexts(map, weight);
  std::vector<Rat> mids;
  mids.reserve(out.edges.size());
  for (const Scalar& e : out.edges) mids.push_back(e.mid());
  out.cols.assign(static_cast<size_t>(M), {});

  if (parallel) {
    std::exception_ptr err;
#ifdef TFSPEC_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long j = 0; j < static_cast<long>(M); ++j) {
      try {
        out.cols[static_cast<size_t>(j)] =
            build_column(ctx, out.edges, mids, static_cast<int>(j));
      } catch (...) {
#ifdef TFSPEC_HAVE_OPENMP
#pragma omp critical
#endif
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
  } else {
    for (int j = 0; j < M; ++j)
      out.cols[static_cast<size_t>(j)] = build_column(ctx, out.edges, mids, j);
  }
  return out;
}

Scalar ulam_consistency_error(const PiecewiseMap& map, const Weight& weight,
                              const UlamMatrix& mat, const PiecewiseSmooth& h) {
  const int M = mat.M;
  if (M < 2 || static_cast<int>(mat.edges.size()) != M + 1 ||
      static_cast<int>(mat.cols.size()) != M)
    fail(Errc::InvalidInput, "malformed discretization matrix");

  std::vector<Scalar> avg;
  avg.reserve(static_cast<size_t>(M));
  for (int j = 0; j < M; ++j)
    avg.push_back(piecewise_integral(h, mat.edges[static_cast<size_t>(j)],
                                     mat.edges[static_cast<size_t>(j) + 1]) /
                  mat.bin_width(j));

  std::vector<Scalar> img(static_cast<size_t>(M), Scalar(0L));
  for (int j = 0; j < M; ++j)
    for (const auto& [i, m] : mat.cols[static_cast<size_t>(j)])
      img[static_cast<size_t>(i)] += m * avg[static_cast<size_t>(j)];

  PiecewiseSmooth Lh = apply_transfer(map, weight, h);
  Scalar err(0L);
  for (int i = 0; i < M; ++i)
    err += (img[static_cast<size_t>(i)] -
            piecewise_integral(Lh, mat.edges[static_cast<size_t>(i)],
                               mat.edges[static_cast<size_t>(i) + 1]))
               .abs();
  return err;
}

// ---------------------------------------------------------------------------
// Discretization spectrum

EigenResult eigen_spectrum(const UlamMatrix& mat) {
  const int M = mat.M;
  if (M < 2 || static_cast<int>(mat.edges.size()) != M + 1 ||
      static_cast<int>(mat.cols.size()) != M)
    fail(Errc::InvalidInput, "malformed discretization matrix");

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(M, M);
  for (int j = 0; j < M; ++j) {
    for (const auto& [i, m] : mat.cols[static_cast<size_t>(j)]) {
      Rat v = m.mid() / mat.bin_width(i).mid();
      double d = v.get_d();
      if (!std::isfinite(d))
        fail(Errc::SolverFailure, "matrix entry overflows double precision");
      A(i, j) = d;
    }
  }

  Eigen::EigenSolver<Eigen::MatrixXd> solver(A, /*computeEigenvectors=*/true);
  if (solver.info() != Eigen::Success)
    fail(Errc::SolverFailure, "dense eigensolver did not converge");

  EigenResult out;
  out.M = M;
  out.values.reserve(static_cast<size_t>(M));
  for (int k = 0; k < M; ++k) out.values.push_back(solver.eigenvalues()[k]);
  std::sort(out.values.begin(), out.values.end(),
            [](const std::complex<double>& a, const std::complex<double>& b) {
              const double ma = std::abs(a), mb = std::abs(b);
              if (ma != mb) return ma > mb;
              if (a.real() != b.real()) return a.real() > b.real();
              return a.imag() > b.imag();
            });

  const Eigen::MatrixXcd V = solver.eigenvectors();
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(V);
  if (lu.isInvertible()) {
    auto one_norm = [](const Eigen::MatrixXcd& W) {
      return W.cwiseAbs().colwise().sum().maxCoeff();
    };
    const double cond = one_norm(V) * one_norm(lu.inverse());
    out.condition = std::isfinite(cond) ? cond : std::numeric_limits<double>::infinity();
  } else {
    out.condition = std::numeric_limits<double>::infinity();
  }
  return out;
}

SpectralReport spectral_report(const PiecewiseMap& map, const Weight& weight,
                               const std::vector<int>& M_list, const NRange& n_range,
                               BinPolicy policy, bool parallel) {
  if (M_list.empty()) fail(Errc::InvalidInput, "empty bin-count list");
  for (int M : M_list)
    if (M < 2) fail(Errc::InvalidInput, "bin count must be at least 2");
  if (n_range.n_min < 1 || n_range.n_max < n_range.n_min)
    fail(Errc::InvalidInput, "invalid level range");

  SpectralReport rep;
  rep.M_list = M_list;
  rep.label = "discretization spectrum";

  OrbitTable table = discontinuity_orbits(map, std::max(n_range.n_max + 4, 16));
  rep.markov = table.markov;
  const auto lam = lambda_overall(map, weight, table, n_range);
  rep.lambda_inf = lam.first;
  rep.lambda_sup = lam.second;
  rep.bv_radius = bv_essential_radius(map, weight, n_range).eta_final;

  const PiecewiseSmooth ref = PiecewiseSmooth::from_poly(Poly::x() * Poly::x()) +
                              PiecewiseSmooth::step(Scalar(mkrat(1, 3)));
  const long count = static_cast<long>(M_list.size());
  rep.spectra.assign(static_cast<size_t>(count), {});
  rep.consistency_error.assign(static_cast<size_t>(count), Scalar(0L));
  auto run_one = [&](size_t t) {
    UlamMatrix mat = ulam_matrix(map, weight, M_list[t], policy, /*parallel=*/false);
    rep.spectra[t] = eigen_spectrum(mat);
    rep.consistency_error[t] = ulam_consistency_error(map, weight, mat, ref);
  };

  if (parallel) {
    std::exception_ptr err;
#ifdef TFSPEC_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long t = 0; t < count; ++t) {
      try {
        run_one(static_cast<size_t>(t));
      } catch (...) {
#ifdef TFSPEC_HAVE_OPENMP
#pragma omp critical
#endif
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
  } else {
    for (long t = 0; t < count; ++t) run_one(static_cast<size_t>(t));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Plot data

std::string eigenvalue_csv(const SpectralReport& rep) {
  std::ostringstream os;
  os << "re,im,modulus,M\n";
  os << std::setprecision(12);
  for (const EigenResult& er : rep.spectra)
    for (const std::complex<double>& z : er.values)
      os << z.real() << ',' << z.imag() << ',' << std::abs(z) << ',' << er.M << '\n';
  return os.str();
}

std::string spectral_svg(const SpectralReport& rep) {
  double span = 1.0;
  span = std::max(span, std::abs(rep.bv_radius.mid().get_d()));
  span = std::max(span, std::abs(rep.lambda_inf.mid().get_d()));
  for (const EigenResult& er : rep.spectra)
    for (const std::complex<double>& z : er.values) span = std::max(span, std::abs(z));
  span *= 1.15;
  const double scale = 300.0 / span;
  auto px = [&](double x) { return 320.0 + x * scale; };
  auto py = [&](double y) { return 320.0 - y * scale; };

  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" "
        "viewBox=\"0 0 640 640\">\n";
  os << "  <rect x=\"0\" y=\"0\" width=\"640\" height=\"640\" fill=\"white\"/>\n";
  os << "  <line x1=\"10\" y1=\"320\" x2=\"630\" y2=\"320\" stroke=\"#cccccc\"/>\n";
  os << "  <line x1=\"320\" y1=\"10\" x2=\"320\" y2=\"630\" stroke=\"#cccccc\"/>\n";

  const double r_in = rep.lambda_inf.mid().get_d();
  const double r_out = rep.bv_radius.mid().get_d();
  const bool coincide = std::abs(r_in - r_out) <= 1e-9 * std::max(1.0, std::abs(r_out));
  if (coincide) {
    os << "  <circle class=\"radius-coincident\" cx=\"320\" cy=\"320\" r=\""
       << r_out * scale << "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1.5\"/>\n";
    os << "  <text x=\"30\" y=\"600\" font-size=\"14\">orbit invariant = sup-norm radius "
       << rep.bv_radius.decimal(6) << "</text>\n";
  } else {
    os << "  <circle class=\"radius-orbit\" cx=\"320\" cy=\"320\" r=\"" << r_in * scale
       << "\" fill=\"none\" stroke=\"#aa3333\" stroke-width=\"1.5\" "
          "stroke-dasharray=\"6 4\"/>\n";
    os << "  <circle class=\"radius-bv\" cx=\"320\" cy=\"320\" r=\"" << r_out * scale
       << "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1.5\"/>\n";
    os << "  <text x=\"30\" y=\"580\" font-size=\"14\">orbit invariant "
       << rep.lambda_inf.decimal(6) << "</text>\n";
    os << "  <text x=\"30\" y=\"600\" font-size=\"14\">sup-norm radius "
       << rep.bv_radius.decimal(6) << "</text>\n";
  }

  for (const EigenResult& er : rep.spectra)
    for (const std::complex<double>& z : er.values)
      os << "  <circle class=\"ev\" cx=\"" << px(z.real()) << "\" cy=\"" << py(z.imag())
         << "\" r=\"2.50\" fill=\"#1f6f9f\" fill-opacity=\"0.6\"/>\n";

  os << "  <text x=\"30\" y=\"30\" font-size=\"14\">" << rep.label << " (M =";
  for (size_t t = 0; t < rep.M_list.size(); ++t)
    os << (t == 0 ? " " : ", ") << rep.M_list[t];
  os << ")</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace tfspec
