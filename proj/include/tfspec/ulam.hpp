#pragma once
// Finite-rank bin discretization of the weighted transfer operator, a dense
// eigensolve of the discretized matrix, and an aggregated spectral report.
//
// Transition masses are computed by exact integration per branch, so entries
// are exact rationals whenever the map, the weight, and the bin edges are
// exact (enclosures propagate otherwise; curved branches route preimages of
// bin edges through certified root enclosures).  The eigensolve rounds bin
// averages to double precision: its output is a *discretization spectrum*,
// an advisory picture of the operator, never a certified enclosure.

#include <complex>
#include <string>
#include <utility>
#include <vector>

#include "tfspec/bounds.hpp"
#include "tfspec/observables.hpp"
#include "tfspec/orbits.hpp"

namespace tfspec {

// ---------------------------------------------------------------------------
// Bins

enum class BinPolicy { Uniform, GammaAligned };

// Edges of a partition of [0,1] into M bins.  Uniform uses k/M.  GammaAligned
// seeds the edges with every interior map breakpoint and every interior
// one-sided branch image, then splits the seeded segments proportionally to
// length (largest-quotient rounding on midpoints; deterministic, each segment
// keeps at least one bin).  Fails with DegenerateBin when M is smaller than
// the number of seeded segments or an edge pair cannot be certified distinct.
std::vector<Scalar> bin_edges(const PiecewiseMap& map, int M, BinPolicy policy);

// ---------------------------------------------------------------------------
// Discretized operator

struct UlamMatrix {
  int M = 0;
  BinPolicy policy = BinPolicy::GammaAligned;
  std::vector<Scalar> edges;  // M+1 increasing edges, edges[0] = 0, edges[M] = 1
  // Sparse columns: cols[j] lists (row i, mass) sorted by row, where
  //   mass = integral of phi * |T'| over bin_j intersected with T^{-1}(bin_i).
  std::vector<std::vector<std::pair<int, Scalar>>> cols;

  Scalar bin_width(int i) const;
  Scalar mass_at(int i, int j) const;  // zero when the pair carries no mass
  Scalar row_mass(int i) const;        // = integral of L1 over bin_i
  Scalar column_mass(int j) const;     // = integral of phi * |T'| over bin_j
  Scalar total_mass() const;           // = L^1 mass of L1 for nonnegative phi
};

// Assembles the M x M transition-mass matrix.  Assembly is parallel by
// column when `parallel` is set and the serial path otherwise; both orders
// produce identical entries.
UlamMatrix ulam_matrix(const PiecewiseMap& map, const Weight& weight, int M,
                       BinPolicy policy = BinPolicy::GammaAligned,
                       bool parallel = true);

// L^1 distance between the matrix image of the bin projection of h and the
// bin projection of the true image L h.  Decays like O(1/M) for data of
// bounded variation.
Scalar ulam_consistency_error(const PiecewiseMap& map, const Weight& weight,
                              const UlamMatrix& mat, const PiecewiseSmooth& h);

// ---------------------------------------------------------------------------
// Discretization spectrum

struct EigenResult {
  int M = 0;
  // Eigenvalues of the bin-averaged matrix mass_at(i,j) / bin_width(i),
  // sorted by modulus (descending; ties by real then imaginary part).  The
  // measure-side normalization mass_at(i,j) / bin_width(j) is diagonally
  // similar, so the spectrum is normalization-independent.
  std::vector<std::complex<double>> values;
  double condition = 1.0;  // 1-norm condition estimate of the eigenvector basis
};

// Dense double-precision eigensolve; SolverFailure when an entry overflows
// double precision or the solver does not converge.
EigenResult eigen_spectrum(const UlamMatrix& mat);

struct SpectralReport {
  std::vector<int> M_list;
  std::vector<EigenResult> spectra;       // one per M
  std::vector<Scalar> consistency_error;  // one per M, reference observable
  Scalar lambda_inf;  // orbit invariant estimates (inner reference circle)
  Scalar lambda_sup;
  Scalar bv_radius;   // sup-norm radius at n_max (outer reference circle)
  bool markov = false;
  std::string label;  // "discretization spectrum"
};

// Runs the discretization at every M in M_list and pairs the spectra with the
// orbit invariant and the sup-norm radius over n_range.  The consistency
// column uses the reference observable x^2 plus a unit jump at 1/3.  Matrices
// are processed in parallel (each one assembled serially, each eigensolve
// single-threaded).
SpectralReport spectral_report(const PiecewiseMap& map, const Weight& weight,
                               const std::vector<int>& M_list,
                               const NRange& n_range,
                               BinPolicy policy = BinPolicy::GammaAligned,
                               bool parallel = true);

// ---------------------------------------------------------------------------
// Plot data

// One row per eigenvalue: re,im,modulus,M.
std::string eigenvalue_csv(const SpectralReport& rep);

// Scatter of the discretization spectrum in the complex plane with the two
// reference circles (dashed = orbit invariant, solid = sup-norm radius).
// Radii that agree to within plotting resolution collapse into a single
// annotated circle; an empty spectrum list draws the circles alone.
std::string spectral_svg(const SpectralReport& rep);

}  // namespace tfspec
