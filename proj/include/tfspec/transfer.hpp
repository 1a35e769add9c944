#pragma once
// Weighted transfer operator on piecewise-polynomial observables.
//
// apply_transfer realizes (L h)(y) = sum over branches of (phi*h) pulled back
// through the branch inverse, restricted to the branch image.  For affine
// branches the pullback is an exact polynomial composition; for curved
// branches the pullback is interpolated at near-Chebyshev nodes and the
// interpolant's constant coefficient is widened by a certified bound on the
// interpolation error, so the result still encloses the true operator image.
//
// Breakpoint tags travel with the dynamics: a jump at the k-th point of
// orbit j moves to the (k+1)-th point, and fresh jumps at branch-image
// endpoints are identified against the orbit table (orbit heads and
// finite-part points).  Passing the table is optional but required for the
// fresh-jump identification; without it those breakpoints stay untagged.
//
// On top of the operator sit the verification routines for the jump-shift
// relation along orbits, the derivative split of L, and the coefficient
// family A_{l,p,n} governing p-fold derivatives of L^n.

#include <optional>
#include <vector>

#include "tfspec/map_core.hpp"
#include "tfspec/observables.hpp"
#include "tfspec/orbits.hpp"

namespace tfspec {

struct TransferOptions {
  // Maximum degree of any result piece; exceeding it fails with
  // DegreeTooLarge rather than truncating.
  int degree_budget = 16;
  // Curved-branch pullbacks: interpolation degree and the tolerance on the
  // certified interpolation error (radius 2^-approx_tol_bits).
  int interp_degree = 12;
  unsigned approx_tol_bits = 20;
};

// One application of the weighted operator.  `table`, when given, is used to
// tag fresh breakpoints (branch-image endpoints) and to sanity-check the
// propagation of existing orbit tags.
PiecewiseSmooth apply_transfer(const PiecewiseMap& map, const Weight& weight,
                               const PiecewiseSmooth& h,
                               const OrbitTable* table = nullptr,
                               const TransferOptions& opts = {});

// L^n via two independent routes: Composed folds apply_transfer n times;
// DirectCells sums (phi_n * h) pulled back through the level-n cells of the
// dynamical partition.  The routes agree exactly on rational data, which the
// tests exploit as a structural cross-check.  DirectCells requires affine
// branches and exact endpoints.
enum class IteratePath { Composed, DirectCells };

PiecewiseSmooth apply_transfer_n(const PiecewiseMap& map, const Weight& weight,
                                 const PiecewiseSmooth& h, int n,
                                 const OrbitTable* table = nullptr,
                                 IteratePath path = IteratePath::Composed,
                                 const TransferOptions& opts = {});

// ---------------------------------------------------------------------------
// Jump propagation along orbits

struct KRange {
  int k_min = 1;
  int k_max = 1;
};

struct JumpShiftEntry {
  int j = 0;  // orbit index
  int k = 0;
  Scalar observed;   // J(L h, a_{j,k})
  Scalar predicted;  // gamma_{k-1} * phi(a_{j,k-1}) * J(h, a_{j,k-1})
  Scalar residual;   // |observed - predicted|
};

struct JumpShiftReport {
  std::vector<JumpShiftEntry> entries;
  Scalar max_residual;
};

// Checks J(L h, a_{j,k}) = gamma_{k-1} * phi(a_{j,k-1}) * J(h, a_{j,k-1}) for
// every orbit j and k in the range.  Requires table.k0 >= 0 and
// k_range.k_min >= k0 (PreconditionK0 otherwise); k_max must stay within the
// stored points (DepthTooLarge).  Residuals are exactly zero on rational data.
JumpShiftReport verify_jump_shift(const PiecewiseMap& map, const Weight& weight,
                                  const OrbitTable& table, const PiecewiseSmooth& h,
                                  const KRange& k_range);

// ---------------------------------------------------------------------------
// Distortion coefficients
//
// The coefficients A_{l,p,n} satisfy D_a^p(L^n h) = sum_l L^n(A_{l,p,n} D_a^l h)
// and obey the one-step recursion
//   A_{l,p+1,n} = (1/(T^n)') * (A_{l,p,n}' + A_{l,p,n} * phi_n'/phi_n + A_{l-1,p,n}).
// Per level-n cell they are stored on the image side as B_{l,p} = num / Phi_n^(p-l)
// with polynomial numerators, where Phi_n is the weight product pulled back
// through the cell inverse.  For piecewise-constant weights every denominator
// power is constant and B_{l,p} collapses to a plain polynomial.

struct DistortionCell {
  Scalar lo, hi;          // domain cell
  Scalar y_lo, y_hi;      // image interval of the cell under T^n
  std::vector<int> word;  // branch itinerary
  Scalar slope;           // (T^n)' on the cell (affine branches: constant)
  Poly phi_n;             // Phi_n on (y_lo, y_hi)
  // num[p][l] for 0 <= l <= p <= r; B_{l,p} = num[p][l] / phi_n^(p-l).
  std::vector<std::vector<Poly>> num;

  // B_{l,p} as a single polynomial; DegreeTooLarge when the denominator is a
  // genuine polynomial (non-constant weight) and p > l.
  Poly b_poly(int l, int p) const;
};

struct DistortionTable {
  int n = 0;
  int r = 0;
  std::vector<DistortionCell> cells;

  // max over cells of sup |B_{l,p}| on the cell image.
  Scalar sup_norm(int l, int p) const;
};

// Builds the table over all level-n cells (affine branches only).  The
// closing identity A_{p,p,n} = ((T^n)')^{-p} is re-checked per cell.  The
// `parallel` flag selects the OpenMP per-cell loop or the serial reference.
DistortionTable distortion_coefficients(const PiecewiseMap& map, const Weight& weight,
                                        int n, int r, bool parallel = true);

// ---------------------------------------------------------------------------
// Derivative identities

// Sup-norm residual of
//   D_a(L h) = L(phi'/(phi T') * h) + L((1/T') * D_a h),
// exactly zero on rational data.  Affine branches; the weight quotient must
// be piecewise polynomial (piecewise-constant weights always qualify).
Scalar verify_derivative_identity(const PiecewiseMap& map, const Weight& weight,
                                  const PiecewiseSmooth& h);

struct SuperDaReport {
  Scalar residual;            // sup |D_a^p(L^n h) - sum_l L^n(A_{l,p,n} D_a^l h)|
  std::vector<Scalar> a_sup;  // sup-norms of A_{l,p,n}, l = 0..p
};

// Compares the p-fold absolutely continuous derivative of L^n h against the
// distortion-coefficient expansion; residual is exactly zero on rational
// data.  a_sup records the n-uniform boundedness data.
SuperDaReport lemma_superDa_check(const PiecewiseMap& map, const Weight& weight,
                                  const PiecewiseSmooth& h, int n, int p);

}  // namespace tfspec
