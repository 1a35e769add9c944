#pragma once
// Piecewise monotone interval maps on [0,1]: exact representation, one-sided
// evaluation, dynamical partition refinement, preimages, and uniform-expansion
// certificates.
//
// A map is a finite ordered list of polynomial branches whose open domains
// partition (0,1) up to the breakpoint set {0 = c_0 < ... < c_N = 1}.  Every
// branch is strictly monotone on the closure of its domain and maps it into
// [0,1].  The partition is maximal: adjacent branches disagree in one-sided
// value or first derivative at the shared breakpoint.

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tfspec/poly.hpp"

namespace tfspec {

enum class Side { Left, Right };

struct Branch {
  Scalar lo, hi;  // open domain (lo, hi)
  Poly poly;      // C^0 extension to the closed domain
  int orientation = +1;  // certified sign of poly' on [lo, hi]
  // One-sided limits T(lo^+) and T(hi^-).  make_map fills them by interval
  // evaluation; constructors with structural knowledge may store tighter
  // enclosures of the same values (e.g. an exact zero that a correlated-
  // coefficient evaluation cannot reproduce).  validate() checks consistency.
  Scalar lo_image, hi_image;

  // One-sided closure values {T(lo^+), T(hi^-)} sorted ascending.
  std::pair<Scalar, Scalar> image() const;
};

struct PiecewiseMap {
  std::vector<Scalar> breakpoints;  // 0 = c_0 < ... < c_N = 1
  std::vector<Branch> branches;     // branch i lives on (c_i, c_{i+1})
  int degree_limit = 8;

  int branch_count() const { return static_cast<int>(branches.size()); }
  // Checks every structural invariant; throws Error on the first violation.
  void validate() const;
};

// Builds a validated map.  Branch orientations are certified from the
// derivative sign, never trusted from the caller.
PiecewiseMap make_map(std::vector<Scalar> breakpoints, std::vector<Poly> polys,
                      int degree_limit = 8);

// ---------------------------------------------------------------------------
// One-sided evaluation

// Index of the branch whose closure touches x from the given side.
int adjacent_branch(const PiecewiseMap& map, const Scalar& x, Side side);

// lim_{e->0+} T(x -+ e) via the adjacent branch polynomial.
Scalar evaluate_one_sided(const PiecewiseMap& map, const Scalar& x, Side side);

// One-sided derivative of the given order (order 0 = value).
Scalar derivative_one_sided(const PiecewiseMap& map, const Scalar& x, Side side,
                            int order);

// ---------------------------------------------------------------------------
// Dynamical partition

struct Cell {
  Scalar lo, hi;          // open interval
  std::vector<int> word;  // branch indices (i_0, ..., i_{n-1})
  Poly iterate;           // T^n on the closed cell
  int orientation;        // product of branch orientations along the word
};

struct RefinedPartition {
  int level = 0;
  std::vector<Cell> cells;  // ordered left to right
};

// All nonempty level-n cells with their branch words.  Throws DepthTooLarge
// when the cell count would exceed max_cells.
RefinedPartition refine_partition(const PiecewiseMap& map, int n,
                                  std::size_t max_cells = 200000);

// ---------------------------------------------------------------------------
// Preimages

struct PreimagePoint {
  Scalar x;
  int branch;       // branch realizing the one-sided limit
  bool from_left;   // T(x^-) = y via this branch
  bool from_right;  // T(x^+) = y via this branch
};

// One entry per branch whose closed image contains y; a breakpoint can appear
// twice (once per side), matching the disjoint-union convention for the
// domain.  Interior solutions carry both side flags.
std::vector<PreimagePoint> preimages(const PiecewiseMap& map, const Scalar& y,
                                     unsigned bits = 128);

// ---------------------------------------------------------------------------
// Uniform expansion

struct ExpansionEstimate {
  Scalar C;
  Scalar lambda;  // |(T^n)'| >= C * lambda^{-n} for all n = 1..n_max
  std::vector<Scalar> min_derivative;  // certified lower bounds, n = 1..n_max
};

// Fits the best (C, lambda) over levels 1..n_max; throws NotExpanding when no
// lambda < 1 fits (reporting the worst cell at level n_max).
ExpansionEstimate check_uniform_expansion(const PiecewiseMap& map, int n_max,
                                          std::size_t max_cells = 200000);

// ---------------------------------------------------------------------------
// Built-in maps

PiecewiseMap doubling_map();                      // x -> 2x mod 1
PiecewiseMap tent_map();                          // x -> 1 - |2x - 1|
PiecewiseMap beta_map(const Rat& beta);           // x -> beta*x mod 1, beta > 1
// Four-branch family: slopes m/(m-3), m, m, rho on the cells cut at
// (m-3)/m, (m-2)/m, (m-1)/m; requires m >= 4 and 0 < rho <= m.
PiecewiseMap example_map(int m, const Scalar& rho);

// ---------------------------------------------------------------------------
// Inverse branches

// Exact inverse of an affine branch as a polynomial in y; fails with
// DegreeTooLarge for nonaffine branches.
Poly affine_inverse(const Branch& branch);

// ---------------------------------------------------------------------------
// JSON serialization
//
// Scalars: "p/q" or decimal strings (exact), {"dec": "...", "bits": n}
// (enclosure of radius 2^-bits), or {"lo": "p/q", "hi": "p/q"}.
// Maps: { "breakpoints": [...], "branches": [{"coeffs": [...],
//         "orientation": +-1}, ...] }.

Scalar scalar_from_json(const nlohmann::json& j);
nlohmann::json scalar_to_json(const Scalar& v);
PiecewiseMap map_from_json(const nlohmann::json& j);
nlohmann::json map_to_json(const PiecewiseMap& map);

// Decides a three-valued comparison or fails with PrecisionInsufficient.
bool decide(Trool t, const char* what);

}  // namespace tfspec
