#pragma once
// Discontinuity-orbit machinery: the forward orbits of the one-sided limits
// at the branch boundaries, classified into a finite part plus finitely many
// infinite orbits a_{j,0}, a_{j,1}, ...  Each surviving orbit is re-based so
// that its first point is the direct one-sided image of a boundary point and
// no shorter boundary path reaches any later point.  On top of the table sit
// the uniqueness threshold k0 and the spectral invariants Lambda^inf /
// Lambda^sup estimated from weighted orbit products.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tfspec/map_core.hpp"
#include "tfspec/observables.hpp"

namespace tfspec {

struct OrbitPoint {
  Scalar x;
  Side side = Side::Right;  // approach side carried along the orbit
  int branch = -1;          // branch containing x (used for the next step)
  int gamma = 0;            // orientation of that branch
};

struct DiscOrbit {
  int j = 0;
  Scalar anchor;                  // boundary point the orbit hangs off
  Side anchor_side = Side::Left;  // T(anchor^side) = points[0].x
  int anchor_branch = -1;
  std::vector<OrbitPoint> points;  // a_{j,0} .. a_{j,K}
  bool open_at_depth = true;       // non-periodicity certified only up to K
};

struct FinitePoint {
  Scalar x;
  bool in_gamma = false;  // true for the boundary points themselves
};

struct OrbitTable {
  int depth = 0;  // truncation depth K
  std::vector<FinitePoint> finite_part;
  std::vector<DiscOrbit> orbits;
  int k0 = -1;  // -1 until find_k0 has been run
  bool markov = false;
};

// Iterates every one-sided boundary limit `depth` steps, folds eventually
// periodic sequences and pre-merge prefixes into the finite part, and
// re-bases the surviving orbits.  Orbits are sorted by (anchor, side).
OrbitTable discontinuity_orbits(const PiecewiseMap& map, int depth = 64);

// Smallest k0 >= 1 such that for every orbit j and every stored k >= k0,
// the preimages of a_{j,k} inside the truncated table are exactly
// {a_{j,k-1}}.  Throws TruncationTooShallow when the property still fails
// at the last stored index.
int find_k0(const OrbitTable& table, const PiecewiseMap& map);

// Per-orbit branch orientations at each orbit point (recomputed from the
// map; PointOnBoundary if an orbit point sits on a branch boundary).
std::vector<std::vector<int>> branch_signs(const OrbitTable& table,
                                           const PiecewiseMap& map);

// Signed orbit products Phi_n = phi(anchor^side) * prod_{i<=n-2} phi(a_i)
// for n = 1..n_max (so |Phi_n|^{1/n} is the n-th partial invariant).
std::vector<Scalar> phi_products(const PiecewiseMap& map, const Weight& weight,
                                 const DiscOrbit& orbit, int n_max);

struct NRange {
  int n_min = 1;
  int n_max = 48;
};

struct LambdaEstimate {
  int j = -1;
  Scalar point;  // the non-trivial discontinuity (orbit anchor)
  Side side = Side::Left;
  Scalar anchor_phi;
  std::vector<Scalar> partial_products;  // |Phi_n|^{1/n}, n = n_min..n_max
  Scalar lambda_inf_est;
  Scalar lambda_sup_est;
  Scalar cauchy_diagnostic;  // oscillation over the tail window
  bool zero_weight = false;  // weight vanished on the orbit -> pinned to 0
  bool exact_limit = false;  // a certified tail factor pinned the limit
  std::optional<Scalar> limit;
};

// Partial products for orbit j with inf/sup estimates over the tail window
// (last quarter of the range).  A certified tail factor (exact one-sided
// weight value valid for every step beyond the table) upgrades the estimate
// to the exact limit.
LambdaEstimate lambda_bounds(const PiecewiseMap& map, const Weight& weight,
                             const OrbitTable& table, int j, const NRange& range,
                             const std::optional<Scalar>& certified_tail = {});

// (Lambda^inf, Lambda^sup): maxima of the per-orbit estimates; (0, 0) for
// Markov tables.  certified_tails, when given, must have one entry per orbit.
std::pair<Scalar, Scalar> lambda_overall(
    const PiecewiseMap& map, const Weight& weight, const OrbitTable& table,
    const NRange& range,
    const std::vector<std::optional<Scalar>>& certified_tails = {});

// Convenience overload building the table at the default depth.
std::pair<Scalar, Scalar> lambda_overall(const PiecewiseMap& map,
                                         const Weight& weight,
                                         const NRange& range);

// CSV with header j,k,point,branch_index,gamma,phi_value (orbit rows only).
std::string orbit_table_csv(const OrbitTable& table, const PiecewiseMap& map,
                            const Weight& weight);

}  // namespace tfspec
