#pragma once
// Piecewise-polynomial observables with jumps: one-sided limits, derivative
// decomposition into absolutely continuous and jump parts, and the norm
// family (L1, Linf, BV, C_r, zeta-weighted jump norm, custom norm).
//
// Breakpoints carry tags identifying their role in the discontinuity
// structure of a map: OrbTag (j,k) marks the k-th point of infinite orbit j,
// BkTag marks a finite-part point.  Tags let the weighted norms look up
// weights without comparing point values (essential in enclosure mode).

#include <optional>
#include <variant>
#include <vector>

#include "tfspec/map_core.hpp"

namespace tfspec {

struct OrbTag {
  int j = 0, k = 0;
  bool operator==(const OrbTag& o) const { return j == o.j && k == o.k; }
};
struct BkTag {
  int idx = 0;
  bool operator==(const BkTag& o) const { return idx == o.idx; }
};
using PointTag = std::variant<std::monostate, OrbTag, BkTag>;

struct BreakPt {
  Scalar x;
  PointTag tag;
};

class PiecewiseSmooth {
 public:
  // The zero function.
  PiecewiseSmooth() : pieces_{Poly::zero()} {}
  // breaks strictly inside (0,1), increasing; pieces.size() == breaks.size()+1.
  PiecewiseSmooth(std::vector<BreakPt> breaks, std::vector<Poly> pieces);

  static PiecewiseSmooth constant(const Scalar& c) { return from_poly(Poly::constant(c)); }
  static PiecewiseSmooth from_poly(Poly p);
  // Indicator of [at, 1] (a single unit jump up at `at`).
  static PiecewiseSmooth step(const Scalar& at, PointTag tag = {});

  const std::vector<BreakPt>& breaks() const { return breaks_; }
  const std::vector<Poly>& pieces() const { return pieces_; }
  int piece_count() const { return static_cast<int>(pieces_.size()); }

  Scalar value_one_sided(const Scalar& x, Side side) const;
  // J(h, x_i) = h(x_i^+) - h(x_i^-) for the i-th breakpoint.
  Scalar jump_at_index(size_t i) const;

  // Merges neighboring pieces with identical polynomials (dropping the
  // zero-jump breakpoint between them).
  PiecewiseSmooth normalized() const;
  // Absolutely continuous part of the derivative (piecewise derivative,
  // breakpoints and tags preserved).
  PiecewiseSmooth derivative_abs() const;

  PiecewiseSmooth operator+(const PiecewiseSmooth& o) const;
  PiecewiseSmooth operator-(const PiecewiseSmooth& o) const;
  PiecewiseSmooth operator*(const PiecewiseSmooth& o) const;
  PiecewiseSmooth scaled(const Scalar& s) const;

  bool same(const PiecewiseSmooth& o) const;  // identical representation

 private:
  std::vector<BreakPt> breaks_;  // interior breakpoints, increasing
  std::vector<Poly> pieces_;     // pieces_[i] on (x_{i-1}, x_i)
};

// h(x+) - h(x-); zero when x is not a breakpoint of h.
Scalar jump_at(const PiecewiseSmooth& h, const Scalar& x);

struct JumpEntry {
  Scalar x;
  PointTag tag;
  Scalar jump;
};
using JumpVector = std::vector<JumpEntry>;

// (absolutely continuous derivative, jumps of h itself at its breakpoints)
std::pair<PiecewiseSmooth, JumpVector> decompose_derivative(const PiecewiseSmooth& h);

enum class NormKind { L1, Linf, BV, Cr };

// L1 / Linf / BV = L1 + |D_a h|_{L1} + sum|jumps| / C_r = sum_{t<=r} |D_a^t h|_{L1}.
Scalar compute_norm(const PiecewiseSmooth& h, NormKind kind, int r = 0);

// ---------------------------------------------------------------------------
// Weights

enum class WeightMode { Constant, InverseDerivative, Custom };

struct Weight {
  PiecewiseSmooth phi;  // breakpoints within the map's breakpoint set
  WeightMode mode = WeightMode::Custom;

  static Weight constant(const Scalar& c);
  // 1/|T'| for maps with affine branches (piecewise constant).
  static Weight inverse_abs_derivative(const PiecewiseMap& map);
  static Weight custom(PiecewiseSmooth phi);

  Scalar eval_one_sided(const Scalar& x, Side side) const {
    return phi.value_one_sided(x, side);
  }
};

// ---------------------------------------------------------------------------
// Weighted jump norms

struct WeightScheme {
  Scalar Lambda_tilde;
  int r = 1;
  int K = 0;                              // truncation depth
  std::vector<std::vector<Scalar>> zeta;  // zeta[j][k] for k = 0..K; zeta[j][0] = 1

  Scalar zeta_at(int j, int k) const;
};

struct OrbitTable;  // defined in orbits.hpp

// sum_j sum_k zeta(j,k)|J(h, a_{j,k})| + sum_k |J(h, b_k)| over the tags of h.
Scalar zeta_jump_norm(const PiecewiseSmooth& h, const WeightScheme& scheme,
                      const OrbitTable& table);

// sum_{t<=r} |D_a^t h|_{L1} + sum_{t<=r-1} |D_a^t h|_{J_zeta}.
Scalar custom_norm(const PiecewiseSmooth& h, const WeightScheme& scheme,
                   const OrbitTable& table);

// ---------------------------------------------------------------------------
// JSON: { "breakpoints": [...], "pieces": [{"coeffs": [...]}, ...],
//         "tags": [{"point": ..., "orbit": [j,k]} | {"point": ..., "b": idx}] }

PiecewiseSmooth obs_from_json(const nlohmann::json& j);
nlohmann::json obs_to_json(const PiecewiseSmooth& h);

}  // namespace tfspec
