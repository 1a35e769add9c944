#pragma once
// Spectral-radius estimators and the example family with a prescribed
// discontinuity itinerary.
//
// bv_essential_radius computes the n-th roots of sup |phi_n| over the level-n
// dynamical cells (phi_n = product of the weight along the first n steps):
// the classical essential-radius formula for BV spaces.  Small levels are
// enumerated exhaustively; deeper levels fall back to a certified bracket
// combining a sub-multiplicative block upper bound with an admissible-word
// witness lower bound, which collapses to an exact value whenever a single
// branch dominates.
//
// make_example_map builds the four-branch family member whose last branch
// sends 1 to a point b chosen, by nested exact preimages under the two full
// middle branches, to follow a prescribed aperiodic itinerary.  The orbit of
// b then stays in the slope-m branches forever, which pins the orbit
// invariant at exactly 1/m while the BV radius stays at (m-3)/m: the gap
// certified by theorem3_gap.
//
// zeta_weights builds the orbit-adapted jump weights zeta(j,k) =
// Lambda_tilde^k / |phi-product along the first k orbit points| together
// with the minimal derivative order r making the continuous part of the
// norm contract.  lasota_yorke_ratio measures the contraction: the deep
// (depth >= n) jump mass of L^n h shrinks by exactly Lambda_tilde^n, the
// shallow jumps are reported as the finitely many subtracted functionals,
// and the continuous part is bounded by the level-n weighted sup.

#include <string>
#include <vector>

#include "tfspec/orbits.hpp"
#include "tfspec/transfer.hpp"

namespace tfspec {

// ---------------------------------------------------------------------------
// Itineraries over the two full middle branches (letters 2 and 3)

class Itinerary {
 public:
  enum class Kind { ThueMorse, Fibonacci, Periodic };

  static Itinerary thue_morse();
  static Itinerary fibonacci();
  // Repeating block over letters {2,3}; always rejected by make_example_map
  // (a periodic itinerary gives a Markov map), available to exercise that.
  static Itinerary periodic(std::vector<int> block);

  Kind kind() const { return kind_; }
  bool aperiodic() const { return kind_ != Kind::Periodic; }
  // k-th letter, 2 or 3.
  int letter(size_t k) const;
  std::string name() const;

 private:
  Itinerary(Kind kind, std::vector<int> block)
      : kind_(kind), block_(std::move(block)) {}
  Kind kind_;
  std::vector<int> block_;                 // Periodic block
  mutable std::vector<int8_t> fib_cache_;  // Fibonacci word prefix
};

// ---------------------------------------------------------------------------
// BV essential radius

struct EssRadiusEstimate {
  NRange range;
  std::vector<Scalar> eta_est;     // ||phi_n||_sup^{1/n}, n = n_min..n_max
  std::vector<Scalar> lambda_est;  // ||1/(T^n)'||_sup^{1/n}
  int eta_enumerated_to = 0;       // deepest exhaustively enumerated level
  int lambda_enumerated_to = 0;
  Scalar eta_final;    // value at n_max
  Scalar lambda_final;
  bool lambda_below_one = false;  // certified lambda_final < 1
};

// Per-level certified sups of the weight products with n-th roots.  Levels
// whose cell count exceeds cell_budget use the bracket path, which requires
// affine branches and a piecewise-constant weight (DepthTooLarge otherwise).
EssRadiusEstimate bv_essential_radius(const PiecewiseMap& map, const Weight& weight,
                                      const NRange& range,
                                      std::size_t cell_budget = 20000);

// ---------------------------------------------------------------------------
// Example family with prescribed itinerary

struct ExampleMapResult {
  PiecewiseMap map;
  Scalar b;    // T(1^-), enclosed by the depth-cylinder_depth cylinder
  Scalar rho;  // last-branch slope m*b
  int cylinder_depth;     // itinerary pinned (and aperiodicity used) to here
  std::string itinerary;  // itinerary name for reports
};

// Builds the member of the four-branch family whose discontinuity orbit
// follows `itinerary`.  b is the nested-preimage enclosure of width
// m^-cylinder_depth <= 2^-precision_bits.
ExampleMapResult make_example_map(int m, const Itinerary& itinerary,
                                  unsigned precision_bits = 160);

// Smallest m >= 4 with (m-4)/m > c (the certified gap formula); requires
// 0 <= c < 1.
int minimal_m_for_gap(const Rat& c);

struct GapReport {
  int m;
  Scalar b, rho;
  Scalar bv_est;      // BV essential-radius estimate at n_max
  Scalar lambda_est;  // orbit invariant (exact 1/m via the certified tail)
  Scalar gap;         // bv_est - lambda_est
  int aperiodicity_depth;  // orbit table depth the itinerary was checked to
};

// Builds the map, certifies the orbit follows the itinerary inside the
// table, and reports the BV-radius / orbit-invariant gap.  The constructed
// itinerary keeps every orbit step on the slope-m branches, so the weight
// value 1/m is a certified tail factor and the orbit invariant is exact.
GapReport theorem3_gap(int m, const Itinerary& itinerary, const NRange& n_range,
                       unsigned precision_bits = 160);

// ---------------------------------------------------------------------------
// Orbit-adapted jump weights and the contraction measurement

// zeta(j,0) = 1, zeta(j,k) = Lambda_tilde^k / |prod_{i<k} phi(a_{j,i})|, for
// k <= K, plus the minimal r >= 1 with eta * lambda^{r-1} < Lambda_tilde
// (eta, lambda from bv_essential_radius at small levels, valid upper bounds
// by sub-multiplicativity).  Requires Lambda_tilde above the orbit invariant
// (LambdaTildeTooSmall otherwise) and K within the table depth.
WeightScheme zeta_weights(const PiecewiseMap& map, const Weight& weight,
                          const OrbitTable& table, const Scalar& Lambda_tilde,
                          int K);

struct LYReport {
  int n = 0;
  int h_index = 0;
  // Weighted magnitudes of the shallow-jump functionals subtracted from the
  // jump part of L^n h (orbit depth < n, plus finite-part points).
  std::vector<Scalar> functional_part;
  Scalar jump_norm_in;       // jump norm of h over derivative orders < r
  Scalar deep_jump_norm;     // depth >= n jump mass of L^n h
  Scalar contraction_ratio;  // deep_jump_norm / jump_norm_in (0 when in = 0)
  Scalar budget;             // Lambda_tilde^n
  Scalar top_term;           // sup over level-n cells of |phi_n ((T^n)')^{1-r}|
  bool jump_ok = false;      // deep_jump_norm <= budget * jump_norm_in
};

// Measures the jump contraction of L^n over the suite for each n in range.
// Deep single jumps contract by exactly Lambda_tilde^n; the report carries
// the subtracted functional values and the continuous-part top term.
std::vector<LYReport> lasota_yorke_ratio(const PiecewiseMap& map, const Weight& weight,
                                         const OrbitTable& table,
                                         const WeightScheme& scheme,
                                         const std::vector<PiecewiseSmooth>& h_suite,
                                         const NRange& n_range, bool parallel = true);

// ---------------------------------------------------------------------------
// Results CSV

struct BoundsCsvRow {
  std::string experiment;
  int m = 0;
  int n = 0;
  Scalar bv_est, lambda_est, gap, ly_ratio;
  int r = 0;
  Scalar Lambda_tilde;
};

// Header experiment,m,n,bv_est,lambda_est,gap,ly_ratio,r,Lambda_tilde.
std::string bounds_results_csv(const std::vector<BoundsCsvRow>& rows);

}  // namespace tfspec
