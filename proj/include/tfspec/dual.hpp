#pragma once
// Dual eigen-functional certificates.  Along a wandering discontinuity orbit
// a_0, a_1, ... the weights phi(a_k) define a sign-carrying sequence alpha_k
// whose reciprocal growth matches the orbit weight products.  Pairing jumps
// against alpha gives, for every lambda in the disc |lambda| < Lambda^inf, a
// truncated linear functional ell_lambda; subtracting the rank-one operator
// built from a boundary bump (h_K) makes ell_lambda an exact eigenvector of
// the dual operator.  This module constructs the three objects and certifies
// the eigen-equation residual, with explicit truncation allowances.
//
// Complex lambdas are carried as pairs of interval scalars local to this
// module; every grid point on the axis rays stays exact rational, so the
// certificates below are exact-zero checks in rational mode.

#include <string>
#include <vector>

#include "tfspec/orbits.hpp"
#include "tfspec/transfer.hpp"

namespace tfspec {

// Minimal complex interval scalar (rectangular enclosure).
struct CScalar {
  Scalar re{0L};
  Scalar im{0L};

  CScalar() = default;
  CScalar(Scalar r, Scalar i) : re(std::move(r)), im(std::move(i)) {}
  explicit CScalar(const Scalar& r) : re(r), im(0L) {}

  CScalar operator+(const CScalar& o) const { return {re + o.re, im + o.im}; }
  CScalar operator-(const CScalar& o) const { return {re - o.re, im - o.im}; }
  CScalar operator*(const CScalar& o) const {
    return {re * o.re - im * o.im, re * o.im + im * o.re};
  }
  CScalar scaled(const Scalar& c) const { return {re * c, im * c}; }
  bool is_zero() const { return re.is_zero() && im.is_zero(); }
  Scalar abs_sq() const { return re * re + im * im; }
  // Enclosure of the modulus; exact zero for the exact-zero input.
  Scalar mod(unsigned bits = 96) const;
  CScalar pow(int k) const;
};

// alpha_{k0-1} = 1 and alpha_k = (gamma_{k-1}/phi(a_{k-1})) alpha_{k-1}:
// the coefficients making the jump-shift identity telescope under the dual
// pairing.  values[i] = alpha_{k0-1+i}.
struct AlphaSequence {
  int j = 0;
  int k0 = 1;
  std::vector<Scalar> values;

  int K() const { return k0 - 2 + static_cast<int>(values.size()); }
  const Scalar& at(int k) const;  // k in [k0-1, K]
};

// Builds alpha_{k0-1..K} for orbit j.  Requires table.k0 >= 1 (run find_k0
// first).  The modulus of every entry is cross-checked against the direct
// weight products along the orbit; ZeroWeightOnOrbit if phi vanishes there.
AlphaSequence alpha_sequence(const OrbitTable& table, const Weight& weight,
                             int j, int K);

// Truncated dual functional ell_lambda(h) = sum_{k0 <= k <= K} lambda^k
// alpha_k J(h, a_k), together with the data needed to bound the omitted
// tail: a certified positive lower bound phi_min on |phi| turns the alpha
// recursion into the geometric tail bound
//   sum_{k > K} |lambda^k alpha_k| <= |lambda^K alpha_K| q/(1-q),
// q = |lambda|/phi_min, valid whenever q < 1.
struct DualFunctional {
  int j = 0;
  int k0 = 1;
  int K = 0;
  CScalar lambda;
  Scalar lambda_mod{0L};           // enclosure of |lambda|
  std::vector<CScalar> coeff;      // lambda^k alpha_k, k = k0..K
  Scalar tail_coeff_bound{0L};     // bound on sum_{k>K} |lambda^k alpha_k|
};

// Requires |lambda| < lambda_inf_est (LambdaTooLarge otherwise) and
// |lambda| < certified min |phi| so the truncation tail is summable.
DualFunctional dual_functional(const PiecewiseMap& map, const Weight& weight,
                               const OrbitTable& table, int j,
                               const CScalar& lambda, int K,
                               const Scalar& lambda_inf_est);

// Value of the truncated functional plus the rigorous bound on the omitted
// tail, 2*||h||_inf * tail_coeff_bound.  Every jump of h must carry a tag
// (UntaggedJump otherwise); jumps at boundary-image points, at other orbits,
// and at depths outside [k0, K] contribute only through the tail allowance.
struct EllValue {
  CScalar value;
  Scalar tail_bound{0L};
};
EllValue ell_lambda(const DualFunctional& f, const PiecewiseSmooth& h);

// The rank-one correction: h_K has jump exactly 1 at a_{k0} and no deeper
// orbit jumps, produced by pushing a quadratic bump supported next to the
// orbit's boundary point through k0+1 applications of the operator and
// normalizing.  K h = normalizer * J(h, a_{k0-1}) * h_K.
struct RankOneData {
  PiecewiseSmooth h_K;
  int j = 0;
  int k0 = 1;
  Scalar pivot;       // a_{k0-1}
  Scalar normalizer;  // 1/alpha_{k0}
};
RankOneData construct_h_K(const PiecewiseMap& map, const Weight& weight,
                          const OrbitTable& table, int j = 0);

// Residual of the dual eigen-equation: |ell(Lh) - ell(Kh) - lambda ell(h)|,
// with the combined truncation allowance of the three evaluations.  Exactly
// zero in rational mode when the jumps of h stop short of the truncation.
struct DualEigenCert {
  Scalar residual{0L};
  Scalar allowance{0L};
  bool within() const;  // residual certainly <= allowance (or exactly 0)
};
DualEigenCert dual_eigen_residual(const PiecewiseMap& map, const Weight& weight,
                                  const OrbitTable& table, const RankOneData& data,
                                  const DualFunctional& f, const PiecewiseSmooth& h);

// 8 moduli on each of the 4 axis rays, inside the disc of radius
// 0.9 * lambda_inf_est; all entries exact when the estimate is exact.
std::vector<CScalar> lambda_grid(const Scalar& lambda_inf_est);

// Grid certification: one row per lambda, worst case over the h-suite.
struct GridCertRow {
  CScalar lambda;
  Scalar residual{0L};
  Scalar allowance{0L};
  bool pass = false;
};
std::vector<GridCertRow> certify_grid(const PiecewiseMap& map, const Weight& weight,
                                      const OrbitTable& table, int j, int K,
                                      const Scalar& lambda_inf_est,
                                      const std::vector<PiecewiseSmooth>& suite,
                                      bool parallel = true);
std::string grid_cert_json(const std::vector<GridCertRow>& rows);

}  // namespace tfspec
