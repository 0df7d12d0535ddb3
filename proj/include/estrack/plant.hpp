#pragma once

// Nonisothermal CSTR model x' = f(x, u) for a first-order reaction A -> product,
// in dimensionless deviations from the nominal operating point.

#include <array>
#include <complex>

#include "estrack/linalg.hpp"

namespace estrack {

struct PlantDims {
  int n_x = 2;
  int n_u = 2;
};

// Which form of the reaction term enters f.
//
// Corrected: the Arrhenius term (x1+1)^n exp(-kappa/(x2+1)) is scaled by k_i in
// row i. This form has (0, 0) as an equilibrium for u = 0 and its Jacobian
// there reproduces the reference numeric matrix.
//
// AsPrinted: the term enters both rows unscaled. Kept for comparison; it does
// not have an equilibrium at the origin.
enum class ModelVariant { Corrected, AsPrinted };

struct CstrParams {
  double reaction_order = 1.0;  // n
  double phi1 = 1.0;
  double phi2 = 1.0;
  double k1 = 5.819e7;
  double k2 = -8.99e5;
  double kappa = 17.77;
  double u1_min = -1.798;
  double u1_max = 1.798;
  double u2_min = -0.06663;
  double u2_max = 0.06663;
  ModelVariant variant = ModelVariant::Corrected;

  static CstrParams nominal() { return CstrParams{}; }

  // Throws ContractError on an inconsistent parameter set.
  void validate() const;

  bool in_input_box(const InputVec& u) const {
    return u[0] >= u1_min && u[0] <= u1_max && u[1] >= u2_min && u[1] <= u2_max;
  }
  InputVec clamp_to_box(const InputVec& u) const;
};

inline bool in_domain(const StateVec& x) { return x[0] > -1.0 && x[1] > -1.0; }

// Throws DomainError if x is outside D.
StateVec cstr_rhs(const StateVec& x, const InputVec& u, const CstrParams& p);

// d f / d x, closed form.
Mat2 cstr_jacobian(const StateVec& x, const InputVec& u, const CstrParams& p);

// d f / d u. The input enters additively, so this is the identity.
inline Mat2 cstr_input_jacobian(const StateVec&, const InputVec&, const CstrParams&) {
  return identity2();
}

struct SpectralInfo {
  Mat2 jacobian{};
  std::array<std::complex<double>, 2> eigenvalues{};
  bool hurwitz = false;
};

SpectralInfo spectral_info(const Mat2& a);

struct NewtonOptions {
  double tol = 1e-12;
  int max_iter = 50;
  int max_halvings = 30;
};

// Equilibrium l(u) of the frozen-input plant: damped Newton from x = 0.
// Throws SolverError on non-convergence, DomainError if no damped step stays in D.
StateVec steady_state_map(const InputVec& u, const CstrParams& p, const NewtonOptions& opts = {});

SpectralInfo steady_state_stability(const InputVec& u, const CstrParams& p,
                                    const NewtonOptions& opts = {});

}  // namespace estrack
