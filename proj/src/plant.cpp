#include "estrack/plant.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "estrack/errors.hpp"

namespace estrack {

namespace {

double power(double base, double exponent) {
  return exponent == 1.0 ? base : std::pow(base, exponent);
}

void require_domain(const StateVec& x, const char* where) {
  if (!in_domain(x)) {
    std::ostringstream os;
    os.precision(17);
    os << where << ": state (" << x[0] << ", " << x[1] << ") outside D = {x1 > -1, x2 > -1}";
    throw DomainError(os.str(), x);
  }
}

// Row scaling of the Arrhenius term for the selected model variant.
Vec2 reaction_scale(const CstrParams& p) {
  return p.variant == ModelVariant::Corrected ? Vec2{p.k1, p.k2} : Vec2{1.0, 1.0};
}

}  // namespace

void CstrParams::validate() const {
  auto fail = [](const std::string& msg) { throw ContractError("plant: " + msg); };
  for (double v : {reaction_order, phi1, phi2, k1, k2, kappa, u1_min, u1_max, u2_min, u2_max}) {
    if (!std::isfinite(v)) fail("all parameters must be finite");
  }
  if (!(kappa > 0.0)) fail("kappa must be positive");
  if (!(u1_min < u1_max)) fail("u1_min must be below u1_max");
  if (!(u2_min < u2_max)) fail("u2_min must be below u2_max");
}

InputVec CstrParams::clamp_to_box(const InputVec& u) const {
  return {std::clamp(u[0], u1_min, u1_max), std::clamp(u[1], u2_min, u2_max)};
}

StateVec cstr_rhs(const StateVec& x, const InputVec& u, const CstrParams& p) {
  require_domain(x, "cstr_rhs");
  const Vec2 c = reaction_scale(p);
  const double rate = power(x[0] + 1.0, p.reaction_order) * std::exp(-p.kappa / (x[1] + 1.0));
  const double e = std::exp(-p.kappa);
  return {-p.phi1 * x[0] + p.k1 * e - c[0] * rate + u[0],
          -p.phi2 * x[1] + p.k2 * e - c[1] * rate + u[1]};
}

Mat2 cstr_jacobian(const StateVec& x, const InputVec&, const CstrParams& p) {
  require_domain(x, "cstr_jacobian");
  const Vec2 c = reaction_scale(p);
  const double arr = std::exp(-p.kappa / (x[1] + 1.0));
  const double base = x[0] + 1.0;
  const double d_rate_dx1 = p.reaction_order * power(base, p.reaction_order - 1.0) * arr;
  const double d_rate_dx2 =
      power(base, p.reaction_order) * arr * p.kappa / ((x[1] + 1.0) * (x[1] + 1.0));
  return {{{-p.phi1 - c[0] * d_rate_dx1, -c[0] * d_rate_dx2},
           {-c[1] * d_rate_dx1, -p.phi2 - c[1] * d_rate_dx2}}};
}

SpectralInfo spectral_info(const Mat2& a) {
  SpectralInfo info;
  info.jacobian = a;
  info.eigenvalues = eigenvalues(a);
  info.hurwitz = info.eigenvalues[0].real() < 0.0 && info.eigenvalues[1].real() < 0.0;
  return info;
}

StateVec steady_state_map(const InputVec& u, const CstrParams& p, const NewtonOptions& opts) {
  StateVec x{0.0, 0.0};
  double res = norm(cstr_rhs(x, u, p));
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    if (res <= opts.tol) return x;
    const StateVec r = cstr_rhs(x, u, p);
    Vec2 step;
    if (!solve2(cstr_jacobian(x, u, p), -r, step)) {
      throw SolverError("steady_state_map: singular Jacobian", x, res);
    }
    double lambda = 1.0;
    bool accepted = false;
    bool stayed_in_domain = false;
    for (int h = 0; h <= opts.max_halvings; ++h, lambda *= 0.5) {
      const StateVec trial = x + lambda * step;
      if (!in_domain(trial)) continue;
      stayed_in_domain = true;
      const double trial_res = norm(cstr_rhs(trial, u, p));
      if (trial_res < res) {
        x = trial;
        res = trial_res;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!stayed_in_domain) {
        throw DomainError("steady_state_map: every damped Newton step leaves D", x + lambda * step);
      }
      std::ostringstream os;
      os << "steady_state_map: line search stalled at residual " << res;
      throw SolverError(os.str(), x, res);
    }
  }
  if (res <= opts.tol) return x;
  std::ostringstream os;
  os << "steady_state_map: no convergence after " << opts.max_iter << " iterations (residual "
     << res << ")";
  throw SolverError(os.str(), x, res);
}

SpectralInfo steady_state_stability(const InputVec& u, const CstrParams& p,
                                    const NewtonOptions& opts) {
  const StateVec x = steady_state_map(u, p, opts);
  return spectral_info(cstr_jacobian(x, u, p));
}

}  // namespace estrack
