#pragma once

// Model-free extremum-seeking law driven only by the scalar cost y = h(t, x).
//
//   u_j' = (2 gamma / (eta sqrt(eps))) sqrt(pi j y) sin(ln y + 2 pi j t / (eta eps))
//
// for j = 1..n_u. The continuous extension at y = 0 is u' = 0.

#include <span>
#include <vector>

#include "estrack/linalg.hpp"
#include "estrack/plant.hpp"

namespace estrack {

struct ESGains {
  double gamma = 150.0;   // control gain
  double epsilon = 1e-3;  // time-scale parameter
  double eta = 1.0;       // slow-down parameter
  int n_u = 2;
  double h_floor = 1e-12;  // costs at or below this give a zero rate

  void validate() const;

  // Base dither frequency 2 pi / (eta eps).
  double dither_frequency() const;
};

// eta * eps: one period of the base dither, the averaging window.
double dither_period(const ESGains& gains);

// Writes n_u rates into out. Throws ContractError for y < 0 or a size mismatch.
void es_rhs(double t, double y, const ESGains& gains, std::span<double> out);
std::vector<double> es_rhs(double t, double y, const ESGains& gains);

// (2 gamma / (eta sqrt(eps))) sqrt(pi y n_u (n_u + 1) / 2): upper bound on |es_rhs|.
double es_rate_bound(double y, const ESGains& gains);

// Rate of the averaged (reduced) system given the cost on the steady-state
// map now and at the frozen phase time:
//   amplitude from h_now = h(t, l(u_bar)), phase from h_frozen = h(t_m, l(u_bar)).
InputVec reduced_rate(double t, double h_now, double h_frozen, const ESGains& gains);

// Reduced-system right-hand side. `cost(t, x)` evaluates h(t, x); the state
// enters only through the steady-state map l(u_bar). Requires n_u = 2.
template <class Cost>
InputVec reduced_rhs(double t, const InputVec& u_bar, double t_m, Cost&& cost, const CstrParams& p,
                     const ESGains& gains, const NewtonOptions& newton = {}) {
  const StateVec x_ss = steady_state_map(u_bar, p, newton);
  return reduced_rate(t, cost(t, x_ss), cost(t_m, x_ss), gains);
}

// Start of the averaging window [m eta eps, (m + 1) eta eps) containing t.
double window_start(double t, const ESGains& gains);

}  // namespace estrack
