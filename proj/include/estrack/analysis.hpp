#pragma once

// Post-processing of closed-loop runs.
//
// Two error signals are in play and both are reported:
//   e(t)  = |x - l(u*(t))| + |u - u*(t)|   distance to the steady-state curve
//   sqrt(y) = |x - x*(t)|                  distance to the reference orbit
// The periodic orbit x*(t) is not the steady-state curve l(u*(t)), so e does
// not vanish even when the plant follows x* exactly.

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "estrack/closed_loop.hpp"
#include "estrack/controller.hpp"
#include "estrack/linalg.hpp"
#include "estrack/plant.hpp"
#include "estrack/reference.hpp"

namespace estrack {

// Memoized l(u), keyed on the exact input value.
class SteadyStateCache {
 public:
  explicit SteadyStateCache(CstrParams p, NewtonOptions opts = {}) : p_(p), opts_(opts) {}

  const StateVec& at(const InputVec& u);
  std::size_t size() const { return table_.size(); }

 private:
  CstrParams p_;
  NewtonOptions opts_;
  std::map<std::pair<double, double>, StateVec> table_;
};

struct TrackingReport {
  double rho = 0.0;
  double window = 0.0;
  std::optional<double> t_f;  // earliest sample time with e <= rho over [t_f, t_f + window]
  double sup_error_after_tf = 0.0;  // sup of e over [t_f, t_end]; NaN without t_f
  bool bound_satisfied = false;     // e <= rho on all of [t_f, t_end]
  std::vector<double> mean_sqrt_cost_per_period;

  // Per-sample signals, aligned with the trajectory's samples.
  std::vector<double> t;
  std::vector<double> e_theorem;
  std::vector<double> e_reference;  // sqrt(y)
  double sup_sqrt_cost_after_tf = 0.0;  // NaN without t_f
};

// window <= 0 selects one reference period. Requires the trajectory to span at
// least two windows. Throws SolverError if l(u*(t)) fails.
TrackingReport tracking_report(const Trajectory& traj, const ReferenceTrajectory& ref, const ESGains& gains,
                               double rho, double window = 0.0);

// Time average of sqrt(y) over each full period [kT, (k+1)T] covered by the
// samples (trapezoidal in t, linear interpolation at period boundaries).
std::vector<double> per_period_cost(const Trajectory& traj, double period);

struct GradientProbe {
  // alpha21 sqrt(h) <= |grad_u h(t, l(u))| <= alpha22 sqrt(h), |Hess| <= alpha3,
  // from central differences of step `fd_step`.
  double alpha21_hat = 0.0;
  double alpha22_hat = 0.0;
  double alpha3_hat = 0.0;
  double fd_step = 0.0;
};

struct AssumptionProbe {
  double alpha11_hat = 0.0;  // min over the grid of sqrt(h(t, l(u))) / |u - u*(t)|
  double alpha12_hat = 0.0;  // max of the same ratio
  double L_h_hat = 0.0;      // max |sqrt h(t, x) - sqrt h(t, x')| / |x - x'| over x-samples
  double nu_hat = 0.0;       // max |u*(t1) - u*(t2)| over the t-grid
  std::size_t ratio_samples = 0;
  std::size_t excluded_samples = 0;  // |u - u*(t)| < 1e-9
  std::optional<GradientProbe> gradient;
  std::string grid_description;
};

struct ProbeOptions {
  bool gradient_probe = false;
  double fd_step = 1e-5;
};

// The x-samples for L_h are the points l(u) over the u-grid. Throws
// ContractError on an empty grid.
AssumptionProbe probe_assumption3(const ReferenceTrajectory& ref, const CstrParams& p,
                                  const std::vector<InputVec>& u_grid, const std::vector<double>& t_grid,
                                  const ProbeOptions& opts = {});

// n1 x n2 tensor grid over the input box, corners included.
std::vector<InputVec> box_grid(const CstrParams& p, int n1, int n2);

// n equally spaced times in [0, T).
std::vector<double> period_grid(double period, int n);

struct SweepResult {
  ESGains gains;
  TrackingReport report;
  std::string label;
};

struct SweepRow {
  std::string label;
  double gamma = 0.0;
  double epsilon = 0.0;
  double eta = 0.0;
  bool bound_satisfied = false;
  double final_period_cost = 0.0;  // NaN if no full period
  double sup_error_after_tf = 0.0;
  // Cost above twice the best cell with the same (gamma, eta) while using a
  // smaller epsilon: the too-small-epsilon degradation.
  bool small_epsilon_degraded = false;
};

std::vector<SweepRow> sweep_summary(const std::vector<SweepResult>& results);

}  // namespace estrack
