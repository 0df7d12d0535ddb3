#pragma once

// Closed-loop simulation: plant x' = f(x, u), extremum-seeking controller
// u' = es_rhs(t, |x - x*(t)|^2), and the reference plant x*' = f(x*, u*(t)),
// integrated as one coupled ODE on a single mesh.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "estrack/controller.hpp"
#include "estrack/linalg.hpp"
#include "estrack/ode.hpp"
#include "estrack/plant.hpp"
#include "estrack/reference.hpp"

namespace estrack {

enum class ControllerMode {
  ExtremumSeeking,
  // Controller off: the plant is driven by u*(t) directly and u records u*(t).
  PinnedToReference,
};

struct ClosedLoopOptions {
  int samples_per_period = 2000;  // output stride, per reference period
  ControllerMode controller = ControllerMode::ExtremumSeeking;
  bool clamp_inputs = false;  // feed the plant u clamped to the input box
};

struct ClosedLoopState {
  double t = 0.0;
  StateVec x{};
  InputVec u{};
  StateVec x_star{};

  // Cost y = |x - x*|^2, always recomputed from the stored states.
  double y() const { return squared_norm(x - x_star); }
};

struct Termination {
  ode::Status status = ode::Status::Completed;
  double t = 0.0;
  std::string message;
};

struct RunMetadata {
  CstrParams params;
  ReferenceSpec reference;
  StateVec x_star_0{};
  ESGains gains;
  ode::IntegratorConfig integrator;
  ClosedLoopOptions options;
  double t_end = 0.0;
  ode::StepStats stats;
  double wall_seconds = 0.0;
};

struct Trajectory {
  std::vector<ClosedLoopState> samples;
  RunMetadata meta;
  std::optional<Termination> termination;  // set when the run stopped early

  bool completed() const { return !termination.has_value(); }
  const ClosedLoopState& final_state() const { return samples.back(); }
};

// Requires x0 in D and t_end > 0. For RK4Fixed, dt <= eta eps / 50 is
// enforced; for RKF45Adaptive, dt_max is capped at eta eps / 50. A state
// leaving D ends the run early with `termination` set; an adaptive step
// underflow throws StiffnessError.
Trajectory integrate_closed_loop(const StateVec& x0, const InputVec& u0, const ReferenceTrajectory& ref,
                                 const ESGains& gains, const CstrParams& p,
                                 const ode::IntegratorConfig& icfg, double t_end,
                                 const ClosedLoopOptions& options = {});

struct PlantRun {
  std::vector<double> t;
  std::vector<StateVec> x;
  ode::StepStats stats;
  std::optional<Termination> termination;

  const StateVec& final_state() const { return x.back(); }
};

// Open loop with a frozen input. output_interval <= 0 means t_end / 1000.
PlantRun integrate_plant_constant_u(const StateVec& x0, const InputVec& u, const CstrParams& p,
                                    const ode::IntegratorConfig& icfg, double t_end,
                                    double output_interval = 0.0);

struct ReducedSample {
  double t = 0.0;
  InputVec u_bar{};
  StateVec x_star{};
};

struct ReducedTrajectory {
  std::vector<ReducedSample> samples;
  ode::StepStats stats;

  const ReducedSample& final_state() const { return samples.back(); }
};

// Averaged system on the steady-state map with the phase frozen at the start
// of each window [m eta eps, (m + 1) eta eps). The reference is co-integrated
// (or read from the dense table). Throws SolverError if l(u_bar) fails.
// output_interval <= 0 means one dither period.
ReducedTrajectory integrate_reduced(const InputVec& u0, const ReferenceTrajectory& ref,
                                    const ESGains& gains, const CstrParams& p,
                                    const ode::IntegratorConfig& icfg, double t_end,
                                    double output_interval = 0.0);

// CSV with header t,x1,x2,u1,u2,xs1,xs2,y and 17 significant digits.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

}  // namespace estrack
