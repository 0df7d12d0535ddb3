#pragma once

// Periodic reference programs u*(t) and the state orbit x*(t) they induce.

#include <vector>

#include "estrack/linalg.hpp"
#include "estrack/ode.hpp"
#include "estrack/plant.hpp"

namespace estrack {

enum class Waveform { Trig, BangBang };

struct ReferenceSpec {
  Waveform waveform = Waveform::Trig;
  double period = 100.0;
  InputVec amplitude{-1.798, -0.06663};  // a_j = u_j^min

  // Amplitudes must keep u*(t) inside the plant's input box.
  void validate(const CstrParams& p) const;

  static ReferenceSpec trig() { return ReferenceSpec{}; }
  static ReferenceSpec bang_bang() { return ReferenceSpec{Waveform::BangBang, 100.0, {-1.798, -0.06663}}; }
};

// Trig:     u*_j(t) = a_j sin(2 pi t / T)
// BangBang: u*_j(t) = a_j sign(sin(2 pi t / T)), sign(0) = 0
InputVec reference_input(double t, const ReferenceSpec& spec);

// Same, but a bang-bang program takes its sign from `at.branch`, giving the
// one-sided limit when at.t sits on a switching instant.
InputVec reference_input(const ode::StageTime& at, const ReferenceSpec& spec);

// Switching instants k T / 2 strictly inside (t0, t1); empty for Trig.
std::vector<double> switching_times(const ReferenceSpec& spec, double t0, double t1);

// Integrates the plant under u*(.) from x0 at t0 to t1.
StateVec reference_flow(const StateVec& x0, double t0, double t1, const ReferenceSpec& spec,
                        const CstrParams& p, const ode::IntegratorConfig& icfg);

ode::IntegratorConfig default_orbit_integrator();

struct OrbitOptions {
  int max_iter = 20;
  double fd_step = 1e-7;  // central-difference step for the monodromy matrix
  ode::IntegratorConfig integrator = default_orbit_integrator();
};

// Shooting: Newton on x0 -> Phi_T(x0) - x0 with a finite-difference monodromy.
// Returns x0 with |Phi_T(x0) - x0| <= tol; throws SolverError carrying the
// final defect otherwise.
StateVec find_periodic_orbit(const ReferenceSpec& spec, const CstrParams& p, const StateVec& x_guess,
                             double tol, const OrbitOptions& opts = {});

enum class EvaluationMode { CoIntegrate, DenseGrid };

// The reference curve {x*(t)}: an immutable periodic initial condition plus,
// in DenseGrid mode, a cubic Hermite table over one period.
class ReferenceTrajectory {
 public:
  ReferenceTrajectory(ReferenceSpec spec, CstrParams params, StateVec x_star_0,
                      EvaluationMode mode = EvaluationMode::CoIntegrate, double grid_step = 0.01,
                      ode::IntegratorConfig integrator = default_orbit_integrator());

  // Runs the shooting solver first.
  static ReferenceTrajectory solve(const ReferenceSpec& spec, const CstrParams& params,
                                   const StateVec& x_guess, double tol,
                                   EvaluationMode mode = EvaluationMode::CoIntegrate,
                                   double grid_step = 0.01, const OrbitOptions& opts = {});

  const ReferenceSpec& spec() const { return spec_; }
  const CstrParams& params() const { return params_; }
  const StateVec& x_star_0() const { return x_star_0_; }
  EvaluationMode mode() const { return mode_; }
  double grid_step() const { return grid_h_; }
  double period() const { return spec_.period; }
  const ode::IntegratorConfig& integrator() const { return integrator_; }

  // |Phi_T(x*(0)) - x*(0)| with this trajectory's integrator.
  double periodicity_defect() const { return defect_; }

  InputVec input(double t) const { return reference_input(t, spec_); }

  // x*(t). CoIntegrate integrates the plant from x*(0) over [0, t]; DenseGrid
  // interpolates the one-period table at t mod T.
  StateVec state(double t) const;

  // Dense table (empty in CoIntegrate mode).
  const std::vector<double>& grid_times() const { return grid_t_; }
  const std::vector<StateVec>& grid_states() const { return grid_x_; }

 private:
  double wrap(double t) const;

  ReferenceSpec spec_;
  CstrParams params_;
  StateVec x_star_0_;
  EvaluationMode mode_;
  double grid_h_;
  ode::IntegratorConfig integrator_;
  double defect_ = 0.0;

  std::vector<double> grid_t_;
  std::vector<StateVec> grid_x_;
  // Derivatives at the left and right ends of each grid interval, taken on the
  // interval's own input branch.
  std::vector<StateVec> grid_d_left_;
  std::vector<StateVec> grid_d_right_;
};

inline StateVec reference_state(double t, const ReferenceTrajectory& ref) { return ref.state(t); }

}  // namespace estrack
