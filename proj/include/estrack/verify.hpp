#pragma once

// Self-checks of the model, solvers and controller against known values and
// properties. Each suite reports measured values next to their tolerances.

#include <iosfwd>
#include <string>
#include <vector>

namespace estrack::verify {

struct Check {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
  bool gating = true;  // informational checks never fail a suite
};

struct SuiteResult {
  std::string suite;
  std::vector<Check> checks;
  double seconds = 0.0;

  bool passed() const;
};

SuiteResult jacobian();
SuiteResult steady_state();
SuiteResult periodic_orbit();
SuiteResult tracking();
SuiteResult reduced_system();
SuiteResult contraction();
SuiteResult integrator();
SuiteResult controller();

// jacobian, steady-state, periodic-orbit, tracking, reduced-system,
// contraction, integrator, controller.
const std::vector<std::string>& suite_names();

// Throws std::invalid_argument for an unknown name.
SuiteResult run_suite(const std::string& name);

void print(std::ostream& os, const SuiteResult& result);

// Frozen tracking baselines: mean sqrt(y) over the first and last period of
// the two-period reference runs.
struct TrackingBaseline {
  double first_period;
  double final_period;
};
TrackingBaseline trig_baseline();
TrackingBaseline bang_bang_baseline();

}  // namespace estrack::verify
