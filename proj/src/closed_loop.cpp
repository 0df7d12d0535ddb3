#include "estrack/closed_loop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "estrack/csv.hpp"
#include "estrack/errors.hpp"

namespace estrack {

namespace {

// Integrator step ceiling relative to one dither period.
constexpr double kStepsPerDither = 50.0;

void check_horizon(double t_end) {
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw ContractError("t_end must be positive and finite");
}

// Merges the caller's events with the bang-bang switching instants.
std::vector<double> merged_events(const ode::IntegratorConfig& icfg, const ReferenceSpec& spec, double t_end,
                                  std::vector<double> extra = {}) {
  std::vector<double> events = switching_times(spec, 0.0, t_end);
  events.insert(events.end(), icfg.event_times.begin(), icfg.event_times.end());
  events.insert(events.end(), extra.begin(), extra.end());
  std::sort(events.begin(), events.end());
  return events;
}

// Applies the dither-resolution ceiling to the integrator settings.
ode::IntegratorConfig resolve_dither_step(ode::IntegratorConfig icfg, const ESGains& gains) {
  const double ceiling = dither_period(gains) / kStepsPerDither;
  if (icfg.method == ode::Method::RK4Fixed) {
    if (icfg.dt > ceiling * (1.0 + 1e-12)) {
      std::ostringstream os;
      os << "integrator dt " << icfg.dt << " exceeds eta*eps/50 = " << ceiling;
      throw ContractError(os.str());
    }
  } else {
    icfg.dt_max = std::min(icfg.dt_max, ceiling);
    icfg.dt = std::min(icfg.dt, icfg.dt_max);
    icfg.dt_min = std::min(icfg.dt_min, icfg.dt_max);
  }
  return icfg;
}

std::string describe(const InputVec& u) {
  std::ostringstream os;
  os.precision(17);
  os << "(" << u[0] << ", " << u[1] << ")";
  return os.str();
}

}  // namespace

Trajectory integrate_closed_loop(const StateVec& x0, const InputVec& u0, const ReferenceTrajectory& ref,
                                 const ESGains& gains, const CstrParams& p,
                                 const ode::IntegratorConfig& icfg, double t_end,
                                 const ClosedLoopOptions& options) {
  const auto wall_start = std::chrono::steady_clock::now();
  p.validate();
  icfg.validate();
  check_horizon(t_end);
  if (!in_domain(x0)) throw DomainError("integrate_closed_loop: x0 outside D", x0);
  if (!std::isfinite(u0[0]) || !std::isfinite(u0[1])) throw ContractError("integrate_closed_loop: u0 not finite");
  if (options.samples_per_period < 1) throw ContractError("integrate_closed_loop: samples_per_period must be >= 1");

  const bool seeking = options.controller == ControllerMode::ExtremumSeeking;
  ode::IntegratorConfig cfg = icfg;
  if (seeking) {
    gains.validate();
    if (gains.n_u != 2) throw ContractError("integrate_closed_loop: the plant has two inputs, n_u must be 2");
    cfg = resolve_dither_step(icfg, gains);
  }

  const ReferenceSpec& spec = ref.spec();
  const bool dense = ref.mode() == EvaluationMode::DenseGrid;
  const double output_interval = ref.period() / static_cast<double>(options.samples_per_period);
  const auto mesh = ode::build_mesh(0.0, t_end, output_interval, merged_events(icfg, spec, t_end));

  // State layout: x (0, 1), u (2, 3), x* (4, 5). In DenseGrid mode x* is read
  // from the table and slots 4, 5 stay frozen.
  std::array<double, 6> s{x0[0], x0[1], u0[0], u0[1], 0.0, 0.0};
  const StateVec xs0 = dense ? ref.state(0.0) : ref.x_star_0();
  s[4] = xs0[0];
  s[5] = xs0[1];

  auto x_star_of = [&](double t, const std::array<double, 6>& st) -> StateVec {
    return dense ? ref.state(t) : StateVec{st[4], st[5]};
  };

  auto rhs = [&](const ode::StageTime& at, const std::array<double, 6>& st, std::array<double, 6>& ds) {
    const StateVec x{st[0], st[1]};
    const StateVec xs = x_star_of(at.t, st);
    const InputVec us = reference_input(at, spec);
    InputVec u_plant = seeking ? InputVec{st[2], st[3]} : us;
    if (options.clamp_inputs) u_plant = p.clamp_to_box(u_plant);
    const StateVec dx = cstr_rhs(x, u_plant, p);
    ds[0] = dx[0];
    ds[1] = dx[1];
    if (seeking) {
      es_rhs(at.t, squared_norm(x - xs), gains, std::span<double>(ds.data() + 2, 2));
    } else {
      ds[2] = 0.0;
      ds[3] = 0.0;
    }
    if (dense) {
      ds[4] = 0.0;
      ds[5] = 0.0;
    } else {
      const StateVec dxs = cstr_rhs(xs, us, p);
      ds[4] = dxs[0];
      ds[5] = dxs[1];
    }
  };

  Trajectory traj;
  traj.samples.reserve(mesh.size() + 2);
  auto record = [&](double t, const std::array<double, 6>& st) {
    ClosedLoopState cs;
    cs.t = t;
    cs.x = {st[0], st[1]};
    cs.u = seeking ? InputVec{st[2], st[3]} : reference_input(t, spec);
    cs.x_star = x_star_of(t, st);
    traj.samples.push_back(cs);
  };
  record(0.0, s);

  auto accept = [&](double, const std::array<double, 6>& st) {
    return in_domain({st[0], st[1]}) && (dense || in_domain({st[4], st[5]}));
  };
  auto at_mesh = [&](const ode::MeshPoint& mp, const std::array<double, 6>& st) {
    if (mp.output) record(mp.t, st);
  };
  const ode::Outcome outcome = ode::integrate(rhs, s, 0.0, mesh, cfg, accept, at_mesh);

  if (outcome.status == ode::Status::StepUnderflow) {
    throw StiffnessError("integrate_closed_loop: " + outcome.message, outcome.t_stop, cfg.dt_min);
  }
  if (outcome.status == ode::Status::DomainExit) {
    if (outcome.t_stop > traj.samples.back().t) record(outcome.t_stop, s);
    traj.termination = Termination{outcome.status, outcome.t_stop, outcome.message};
  }

  RunMetadata& meta = traj.meta;
  meta.params = p;
  meta.reference = spec;
  meta.x_star_0 = ref.x_star_0();
  meta.gains = gains;
  meta.integrator = cfg;
  meta.options = options;
  meta.t_end = t_end;
  meta.stats = outcome.stats;
  meta.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return traj;
}

PlantRun integrate_plant_constant_u(const StateVec& x0, const InputVec& u, const CstrParams& p,
                                    const ode::IntegratorConfig& icfg, double t_end, double output_interval) {
  p.validate();
  check_horizon(t_end);
  if (!in_domain(x0)) throw DomainError("integrate_plant_constant_u: x0 outside D", x0);
  if (!(output_interval > 0.0)) output_interval = t_end / 1000.0;
  const auto mesh = ode::build_mesh(0.0, t_end, output_interval, icfg.event_times);

  PlantRun run;
  run.t.push_back(0.0);
  run.x.push_back(x0);
  std::array<double, 2> y = x0;
  auto rhs = [&](const ode::StageTime&, const std::array<double, 2>& st, std::array<double, 2>& ds) {
    ds = cstr_rhs(st, u, p);
  };
  const ode::Outcome outcome = ode::integrate(
      rhs, y, 0.0, mesh, icfg, [](double, const std::array<double, 2>& st) { return in_domain(st); },
      [&](const ode::MeshPoint& mp, const std::array<double, 2>& st) {
        if (!mp.output) return;
        run.t.push_back(mp.t);
        run.x.push_back(st);
      });
  run.stats = outcome.stats;
  if (outcome.status == ode::Status::StepUnderflow) {
    throw StiffnessError("integrate_plant_constant_u: " + outcome.message, outcome.t_stop, icfg.dt_min);
  }
  if (outcome.status == ode::Status::DomainExit) {
    if (outcome.t_stop > run.t.back()) {
      run.t.push_back(outcome.t_stop);
      run.x.push_back(y);
    }
    run.termination = Termination{outcome.status, outcome.t_stop, outcome.message};
  }
  return run;
}

ReducedTrajectory integrate_reduced(const InputVec& u0, const ReferenceTrajectory& ref, const ESGains& gains,
                                    const CstrParams& p, const ode::IntegratorConfig& icfg, double t_end,
                                    double output_interval) {
  p.validate();
  gains.validate();
  icfg.validate();
  check_horizon(t_end);
  if (gains.n_u != 2) throw ContractError("integrate_reduced: n_u must be 2");

  const double window = dither_period(gains);
  if (!(output_interval > 0.0)) output_interval = window;
  std::vector<double> boundaries;
  for (long long m = 1;; ++m) {
    const double tb = static_cast<double>(m) * window;
    if (tb >= t_end) break;
    boundaries.push_back(tb);
  }
  const ReferenceSpec& spec = ref.spec();
  const auto mesh = ode::build_mesh(0.0, t_end, output_interval, merged_events(icfg, spec, t_end, boundaries));
  const ode::IntegratorConfig cfg = resolve_dither_step(icfg, gains);
  const bool dense = ref.mode() == EvaluationMode::DenseGrid;

  // State layout: u_bar (0, 1), x* (2, 3).
  const StateVec xs0 = dense ? ref.state(0.0) : ref.x_star_0();
  std::array<double, 4> s{u0[0], u0[1], xs0[0], xs0[1]};
  StateVec xs_m = xs0;
  std::size_t next_boundary = 0;

  auto rhs = [&](const ode::StageTime& at, const std::array<double, 4>& st, std::array<double, 4>& ds) {
    const InputVec ub{st[0], st[1]};
    const StateVec xs = dense ? ref.state(at.t) : StateVec{st[2], st[3]};
    StateVec l;
    try {
      l = steady_state_map(ub, p);
    } catch (const SolverError& e) {
      throw SolverError("integrate_reduced: steady-state map failed at u_bar = " + describe(ub) + ": " + e.what(),
                        ub, e.residual());
    } catch (const DomainError& e) {
      throw SolverError("integrate_reduced: steady-state map left D at u_bar = " + describe(ub) + ": " + e.what(),
                        ub, std::numeric_limits<double>::quiet_NaN());
    }
    const InputVec rate = reduced_rate(at.t, squared_norm(l - xs), squared_norm(l - xs_m), gains);
    ds[0] = rate[0];
    ds[1] = rate[1];
    if (dense) {
      ds[2] = 0.0;
      ds[3] = 0.0;
    } else {
      const StateVec dxs = cstr_rhs(xs, reference_input(at, spec), p);
      ds[2] = dxs[0];
      ds[3] = dxs[1];
    }
  };

  ReducedTrajectory out;
  auto record = [&](double t, const std::array<double, 4>& st) {
    out.samples.push_back({t, {st[0], st[1]}, dense ? ref.state(t) : StateVec{st[2], st[3]}});
  };
  record(0.0, s);
  auto at_mesh = [&](const ode::MeshPoint& mp, const std::array<double, 4>& st) {
    const double tol = 1e-9 * std::max(1.0, std::abs(mp.t));
    while (next_boundary < boundaries.size() && boundaries[next_boundary] <= mp.t + tol) {
      if (std::abs(boundaries[next_boundary] - mp.t) <= tol) {
        xs_m = dense ? ref.state(boundaries[next_boundary]) : StateVec{st[2], st[3]};
      }
      ++next_boundary;
    }
    if (mp.output) record(mp.t, st);
  };
  const ode::Outcome outcome = ode::integrate(
      rhs, s, 0.0, mesh, cfg,
      [&](double, const std::array<double, 4>& st) { return dense || in_domain({st[2], st[3]}); }, at_mesh);
  out.stats = outcome.stats;
  if (outcome.status == ode::Status::StepUnderflow) {
    throw StiffnessError("integrate_reduced: " + outcome.message, outcome.t_stop, cfg.dt_min);
  }
  if (outcome.status == ode::Status::DomainExit) {
    throw DomainError("integrate_reduced: reference left D: " + outcome.message, {s[2], s[3]});
  }
  return out;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "t,x1,x2,u1,u2,xs1,xs2,y\n";
  for (const ClosedLoopState& s : traj.samples) {
    os << format_double(s.t) << ',' << format_double(s.x[0]) << ',' << format_double(s.x[1]) << ','
       << format_double(s.u[0]) << ',' << format_double(s.u[1]) << ',' << format_double(s.x_star[0]) << ','
       << format_double(s.x_star[1]) << ',' << format_double(s.y()) << '\n';
  }
}

}  // namespace estrack
