#include "estrack/reference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "estrack/errors.hpp"

namespace estrack {

namespace {

// Sign of sin(2 pi t / T) from the phase t/T mod 1, exact at the zeros.
double square_wave(double t, double period) {
  const double s = t / period;
  const double frac = s - std::floor(s);
  if (frac == 0.0 || frac == 0.5) return 0.0;
  return frac < 0.5 ? 1.0 : -1.0;
}

}  // namespace

void ReferenceSpec::validate(const CstrParams& p) const {
  if (!(period > 0.0) || !std::isfinite(period)) throw ContractError("reference: period must be positive");
  // u*(t) ranges over [-|a_j|, |a_j|] for both waveforms.
  const double a1 = std::abs(amplitude[0]);
  const double a2 = std::abs(amplitude[1]);
  if (!std::isfinite(a1) || !std::isfinite(a2)) throw ContractError("reference: amplitudes must be finite");
  if (-a1 < p.u1_min || a1 > p.u1_max || -a2 < p.u2_min || a2 > p.u2_max) {
    throw ContractError("reference: amplitudes leave the plant's input box");
  }
}

InputVec reference_input(double t, const ReferenceSpec& spec) {
  return reference_input(ode::StageTime{t, t}, spec);
}

InputVec reference_input(const ode::StageTime& at, const ReferenceSpec& spec) {
  double s = 0.0;
  if (spec.waveform == Waveform::Trig) {
    s = std::sin(2.0 * std::numbers::pi * at.t / spec.period);
  } else {
    s = square_wave(at.branch, spec.period);
  }
  return s * spec.amplitude;
}

std::vector<double> switching_times(const ReferenceSpec& spec, double t0, double t1) {
  std::vector<double> out;
  if (spec.waveform != Waveform::BangBang) return out;
  const double half = 0.5 * spec.period;
  for (auto k = static_cast<long long>(std::floor(t0 / half)) + 1;; ++k) {
    const double t = static_cast<double>(k) * half;
    if (t >= t1) break;
    if (t > t0) out.push_back(t);
  }
  return out;
}

ode::IntegratorConfig default_orbit_integrator() {
  ode::IntegratorConfig cfg;
  cfg.method = ode::Method::RK4Fixed;
  cfg.dt = 1e-3;
  return cfg;
}

StateVec reference_flow(const StateVec& x0, double t0, double t1, const ReferenceSpec& spec,
                        const CstrParams& p, const ode::IntegratorConfig& icfg) {
  if (t1 == t0) return x0;
  std::vector<double> events = switching_times(spec, t0, t1);
  events.insert(events.end(), icfg.event_times.begin(), icfg.event_times.end());
  std::sort(events.begin(), events.end());
  const auto mesh = ode::build_mesh(t0, t1, t1 - t0, events);
  std::array<double, 2> y = x0;
  auto rhs = [&](const ode::StageTime& at, const std::array<double, 2>& s, std::array<double, 2>& ds) {
    ds = cstr_rhs(s, reference_input(at, spec), p);
  };
  const auto outcome = ode::integrate(
      rhs, y, t0, mesh, icfg, [](double, const std::array<double, 2>& s) { return in_domain(s); },
      [](const ode::MeshPoint&, const std::array<double, 2>&) {});
  if (outcome.status == ode::Status::DomainExit) {
    throw DomainError("reference_flow: " + outcome.message, y);
  }
  if (outcome.status == ode::Status::StepUnderflow) {
    throw StiffnessError("reference_flow: " + outcome.message, outcome.t_stop, icfg.dt_min);
  }
  return y;
}

StateVec find_periodic_orbit(const ReferenceSpec& spec, const CstrParams& p, const StateVec& x_guess,
                             double tol, const OrbitOptions& opts) {
  if (!in_domain(x_guess)) throw DomainError("find_periodic_orbit: initial guess outside D", x_guess);
  const double T = spec.period;
  auto defect = [&](const StateVec& x) {
    return reference_flow(x, 0.0, T, spec, p, opts.integrator) - x;
  };

  StateVec x = x_guess;
  Vec2 F = defect(x);
  double res = norm(F);
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    if (res <= tol) return x;
    const double h = opts.fd_step;
    Mat2 dF{};
    for (int j = 0; j < 2; ++j) {
      StateVec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      // Phi(x +- h e_j) - (x +- h e_j) differences to the monodromy minus identity.
      const Vec2 col = (1.0 / (2.0 * h)) * (defect(xp) - defect(xm));
      dF[0][j] = col[0];
      dF[1][j] = col[1];
    }
    Vec2 step;
    if (!solve2(dF, -F, step)) throw SolverError("find_periodic_orbit: singular shooting Jacobian", x, res);
    double lambda = 1.0;
    bool accepted = false;
    for (int k = 0; k < 20; ++k, lambda *= 0.5) {
      const StateVec trial = x + lambda * step;
      if (!in_domain(trial)) continue;
      const Vec2 Ft = defect(trial);
      if (norm(Ft) < res) {
        x = trial;
        F = Ft;
        res = norm(Ft);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  if (res <= tol) return x;
  std::ostringstream os;
  os << "find_periodic_orbit: shooting did not converge, defect " << res << " > tol " << tol;
  throw SolverError(os.str(), x, res);
}

ReferenceTrajectory::ReferenceTrajectory(ReferenceSpec spec, CstrParams params, StateVec x_star_0,
                                         EvaluationMode mode, double grid_step,
                                         ode::IntegratorConfig integrator)
    : spec_(spec),
      params_(params),
      x_star_0_(x_star_0),
      mode_(mode),
      grid_h_(grid_step),
      integrator_(std::move(integrator)) {
  params_.validate();
  spec_.validate(params_);
  if (!in_domain(x_star_0_)) throw DomainError("reference: x*(0) outside D", x_star_0_);
  const double T = spec_.period;
  defect_ = norm(reference_flow(x_star_0_, 0.0, T, spec_, params_, integrator_) - x_star_0_);

  if (mode_ != EvaluationMode::DenseGrid) return;
  if (!(grid_step > 0.0)) throw ContractError("reference: grid step must be positive");
  auto n = static_cast<std::size_t>(std::ceil(T / grid_step));
  if (n % 2 == 1) ++n;  // keep T/2 on the grid for bang-bang switching
  n = std::max<std::size_t>(n, 2);
  grid_h_ = T / static_cast<double>(n);
  grid_t_.resize(n + 1);
  grid_x_.resize(n + 1);
  grid_d_left_.resize(n);
  grid_d_right_.resize(n);
  grid_t_[0] = 0.0;
  grid_x_[0] = x_star_0_;
  for (std::size_t i = 1; i <= n; ++i) {
    grid_t_[i] = (i == n) ? T : static_cast<double>(i) * grid_h_;
    grid_x_[i] = reference_flow(grid_x_[i - 1], grid_t_[i - 1], grid_t_[i], spec_, params_, integrator_);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double branch = 0.5 * (grid_t_[i] + grid_t_[i + 1]);
    grid_d_left_[i] = cstr_rhs(grid_x_[i], reference_input(ode::StageTime{grid_t_[i], branch}, spec_), params_);
    grid_d_right_[i] =
        cstr_rhs(grid_x_[i + 1], reference_input(ode::StageTime{grid_t_[i + 1], branch}, spec_), params_);
  }
}

ReferenceTrajectory ReferenceTrajectory::solve(const ReferenceSpec& spec, const CstrParams& params,
                                               const StateVec& x_guess, double tol, EvaluationMode mode,
                                               double grid_step, const OrbitOptions& opts) {
  const StateVec x0 = find_periodic_orbit(spec, params, x_guess, tol, opts);
  return ReferenceTrajectory(spec, params, x0, mode, grid_step, opts.integrator);
}

double ReferenceTrajectory::wrap(double t) const {
  const double T = spec_.period;
  const double r = t - T * std::floor(t / T);
  return r >= T ? 0.0 : r;
}

StateVec ReferenceTrajectory::state(double t) const {
  if (mode_ == EvaluationMode::CoIntegrate) {
    if (t < 0.0) throw ContractError("reference_state: t must be nonnegative");
    return reference_flow(x_star_0_, 0.0, t, spec_, params_, integrator_);
  }
  const double tau = wrap(t);
  const std::size_t n = grid_d_left_.size();
  auto i = static_cast<std::size_t>(tau / grid_h_);
  if (i >= n) i = n - 1;
  const double h = grid_t_[i + 1] - grid_t_[i];
  const double s = (tau - grid_t_[i]) / h;
  const double s2 = s * s;
  const double s3 = s2 * s;
  const double h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
  const double h10 = s3 - 2.0 * s2 + s;
  const double h01 = -2.0 * s3 + 3.0 * s2;
  const double h11 = s3 - s2;
  StateVec out;
  for (int k = 0; k < 2; ++k) {
    out[k] = h00 * grid_x_[i][k] + h10 * h * grid_d_left_[i][k] + h01 * grid_x_[i + 1][k] +
             h11 * h * grid_d_right_[i][k];
  }
  return out;
}

}  // namespace estrack
