#include "estrack/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "estrack/errors.hpp"

namespace estrack {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// x*(t) at each time of `times`. CoIntegrate mode integrates forward through
// the times in sorted order instead of restarting from 0 for every point.
std::vector<StateVec> reference_states(const ReferenceTrajectory& ref, const std::vector<double>& times) {
  std::vector<StateVec> out(times.size());
  if (ref.mode() == EvaluationMode::DenseGrid) {
    for (std::size_t i = 0; i < times.size(); ++i) out[i] = ref.state(times[i]);
    return out;
  }
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  const ode::IntegratorConfig& icfg = ref.integrator();
  double t = 0.0;
  StateVec x = ref.x_star_0();
  for (std::size_t idx : order) {
    if (times[idx] < 0.0) throw ContractError("reference_states: times must be nonnegative");
    if (times[idx] > t) {
      x = reference_flow(x, t, times[idx], ref.spec(), ref.params(), icfg);
      t = times[idx];
    }
    out[idx] = x;
  }
  return out;
}

double max_abs_symmetric_eigenvalue(double a, double b, double d) {
  const double mean = 0.5 * (a + d);
  const double r = std::hypot(0.5 * (a - d), b);
  return std::max(std::abs(mean + r), std::abs(mean - r));
}

}  // namespace

const StateVec& SteadyStateCache::at(const InputVec& u) {
  const auto key = std::make_pair(u[0], u[1]);
  auto it = table_.find(key);
  if (it == table_.end()) it = table_.emplace(key, steady_state_map(u, p_, opts_)).first;
  return it->second;
}

TrackingReport tracking_report(const Trajectory& traj, const ReferenceTrajectory& ref, const ESGains& gains,
                               double rho, double window) {
  (void)gains;  // the error signals do not depend on the controller tuning
  if (window <= 0.0) window = ref.period();
  if (traj.samples.size() < 2) throw ContractError("tracking_report: trajectory has fewer than two samples");
  const double t0 = traj.samples.front().t;
  const double t_end = traj.samples.back().t;
  if (t_end - t0 < 2.0 * window * (1.0 - 1e-12)) {
    throw ContractError("tracking_report: trajectory must cover at least two windows");
  }

  TrackingReport rep;
  rep.rho = rho;
  rep.window = window;
  SteadyStateCache cache(ref.params());
  const std::size_t n = traj.samples.size();
  rep.t.resize(n);
  rep.e_theorem.resize(n);
  rep.e_reference.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const ClosedLoopState& s = traj.samples[i];
    const InputVec us = ref.input(s.t);
    rep.t[i] = s.t;
    rep.e_theorem[i] = norm(s.x - cache.at(us)) + norm(s.u - us);
    rep.e_reference[i] = std::sqrt(s.y());
  }

  // next_bad[i]: first index >= i with e > rho (n if none).
  std::vector<std::size_t> next_bad(n + 1, n);
  for (std::size_t i = n; i-- > 0;) next_bad[i] = rep.e_theorem[i] > rho ? i : next_bad[i + 1];
  const double tol = 1e-9 * std::max(1.0, std::abs(t_end));
  for (std::size_t i = 0; i < n; ++i) {
    const double ti = rep.t[i];
    if (ti + window > t_end + tol) break;
    if (next_bad[i] == i) continue;
    if (next_bad[i] == n || rep.t[next_bad[i]] > ti + window + tol) {
      rep.t_f = ti;
      rep.bound_satisfied = next_bad[i] == n;
      double sup_e = 0.0;
      double sup_c = 0.0;
      for (std::size_t j = i; j < n; ++j) {
        sup_e = std::max(sup_e, rep.e_theorem[j]);
        sup_c = std::max(sup_c, rep.e_reference[j]);
      }
      rep.sup_error_after_tf = sup_e;
      rep.sup_sqrt_cost_after_tf = sup_c;
      break;
    }
  }
  if (!rep.t_f) {
    rep.sup_error_after_tf = kNaN;
    rep.sup_sqrt_cost_after_tf = kNaN;
  }
  rep.mean_sqrt_cost_per_period = per_period_cost(traj, ref.period());
  return rep;
}

std::vector<double> per_period_cost(const Trajectory& traj, double period) {
  if (!(period > 0.0)) throw ContractError("per_period_cost: period must be positive");
  std::vector<double> out;
  const auto& s = traj.samples;
  if (s.size() < 2) return out;
  const double t0 = s.front().t;
  const double t_end = s.back().t;
  const double tol = 1e-9 * std::max(1.0, std::abs(t_end));

  // Trapezoid over every sample segment overlapping [a, b], with linear
  // interpolation where a segment is cut by a period boundary.
  std::size_t first = 0;
  for (long long k = 0;; ++k) {
    const double a = t0 + static_cast<double>(k) * period;
    const double b = a + period;
    if (b > t_end + tol) break;
    while (first + 1 < s.size() && s[first + 1].t <= a) ++first;
    double integral = 0.0;
    for (std::size_t i = first; i + 1 < s.size() && s[i].t < b; ++i) {
      const double ta = s[i].t, tb = s[i + 1].t;
      const double lo = std::max(a, ta), hi = std::min(b, tb);
      if (!(hi > lo)) continue;
      const double va = std::sqrt(s[i].y()), vb = std::sqrt(s[i + 1].y());
      auto at = [&](double t) { return va + (vb - va) * (t - ta) / (tb - ta); };
      integral += 0.5 * (at(lo) + at(hi)) * (hi - lo);
    }
    out.push_back(integral / period);
  }
  return out;
}

std::vector<InputVec> box_grid(const CstrParams& p, int n1, int n2) {
  if (n1 < 1 || n2 < 1) throw ContractError("box_grid: need at least one point per axis");
  auto axis = [](double lo, double hi, int n, int k) {
    return n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
  };
  std::vector<InputVec> out;
  out.reserve(static_cast<std::size_t>(n1 * n2));
  for (int a = 0; a < n1; ++a) {
    for (int b = 0; b < n2; ++b) out.push_back({axis(p.u1_min, p.u1_max, n1, a), axis(p.u2_min, p.u2_max, n2, b)});
  }
  return out;
}

std::vector<double> period_grid(double period, int n) {
  if (n < 1) throw ContractError("period_grid: need at least one point");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) out[static_cast<std::size_t>(k)] = period * static_cast<double>(k) / n;
  return out;
}

AssumptionProbe probe_assumption3(const ReferenceTrajectory& ref, const CstrParams& p,
                                  const std::vector<InputVec>& u_grid, const std::vector<double>& t_grid,
                                  const ProbeOptions& opts) {
  if (u_grid.empty() || t_grid.empty()) throw ContractError("probe_assumption3: empty grid");
  AssumptionProbe out;
  std::ostringstream desc;
  desc << u_grid.size() << " input points x " << t_grid.size() << " times";
  out.grid_description = desc.str();

  SteadyStateCache cache(p);
  std::vector<StateVec> ells;
  ells.reserve(u_grid.size());
  for (const InputVec& u : u_grid) ells.push_back(cache.at(u));
  const std::vector<StateVec> xs = reference_states(ref, t_grid);

  double r_min = std::numeric_limits<double>::infinity();
  double r_max = 0.0;
  double lip = 0.0;
  GradientProbe grad;
  grad.fd_step = opts.fd_step;
  grad.alpha21_hat = std::numeric_limits<double>::infinity();

  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    const InputVec us = ref.input(t_grid[k]);
    const StateVec& x_star = xs[k];
    auto cost = [&](const InputVec& u) { return squared_norm(cache.at(u) - x_star); };

    for (std::size_t i = 0; i < u_grid.size(); ++i) {
      const double du = norm(u_grid[i] - us);
      if (du < 1e-9) {
        ++out.excluded_samples;
      } else {
        const double r = norm(ells[i] - x_star) / du;
        r_min = std::min(r_min, r);
        r_max = std::max(r_max, r);
        ++out.ratio_samples;
      }
      for (std::size_t j = i + 1; j < u_grid.size(); ++j) {
        const double dx = norm(ells[i] - ells[j]);
        if (dx < 1e-12) continue;
        lip = std::max(lip, std::abs(norm(ells[i] - x_star) - norm(ells[j] - x_star)) / dx);
      }

      if (!opts.gradient_probe) continue;
      const double sq = std::sqrt(cost(u_grid[i]));
      if (sq < 1e-9) continue;
      const double s = opts.fd_step;
      const InputVec& u = u_grid[i];
      const double c0 = cost(u);
      const double cpx = cost({u[0] + s, u[1]}), cmx = cost({u[0] - s, u[1]});
      const double cpy = cost({u[0], u[1] + s}), cmy = cost({u[0], u[1] - s});
      const double cpp = cost({u[0] + s, u[1] + s}), cpm = cost({u[0] + s, u[1] - s});
      const double cmp = cost({u[0] - s, u[1] + s}), cmm = cost({u[0] - s, u[1] - s});
      const double g = std::hypot((cpx - cmx) / (2.0 * s), (cpy - cmy) / (2.0 * s));
      const double hxx = (cpx - 2.0 * c0 + cmx) / (s * s);
      const double hyy = (cpy - 2.0 * c0 + cmy) / (s * s);
      const double hxy = (cpp - cpm - cmp + cmm) / (4.0 * s * s);
      grad.alpha21_hat = std::min(grad.alpha21_hat, g / sq);
      grad.alpha22_hat = std::max(grad.alpha22_hat, g / sq);
      grad.alpha3_hat = std::max(grad.alpha3_hat, max_abs_symmetric_eigenvalue(hxx, hxy, hyy));
    }
  }

  double nu = 0.0;
  std::vector<InputVec> us(t_grid.size());
  for (std::size_t k = 0; k < t_grid.size(); ++k) us[k] = ref.input(t_grid[k]);
  for (std::size_t a = 0; a < us.size(); ++a) {
    for (std::size_t b = a + 1; b < us.size(); ++b) nu = std::max(nu, norm(us[a] - us[b]));
  }

  out.alpha11_hat = out.ratio_samples > 0 ? r_min : 0.0;
  out.alpha12_hat = out.ratio_samples > 0 ? r_max : 0.0;
  out.L_h_hat = lip;
  out.nu_hat = nu;
  if (opts.gradient_probe) {
    if (!std::isfinite(grad.alpha21_hat)) grad.alpha21_hat = 0.0;
    out.gradient = grad;
  }
  return out;
}

std::vector<SweepRow> sweep_summary(const std::vector<SweepResult>& results) {
  std::vector<SweepRow> rows;
  rows.reserve(results.size());
  for (const SweepResult& r : results) {
    SweepRow row;
    row.label = r.label;
    row.gamma = r.gains.gamma;
    row.epsilon = r.gains.epsilon;
    row.eta = r.gains.eta;
    row.bound_satisfied = r.report.bound_satisfied;
    row.final_period_cost =
        r.report.mean_sqrt_cost_per_period.empty() ? kNaN : r.report.mean_sqrt_cost_per_period.back();
    row.sup_error_after_tf = r.report.sup_error_after_tf;
    rows.push_back(row);
  }
  for (SweepRow& row : rows) {
    if (!std::isfinite(row.final_period_cost)) continue;
    const SweepRow* best = nullptr;
    for (const SweepRow& other : rows) {
      if (other.gamma != row.gamma || other.eta != row.eta || !std::isfinite(other.final_period_cost)) continue;
      if (!best || other.final_period_cost < best->final_period_cost) best = &other;
    }
    row.small_epsilon_degraded =
        best && row.epsilon < best->epsilon && row.final_period_cost > 2.0 * best->final_period_cost;
  }
  return rows;
}

}  // namespace estrack
