#pragma once

// Explicit Runge-Kutta engines over a mesh of mandatory points.
//
// The caller supplies a sorted mesh of times that the integrator must land on
// exactly (input switching instants and output sample times). Between two mesh
// points the right-hand side is assumed smooth, which keeps the nominal order
// across discontinuities of piecewise-continuous forcing.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "estrack/errors.hpp"

namespace estrack::ode {

// Time at which a right-hand side is evaluated. `branch` lies strictly inside
// the current mesh interval: piecewise inputs pick their branch from it, so a
// stage that lands on a switching instant sees the one-sided limit.
struct StageTime {
  double t;
  double branch;
};

enum class Method { RK4Fixed, RKF45Adaptive };

struct IntegratorConfig {
  Method method = Method::RK4Fixed;
  double dt = 1e-3;  // RK4Fixed step ceiling; RKF45Adaptive initial step
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  double dt_min = 1e-14;
  double dt_max = 1.0;
  std::vector<double> event_times;  // extra mandatory mesh points, ascending

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ContractError("integrator: dt must be positive");
    if (method == Method::RKF45Adaptive) {
      if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) {
        throw ContractError("integrator: tolerances must be positive");
      }
      if (!(dt_min > 0.0) || !(dt_max >= dt_min)) {
        throw ContractError("integrator: need dt_max >= dt_min > 0");
      }
    }
    if (!std::is_sorted(event_times.begin(), event_times.end())) {
      throw ContractError("integrator: event_times must be ascending");
    }
  }
};

struct StepStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  double h_min = std::numeric_limits<double>::infinity();
  double h_max = 0.0;

  void record(double h) {
    ++accepted;
    h_min = std::min(h_min, h);
    h_max = std::max(h_max, h);
  }
};

enum class Status { Completed, DomainExit, StepUnderflow };

struct Outcome {
  Status status = Status::Completed;
  double t_stop = 0.0;
  StepStats stats;
  std::string message;
};

struct MeshPoint {
  double t;
  bool output;
};

// Builds the mesh for [t0, t1]: output samples every `output_interval`
// (measured from t0), the given events, and t1 itself. Points closer than a
// relative 1e-9 are merged, keeping the event time exactly. t0 is not included.
inline std::vector<MeshPoint> build_mesh(double t0, double t1, double output_interval,
                                         const std::vector<double>& events) {
  if (!(t1 > t0)) throw ContractError("mesh: t_end must exceed t_start");
  if (!(output_interval > 0.0)) throw ContractError("mesh: output interval must be positive");
  struct Tagged {
    double t;
    bool output;
    bool exact;
  };
  std::vector<Tagged> pts;
  const auto n_out = static_cast<long long>(std::floor((t1 - t0) / output_interval * (1.0 + 1e-12)));
  pts.reserve(static_cast<std::size_t>(n_out) + events.size() + 1);
  for (long long k = 1; k <= n_out; ++k) {
    pts.push_back({t0 + static_cast<double>(k) * output_interval, true, false});
  }
  for (double e : events) {
    if (e > t0 && e < t1) pts.push_back({e, false, true});
  }
  pts.push_back({t1, true, true});
  std::stable_sort(pts.begin(), pts.end(), [](const Tagged& a, const Tagged& b) { return a.t < b.t; });

  std::vector<MeshPoint> mesh;
  mesh.reserve(pts.size());
  double last_t = t0;
  bool last_exact = true;
  for (const Tagged& p : pts) {
    const double tol = 1e-9 * std::max(1.0, std::abs(p.t));
    if (p.t - last_t <= tol) {
      if (mesh.empty()) continue;  // coincides with t0
      MeshPoint& prev = mesh.back();
      prev.output = prev.output || p.output;
      if (p.exact && !last_exact) prev.t = p.t;
      last_exact = last_exact || p.exact;
      last_t = prev.t;
      continue;
    }
    mesh.push_back({p.t, p.output});
    last_t = p.t;
    last_exact = p.exact;
  }
  return mesh;
}

namespace detail {

template <std::size_t N>
using State = std::array<double, N>;

template <std::size_t N>
inline State<N> axpy(const State<N>& y, double h, const State<N>& k) {
  State<N> out;
  for (std::size_t i = 0; i < N; ++i) out[i] = y[i] + h * k[i];
  return out;
}

}  // namespace detail

// Classic fourth-order Runge-Kutta step.
template <std::size_t N, class Rhs>
void rk4_step(Rhs& rhs, double t, double h, double branch, std::array<double, N>& y) {
  using S = std::array<double, N>;
  S k1, k2, k3, k4;
  rhs(StageTime{t, branch}, y, k1);
  rhs(StageTime{t + 0.5 * h, branch}, detail::axpy(y, 0.5 * h, k1), k2);
  rhs(StageTime{t + 0.5 * h, branch}, detail::axpy(y, 0.5 * h, k2), k3);
  rhs(StageTime{t + h, branch}, detail::axpy(y, h, k3), k4);
  for (std::size_t i = 0; i < N; ++i) y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

// Runge-Kutta-Fehlberg 4(5) step. Writes the fourth-order solution to y_new
// and returns the scaled error norm (<= 1 means the step meets tolerance).
template <std::size_t N, class Rhs>
double rkf45_step(Rhs& rhs, double t, double h, double branch, const std::array<double, N>& y,
                  std::array<double, N>& y_new, double abs_tol, double rel_tol) {
  using S = std::array<double, N>;
  S k1, k2, k3, k4, k5, k6, tmp;
  rhs(StageTime{t, branch}, y, k1);
  for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * (k1[i] / 4.0);
  rhs(StageTime{t + h / 4.0, branch}, tmp, k2);
  for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * (3.0 / 32.0 * k1[i] + 9.0 / 32.0 * k2[i]);
  rhs(StageTime{t + 3.0 * h / 8.0, branch}, tmp, k3);
  for (std::size_t i = 0; i < N; ++i) {
    tmp[i] = y[i] + h * (1932.0 / 2197.0 * k1[i] - 7200.0 / 2197.0 * k2[i] + 7296.0 / 2197.0 * k3[i]);
  }
  rhs(StageTime{t + 12.0 * h / 13.0, branch}, tmp, k4);
  for (std::size_t i = 0; i < N; ++i) {
    tmp[i] = y[i] + h * (439.0 / 216.0 * k1[i] - 8.0 * k2[i] + 3680.0 / 513.0 * k3[i] -
                         845.0 / 4104.0 * k4[i]);
  }
  rhs(StageTime{t + h, branch}, tmp, k5);
  for (std::size_t i = 0; i < N; ++i) {
    tmp[i] = y[i] + h * (-8.0 / 27.0 * k1[i] + 2.0 * k2[i] - 3544.0 / 2565.0 * k3[i] +
                         1859.0 / 4104.0 * k4[i] - 11.0 / 40.0 * k5[i]);
  }
  rhs(StageTime{t + h / 2.0, branch}, tmp, k6);

  double err = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    y_new[i] = y[i] + h * (25.0 / 216.0 * k1[i] + 1408.0 / 2565.0 * k3[i] + 2197.0 / 4104.0 * k4[i] -
                           k5[i] / 5.0);
    const double e = h * (k1[i] / 360.0 - 128.0 / 4275.0 * k3[i] - 2197.0 / 75240.0 * k4[i] +
                          k5[i] / 50.0 + 2.0 / 55.0 * k6[i]);
    const double scale = abs_tol + rel_tol * std::max(std::abs(y[i]), std::abs(y_new[i]));
    err = std::max(err, std::abs(e) / scale);
  }
  return err;
}

// Integrates y from t0 across every mesh point in order.
//
//   rhs(StageTime, const State&, State&)   right-hand side
//   accept(double t, const State&) -> bool called after each accepted step;
//                                          false stops with Status::DomainExit
//   at_mesh(const MeshPoint&, const State&) called on reaching each mesh point
//
// A DomainError thrown by rhs also stops with Status::DomainExit. On return y
// holds the last accepted state and Outcome::t_stop its time.
template <std::size_t N, class Rhs, class Accept, class AtMesh>
Outcome integrate(Rhs&& rhs, std::array<double, N>& y, double t0, const std::vector<MeshPoint>& mesh,
                  const IntegratorConfig& cfg, Accept&& accept, AtMesh&& at_mesh) {
  cfg.validate();
  Outcome out;
  double t = t0;
  double h_adapt = std::min(cfg.dt, cfg.dt_max);
  try {
    for (const MeshPoint& mp : mesh) {
      const double a = t;
      const double b = mp.t;
      const double branch = 0.5 * (a + b);
      if (cfg.method == Method::RK4Fixed) {
        const double span = b - a;
        const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(span / cfg.dt * (1.0 - 1e-12))));
        const double h = span / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          const double ts = a + static_cast<double>(i) * h;
          rk4_step(rhs, ts, h, branch, y);
          t = (i + 1 == n) ? b : a + static_cast<double>(i + 1) * h;
          out.stats.record(h);
          if (!accept(t, std::as_const(y))) {
            out.status = Status::DomainExit;
            out.t_stop = t;
            out.message = "state left the admissible domain";
            return out;
          }
        }
      } else {
        std::array<double, N> y_new;
        while (t < b) {
          double h = std::min({h_adapt, cfg.dt_max, b - t});
          // Avoid leaving a sliver before the mesh point; never exceed dt_max.
          if (b - (t + h) < 1e-3 * h) h = (b - t <= cfg.dt_max) ? b - t : 0.5 * (b - t);
          const double err = rkf45_step(rhs, t, h, branch, y, y_new, cfg.abs_tol, cfg.rel_tol);
          const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
          if (err <= 1.0) {
            const bool lands = (h == b - t);
            y = y_new;
            t = lands ? b : t + h;
            out.stats.record(h);
            // A step truncated by the mesh says nothing about the natural step size.
            if (!lands || factor < 1.0) h_adapt = h * factor;
            if (!accept(t, std::as_const(y))) {
              out.status = Status::DomainExit;
              out.t_stop = t;
              out.message = "state left the admissible domain";
              return out;
            }
          } else {
            ++out.stats.rejected;
            h_adapt = h * factor;
            if (h_adapt < cfg.dt_min) {
              out.status = Status::StepUnderflow;
              out.t_stop = t;
              out.message = "adaptive step fell below dt_min";
              return out;
            }
          }
        }
      }
      at_mesh(mp, std::as_const(y));
    }
  } catch (const DomainError& e) {
    out.status = Status::DomainExit;
    out.t_stop = t;
    out.message = e.what();
    return out;
  }
  out.t_stop = t;
  return out;
}

}  // namespace estrack::ode
