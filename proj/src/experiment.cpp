#include "estrack/experiment.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "estrack/csv.hpp"
#include "estrack/errors.hpp"

namespace estrack {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string num(double v) { return std::isfinite(v) ? format_double(v) : (std::isnan(v) ? "nan" : "inf"); }

void emit_vec(YAML::Emitter& out, const char* key, const Vec2& v) {
  out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq << num(v[0]) << num(v[1]) << YAML::EndSeq;
}

void emit_report(YAML::Emitter& out, const TrackingReport& rep) {
  out << YAML::Key << "tracking" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "rho" << YAML::Value << num(rep.rho);
  out << YAML::Key << "window" << YAML::Value << num(rep.window);
  out << YAML::Key << "t_f" << YAML::Value;
  if (rep.t_f) {
    out << num(*rep.t_f);
  } else {
    out << YAML::Null;
  }
  out << YAML::Key << "bound_satisfied" << YAML::Value << rep.bound_satisfied;
  out << YAML::Key << "sup_error_after_tf" << YAML::Value << num(rep.sup_error_after_tf);
  out << YAML::Key << "sup_sqrt_cost_after_tf" << YAML::Value << num(rep.sup_sqrt_cost_after_tf);
  out << YAML::Key << "mean_sqrt_cost_per_period" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (double v : rep.mean_sqrt_cost_per_period) out << num(v);
  out << YAML::EndSeq;
  out << YAML::Key << "error_signal" << YAML::Value
      << "e = |x - l(u*(t))| + |u - u*(t)| (steady-state curve); sqrt(y) = |x - x*(t)| (reference orbit)";
  out << YAML::EndMap;
}

std::string report_text(const ExperimentConfig& cfg, const ResolvedExperiment& resolved, const RunResult& result) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << cfg.name;
  emit_vec(out, "x_star_0", resolved.reference.x_star_0());
  out << YAML::Key << "periodicity_defect" << YAML::Value << num(resolved.reference.periodicity_defect());
  const Trajectory& tr = result.trajectory;
  out << YAML::Key << "completed" << YAML::Value << tr.completed();
  if (tr.termination) {
    out << YAML::Key << "termination" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "reason" << YAML::Value << "domain-exit";
    out << YAML::Key << "t" << YAML::Value << num(tr.termination->t);
    out << YAML::Key << "message" << YAML::Value << tr.termination->message;
    emit_vec(out, "x", tr.final_state().x);
    out << YAML::EndMap;
  }
  if (result.report) {
    emit_report(out, *result.report);
  } else {
    out << YAML::Key << "tracking" << YAML::Value << result.report_note;
  }
  const ClosedLoopState& last = tr.final_state();
  out << YAML::Key << "final" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "t" << YAML::Value << num(last.t);
  emit_vec(out, "x", last.x);
  emit_vec(out, "u", last.u);
  emit_vec(out, "x_star", last.x_star);
  out << YAML::Key << "y" << YAML::Value << num(last.y());
  out << YAML::Key << "u_in_box" << YAML::Value << cfg.plant.in_input_box(last.u);
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string metadata_text(const Trajectory& tr) {
  const RunMetadata& m = tr.meta;
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "columns" << YAML::Value << "t,x1,x2,u1,u2,xs1,xs2,y";
  out << YAML::Key << "samples" << YAML::Value << tr.samples.size();
  out << YAML::Key << "t_end" << YAML::Value << num(m.t_end);
  out << YAML::Key << "plant_variant" << YAML::Value << to_string(m.params.variant);
  out << YAML::Key << "reference" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "waveform" << YAML::Value << to_string(m.reference.waveform);
  out << YAML::Key << "period" << YAML::Value << num(m.reference.period);
  emit_vec(out, "amplitude", m.reference.amplitude);
  emit_vec(out, "x_star_0", m.x_star_0);
  out << YAML::EndMap;
  out << YAML::Key << "gains" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "gamma" << YAML::Value << num(m.gains.gamma);
  out << YAML::Key << "epsilon" << YAML::Value << num(m.gains.epsilon);
  out << YAML::Key << "eta" << YAML::Value << num(m.gains.eta);
  out << YAML::EndMap;
  out << YAML::Key << "controller" << YAML::Value << to_string(m.options.controller);
  out << YAML::Key << "clamp_inputs" << YAML::Value << m.options.clamp_inputs;
  out << YAML::Key << "integrator" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "method" << YAML::Value << to_string(m.integrator.method);
  out << YAML::Key << "dt" << YAML::Value << num(m.integrator.dt);
  if (m.integrator.method == ode::Method::RKF45Adaptive) {
    out << YAML::Key << "abs_tol" << YAML::Value << num(m.integrator.abs_tol);
    out << YAML::Key << "rel_tol" << YAML::Value << num(m.integrator.rel_tol);
    out << YAML::Key << "dt_max" << YAML::Value << num(m.integrator.dt_max);
  }
  out << YAML::EndMap;
  out << YAML::Key << "steps" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "accepted" << YAML::Value << m.stats.accepted;
  out << YAML::Key << "rejected" << YAML::Value << m.stats.rejected;
  out << YAML::Key << "h_min" << YAML::Value << num(m.stats.h_min);
  out << YAML::Key << "h_max" << YAML::Value << num(m.stats.h_max);
  out << YAML::EndMap;
  out << YAML::Key << "wall_seconds" << YAML::Value << num(m.wall_seconds);
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string trajectory_csv(const Trajectory& tr) {
  std::ostringstream os;
  write_trajectory_csv(os, tr);
  return os.str();
}

RunResult run_with(const ExperimentConfig& cfg, const ResolvedExperiment& resolved, const ESGains& gains,
                   const ode::IntegratorConfig& icfg) {
  ClosedLoopOptions opts;
  opts.samples_per_period = cfg.output.samples_per_period;
  opts.controller = cfg.controller;
  opts.clamp_inputs = cfg.clamp_inputs;
  RunResult res{integrate_closed_loop(resolved.x0, resolved.u0, resolved.reference, gains, cfg.plant, icfg,
                                      cfg.t_end, opts),
                std::nullopt, ""};
  const double window = cfg.analysis.window > 0.0 ? cfg.analysis.window : resolved.reference.period();
  if (res.trajectory.final_state().t >= 2.0 * window * (1.0 - 1e-12)) {
    res.report = tracking_report(res.trajectory, resolved.reference, gains, cfg.analysis.rho, window);
  } else {
    res.report_note = "skipped: the run covers fewer than two analysis windows";
  }
  return res;
}

}  // namespace

fs::path output_root() {
  const char* env = std::getenv("ESTRACK_OUTPUT_ROOT");
  if (env && *env) return fs::path(env);
  return fs::current_path();
}

ResolvedExperiment resolve_experiment(const ExperimentConfig& cfg) {
  const ReferenceConfig& rc = cfg.reference;
  ReferenceTrajectory ref =
      ReferenceTrajectory::solve(rc.spec, cfg.plant, rc.x_star_guess, rc.orbit_tol, rc.mode, rc.grid_step);
  const InitialCondition& ic = cfg.initial;
  const StateVec x0 = ic.x0 ? *ic.x0 : ref.x_star_0() + ic.delta_x.value_or(StateVec{0.0, 0.0});
  const InputVec u0 = ic.u0 ? *ic.u0 : ref.input(0.0) + ic.delta_u.value_or(InputVec{0.0, 0.0});
  if (!in_domain(x0)) throw DomainError("initial state outside D", x0);
  return ResolvedExperiment{std::move(ref), x0, u0};
}

RunResult run_experiment(const ExperimentConfig& cfg, const ResolvedExperiment& resolved) {
  return run_with(cfg, resolved, cfg.gains, cfg.integrator);
}

void write_run_artifacts(const fs::path& dir, const ExperimentConfig& cfg, const ResolvedExperiment& resolved,
                         const RunResult& result) {
  fs::create_directories(dir);
  write_file(dir / "trajectory.csv", trajectory_csv(result.trajectory));
  write_file(dir / "trajectory.meta.yaml", metadata_text(result.trajectory));
  write_file(dir / "report.yaml", report_text(cfg, resolved, result));
  if (result.report) {
    std::ostringstream os;
    os << "t,e_theorem,sqrt_y\n";
    const TrackingReport& r = *result.report;
    for (std::size_t i = 0; i < r.t.size(); ++i) {
      os << format_double(r.t[i]) << ',' << format_double(r.e_theorem[i]) << ',' << format_double(r.e_reference[i])
         << '\n';
    }
    write_file(dir / "errors.csv", os.str());
  }
  write_file(dir / "manifest.yaml", emit_config(cfg, resolved.x0, resolved.u0, kToolVersion));
}

std::vector<SweepCell> sweep_cells(const ExperimentConfig& cfg) {
  const auto axis = [](const std::vector<double>& v, double base) {
    return v.empty() ? std::vector<double>{base} : v;
  };
  std::vector<SweepCell> cells;
  for (double gamma : axis(cfg.sweep.gamma, cfg.gains.gamma)) {
    for (double eps : axis(cfg.sweep.epsilon, cfg.gains.epsilon)) {
      for (double eta : axis(cfg.sweep.eta, cfg.gains.eta)) {
        SweepCell c;
        c.index = cells.size();
        c.gains = cfg.gains;
        c.gains.gamma = gamma;
        c.gains.epsilon = eps;
        c.gains.eta = eta;
        c.integrator = cfg.integrator;
        if (c.integrator.method == ode::Method::RK4Fixed) {
          c.integrator.dt = std::min(c.integrator.dt, dither_period(c.gains) / 50.0);
        }
        cells.push_back(c);
      }
    }
  }
  return cells;
}

SweepOutcome run_sweep(const ExperimentConfig& cfg, const ResolvedExperiment& resolved, const fs::path& dir,
                       unsigned jobs) {
  const std::vector<SweepCell> cells = sweep_cells(cfg);
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(cells.size())));

  struct Message {
    std::size_t index;
    std::optional<RunResult> result;
    std::string error;
  };
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Message> inbox;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      Message msg{i, std::nullopt, ""};
      try {
        msg.result = run_with(cfg, resolved, cells[i].gains, cells[i].integrator);
        if (!msg.result->trajectory.completed()) msg.error = msg.result->trajectory.termination->message;
      } catch (const std::exception& e) {
        msg.error = e.what();
      }
      {
        std::lock_guard<std::mutex> lock(mu);
        inbox.push_back(std::move(msg));
      }
      cv.notify_one();
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (unsigned k = 0; k < jobs; ++k) pool.emplace_back(worker);

  // Collector: the only writer.
  fs::create_directories(dir);
  std::vector<std::optional<SweepResult>> results(cells.size());
  std::vector<std::string> errors(cells.size());
  for (std::size_t received = 0; received < cells.size(); ++received) {
    Message msg;
    {
      std::unique_lock<std::mutex> lock(mu);
      cv.wait(lock, [&] { return !inbox.empty(); });
      msg = std::move(inbox.front());
      inbox.pop_front();
    }
    char label[32];
    std::snprintf(label, sizeof(label), "cell_%03zu", msg.index);
    errors[msg.index] = msg.error;
    if (msg.result) {
      const fs::path cell_dir = dir / label;
      fs::create_directories(cell_dir);
      write_file(cell_dir / "trajectory.csv", trajectory_csv(msg.result->trajectory));
      write_file(cell_dir / "report.yaml", report_text(cfg, resolved, *msg.result));
      if (msg.result->report && msg.error.empty()) {
        results[msg.index] = SweepResult{cells[msg.index].gains, *msg.result->report, label};
      } else if (msg.error.empty()) {
        errors[msg.index] = msg.result->report_note;
      }
    }
  }
  for (std::thread& t : pool) t.join();

  SweepOutcome outcome;
  outcome.cells = cells.size();
  std::vector<SweepResult> ok;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (results[i]) {
      ok.push_back(*results[i]);
    } else {
      outcome.failures.emplace_back(i, errors[i]);
    }
  }
  outcome.rows = sweep_summary(ok);

  std::ostringstream csv;
  csv << "cell,gamma,epsilon,eta,dt,status,bound_satisfied,final_period_cost,sup_error_after_tf,"
         "small_epsilon_degraded\n";
  std::size_t row = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    char label[32];
    std::snprintf(label, sizeof(label), "cell_%03zu", i);
    const SweepCell& c = cells[i];
    csv << label << ',' << format_double(c.gains.gamma) << ',' << format_double(c.gains.epsilon) << ','
        << format_double(c.gains.eta) << ',' << format_double(c.integrator.dt) << ',';
    if (results[i]) {
      const SweepRow& r = outcome.rows[row++];
      csv << "ok," << (r.bound_satisfied ? "true" : "false") << ',' << num(r.final_period_cost) << ','
          << num(r.sup_error_after_tf) << ',' << (r.small_epsilon_degraded ? "true" : "false") << '\n';
    } else {
      std::string err = errors[i];
      std::replace(err.begin(), err.end(), ',', ';');
      std::replace(err.begin(), err.end(), '\n', ' ');
      csv << "failed: " << err << ",,,,\n";
    }
  }
  write_file(dir / "sweep.csv", csv.str());
  write_file(dir / "manifest.yaml", emit_config(cfg, resolved.x0, resolved.u0, kToolVersion));
  return outcome;
}

}  // namespace estrack
