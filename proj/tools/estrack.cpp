// estrack: run, sweep and verify extremum-seeking tracking experiments.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration rejected.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <thread>

#include "estrack/config.hpp"
#include "estrack/errors.hpp"
#include "estrack/experiment.hpp"
#include "estrack/verify.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeFailure = 1;
constexpr int kConfigRejected = 2;

// Structured error report on stderr.
void report_error(const char* kind, const std::exception& e) {
  std::cerr << "error:\n  kind: " << kind << "\n  message: \"" << e.what() << "\"\n";
  if (const auto* d = dynamic_cast<const estrack::DomainError*>(&e)) {
    std::cerr << "  state: [" << d->state()[0] << ", " << d->state()[1] << "]\n";
  } else if (const auto* s = dynamic_cast<const estrack::SolverError*>(&e)) {
    std::cerr << "  last_iterate: [" << s->last_iterate()[0] << ", " << s->last_iterate()[1] << "]\n"
              << "  residual: " << s->residual() << "\n";
  } else if (const auto* st = dynamic_cast<const estrack::StiffnessError*>(&e)) {
    std::cerr << "  t: " << st->time() << "\n";
  }
}

template <class F>
int guarded(F body) {
  try {
    return body();
  } catch (const estrack::ConfigError& e) {
    std::cerr << "config rejected: " << e.what() << "\n";
    return kConfigRejected;
  } catch (const estrack::DomainError& e) {
    report_error("domain", e);
  } catch (const estrack::SolverError& e) {
    report_error("solver", e);
  } catch (const estrack::StiffnessError& e) {
    report_error("stiffness", e);
  } catch (const estrack::ContractError& e) {
    report_error("contract", e);
  } catch (const std::exception& e) {
    report_error("runtime", e);
  }
  return kRuntimeFailure;
}

int cmd_run(const std::string& path) {
  const estrack::ExperimentConfig cfg = estrack::load_config(path);
  const auto resolved = estrack::resolve_experiment(cfg);
  const estrack::RunResult result = estrack::run_experiment(cfg, resolved);
  const auto dir = estrack::output_root() / cfg.output.directory;
  estrack::write_run_artifacts(dir, cfg, resolved, result);

  const estrack::Trajectory& tr = result.trajectory;
  std::cout << "wrote " << dir.string() << " (" << tr.samples.size() << " samples, " << tr.meta.stats.accepted
            << " steps, " << tr.meta.wall_seconds << " s)\n";
  if (result.report) {
    const auto& rep = *result.report;
    std::cout << "mean sqrt(y) per period:";
    for (double v : rep.mean_sqrt_cost_per_period) std::cout << ' ' << v;
    std::cout << "\nbound rho = " << rep.rho << ": " << (rep.bound_satisfied ? "satisfied" : "not satisfied");
    if (rep.t_f) std::cout << " (t_f = " << *rep.t_f << ", sup e = " << rep.sup_error_after_tf << ")";
    std::cout << '\n';
  } else {
    std::cout << "tracking report " << result.report_note << '\n';
  }
  if (!tr.completed()) {
    std::cerr << "domain exit at t = " << tr.termination->t << ": " << tr.termination->message << '\n';
    return kRuntimeFailure;
  }
  return kOk;
}

int cmd_sweep(const std::string& path, unsigned jobs) {
  const estrack::ExperimentConfig cfg = estrack::load_config(path);
  if (cfg.sweep.empty()) throw estrack::ConfigError("sweep requires a 'sweep' section with at least one axis");
  const auto resolved = estrack::resolve_experiment(cfg);
  const auto dir = estrack::output_root() / cfg.output.directory;
  const estrack::SweepOutcome out = estrack::run_sweep(cfg, resolved, dir, jobs);
  std::cout << "wrote " << (dir / "sweep.csv").string() << " (" << out.cells << " cells, " << out.failures.size()
            << " failed)\n";
  for (const auto& [index, message] : out.failures) std::cerr << "cell " << index << " failed: " << message << '\n';
  return out.failures.empty() ? kOk : kRuntimeFailure;
}

int cmd_verify(const std::string& suite) {
  const std::vector<std::string> suites =
      suite == "all" ? estrack::verify::suite_names() : std::vector<std::string>{suite};
  bool ok = true;
  for (const std::string& name : suites) {
    const estrack::verify::SuiteResult r = estrack::verify::run_suite(name);
    estrack::verify::print(std::cout, r);
    ok = ok && r.passed();
  }
  return ok ? kOk : kRuntimeFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extremum-seeking tracking experiments on a CSTR model"};
  app.require_subcommand(1);
  app.set_version_flag("--version", estrack::kToolVersion);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("config", config_path, "Experiment config (YAML)")->required();

  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  auto* sweep = app.add_subcommand("sweep", "Run the Cartesian product of the sweep axes");
  sweep->add_option("config", config_path, "Experiment config (YAML)")->required();
  sweep->add_option("--jobs,-j", jobs, "Worker threads (default: available processors)")
      ->check(CLI::PositiveNumber);

  std::string suite;
  auto* verify = app.add_subcommand("verify", "Run a self-check suite");
  std::vector<std::string> choices = estrack::verify::suite_names();
  choices.push_back("all");
  verify->add_option("suite", suite, "Suite name")->required()->check(CLI::IsMember(choices));

  app.add_subcommand("print-defaults", "Print a config template with every default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigRejected;
  }

  if (*run) return guarded([&] { return cmd_run(config_path); });
  if (*sweep) return guarded([&] { return cmd_sweep(config_path, jobs); });
  if (*verify) return guarded([&] { return cmd_verify(suite); });
  std::cout << estrack::default_config_text();
  return kOk;
}
