#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "estrack/config.hpp"
#include "estrack/experiment.hpp"

using namespace estrack;
namespace fs = std::filesystem;

namespace {

// Dither period 0.1 so runs take milliseconds.
const char* kQuickConfig = R"(name: quick
plant: paper-defaults
gains:
  gamma: 150
  epsilon: 0.001
  eta: 100
integrator:
  dt: 0.002
initial:
  delta_x: [0.05, 0.01]
  delta_u: [0.3, 0.02]
t_end: 2
output:
  directory: quick
  samples_per_period: 1000
analysis:
  rho: 0.5
  window: 0.5
)";

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("estrack_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

bool same(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

int config_error_line(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

int run_cli(const std::string& args, const fs::path& root) {
  const std::string cmd = "ESTRACK_OUTPUT_ROOT='" + root.string() + "' '" + ESTRACK_CLI_PATH + "' " + args +
                          " > '" + (root / "stdout.txt").string() + "' 2> '" + (root / "stderr.txt").string() + "'";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("minimal config takes every default") {
  const ExperimentConfig c = parse_config("plant: paper-defaults\n");
  CHECK(c.gains.gamma == 150.0);
  CHECK(c.gains.epsilon == 1e-3);
  CHECK(c.gains.eta == 1.0);
  CHECK(c.integrator.method == ode::Method::RK4Fixed);
  CHECK(c.integrator.dt == 2e-5);
  CHECK(c.reference.spec.waveform == Waveform::Trig);
  CHECK(c.reference.spec.period == 100.0);
  CHECK(c.reference.mode == EvaluationMode::CoIntegrate);
  CHECK(c.plant.variant == ModelVariant::Corrected);
  CHECK(c.t_end == 200.0);
  CHECK(c.controller == ControllerMode::ExtremumSeeking);
  CHECK_FALSE(c.clamp_inputs);
  CHECK(c.initial.delta_x.has_value());
  CHECK(c.initial.delta_u.has_value());
  CHECK(c.output.samples_per_period == 2000);
  CHECK(c.sweep.empty());
}

TEST_CASE("printed template is a valid config") {
  const ExperimentConfig c = parse_config(default_config_text());
  CHECK(c.name == "experiment");
  CHECK(c.analysis.rho == 0.5);
}

TEST_CASE("plant must be explicit") {
  CHECK_THROWS_AS(parse_config("name: x\n"), ConfigError);
  CHECK(config_error_line("name: x\nplant: defaults\n") == 2);
  CHECK(config_error_line("plant:\n  phi1: 1\n  phi2: 1\n") > 0);
  const ExperimentConfig c = parse_config("plant:\n  preset: paper-defaults\n  kappa: 18\n  variant: as-printed\n");
  CHECK(c.plant.kappa == 18.0);
  CHECK(c.plant.k1 == 5.819e7);
  CHECK(c.plant.variant == ModelVariant::AsPrinted);
}

TEST_CASE("unknown keys are rejected with their line") {
  CHECK(config_error_line("plant: paper-defaults\nname: a\nfrobnicate: 1\n") == 3);
  CHECK(config_error_line("plant: paper-defaults\ngains:\n  gamma: 150\n  gama: 2\n") == 4);
  CHECK(config_error_line("plant: paper-defaults\nreference:\n  waveform: trig\n  shape: sine\n") == 4);
}

TEST_CASE("invalid values are rejected") {
  CHECK(config_error_line("plant: paper-defaults\ngains:\n  epsilon: 0\n") == 3);
  CHECK(config_error_line("plant: paper-defaults\ngains:\n  epsilon: -1e-3\n") == 3);
  CHECK(config_error_line("plant: paper-defaults\ngains:\n  eta: 0\n") == 3);
  CHECK(config_error_line("plant: paper-defaults\nreference:\n  waveform: square\n") == 3);
  CHECK(config_error_line("plant: paper-defaults\nintegrator:\n  method: euler\n") == 3);
  CHECK(config_error_line("plant: paper-defaults\ngains:\n  gamma: fast\n") == 3);
  CHECK(config_error_line("plant: paper-defaults\nt_end: 0\n") == 2);
  CHECK_THROWS_AS(parse_config("plant: paper-defaults\ninitial:\n  x0: [0, 0]\n  delta_x: [0, 0]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("plant: paper-defaults\ninitial:\n  x0: [-1.5, 0]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("plant: paper-defaults\nreference:\n  amplitude: [-3, 0]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("plant: [1, 2\n"), ConfigError);
}

TEST_CASE("fixed step above the dither ceiling is rejected") {
  CHECK(config_error_line("plant: paper-defaults\nintegrator:\n  dt: 1e-4\n") > 0);
  CHECK_NOTHROW(parse_config("plant: paper-defaults\nintegrator:\n  dt: 2e-5\n"));
  CHECK_NOTHROW(parse_config("plant: paper-defaults\nintegrator:\n  dt: 1e-4\ngains:\n  eta: 5\n"));
}

TEST_CASE("emitted manifest parses back to the same experiment") {
  const ExperimentConfig c = parse_config(kQuickConfig);
  const std::string text = emit_config(c, {0.01, -0.02}, {0.3, 0.04}, kToolVersion);
  const ExperimentConfig d = parse_config(text);
  CHECK(d.name == c.name);
  CHECK(d.gains.eta == c.gains.eta);
  CHECK(d.integrator.dt == c.integrator.dt);
  CHECK(d.plant.k2 == c.plant.k2);
  CHECK(d.t_end == c.t_end);
  REQUIRE(d.initial.x0.has_value());
  CHECK(*d.initial.x0 == StateVec{0.01, -0.02});
  REQUIRE(d.initial.u0.has_value());
  CHECK(*d.initial.u0 == InputVec{0.3, 0.04});
  CHECK(text.find(kToolVersion) != std::string::npos);
}

TEST_CASE("run artifacts and manifest round trip") {
  const fs::path root = scratch("roundtrip");
  const ExperimentConfig c = parse_config(kQuickConfig);
  const ResolvedExperiment r = resolve_experiment(c);
  CHECK(norm(r.x0 - (r.reference.x_star_0() + StateVec{0.05, 0.01})) == 0.0);
  const RunResult res = run_experiment(c, r);
  REQUIRE(res.trajectory.completed());
  REQUIRE(res.report.has_value());
  write_run_artifacts(root / "a", c, r, res);
  for (const char* f : {"trajectory.csv", "trajectory.meta.yaml", "errors.csv", "report.yaml", "manifest.yaml"}) {
    CHECK(fs::exists(root / "a" / f));
  }
  CHECK(slurp(root / "a" / "trajectory.csv").rfind("t,x1,x2,u1,u2,xs1,xs2,y\n", 0) == 0);

  const ExperimentConfig m = load_config(root / "a" / "manifest.yaml");
  const ResolvedExperiment rm = resolve_experiment(m);
  write_run_artifacts(root / "b", m, rm, run_experiment(m, rm));
  CHECK(slurp(root / "a" / "trajectory.csv") == slurp(root / "b" / "trajectory.csv"));
  CHECK(slurp(root / "a" / "errors.csv") == slurp(root / "b" / "errors.csv"));
}

TEST_CASE("sweep") {
  const fs::path root = scratch("sweep");
  SUBCASE("3 x 2 grid") {
    ExperimentConfig c = parse_config(std::string(kQuickConfig) + "sweep:\n  epsilon: [1e-3, 1.5e-3, 2e-3]\n  eta: [100, 200]\n");
    CHECK(sweep_cells(c).size() == 6);
    const SweepOutcome out = run_sweep(c, resolve_experiment(c), root / "grid", 2);
    CHECK(out.cells == 6);
    CHECK(out.failures.empty());
    CHECK(out.rows.size() == 6);
    std::istringstream in(slurp(root / "grid" / "sweep.csv"));
    std::string line;
    std::getline(in, line);
    CHECK(line == "cell,gamma,epsilon,eta,dt,status,bound_satisfied,final_period_cost,sup_error_after_tf,small_epsilon_degraded");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 6);
    CHECK(fs::exists(root / "grid" / "cell_000" / "trajectory.csv"));
    CHECK(fs::exists(root / "grid" / "cell_005" / "report.yaml"));
    CHECK(fs::exists(root / "grid" / "manifest.yaml"));
  }
  SUBCASE("repeated cell gives identical rows") {
    ExperimentConfig c = parse_config(std::string(kQuickConfig) + "sweep:\n  eta: [100, 100]\n");
    const SweepOutcome out = run_sweep(c, resolve_experiment(c), root / "dup", 2);
    REQUIRE(out.rows.size() == 2);
    CHECK(same(out.rows[0].final_period_cost, out.rows[1].final_period_cost));
    CHECK(same(out.rows[0].sup_error_after_tf, out.rows[1].sup_error_after_tf));
    CHECK(out.rows[0].bound_satisfied == out.rows[1].bound_satisfied);
    std::istringstream in(slurp(root / "dup" / "sweep.csv"));
    std::string header, r0, r1;
    std::getline(in, header);
    std::getline(in, r0);
    std::getline(in, r1);
    CHECK(r0.substr(r0.find(',')) == r1.substr(r1.find(',')));
    CHECK(slurp(root / "dup" / "cell_000" / "trajectory.csv") == slurp(root / "dup" / "cell_001" / "trajectory.csv"));
  }
  SUBCASE("single cell matches a plain run") {
    ExperimentConfig c = parse_config(std::string(kQuickConfig) + "sweep:\n  eta: [100]\n");
    const ResolvedExperiment r = resolve_experiment(c);
    run_sweep(c, r, root / "one", 1);
    ExperimentConfig plain = parse_config(kQuickConfig);
    write_run_artifacts(root / "plain", plain, r, run_experiment(plain, r));
    CHECK(slurp(root / "one" / "cell_000" / "trajectory.csv") == slurp(root / "plain" / "trajectory.csv"));
  }
  SUBCASE("a failing cell is recorded and the rest still run") {
    // A long dither period throws the plant out of D.
    ExperimentConfig c = parse_config(std::string(kQuickConfig) + "sweep:\n  epsilon: [1e-3, 4e-3]\n");
    const SweepOutcome out = run_sweep(c, resolve_experiment(c), root / "fail", 2);
    CHECK(out.cells == 2);
    REQUIRE(out.failures.size() == 1);
    CHECK(out.failures[0].first == 1);
    CHECK(out.rows.size() == 1);
    const std::string table = slurp(root / "fail" / "sweep.csv");
    CHECK(table.find("cell_001,150,") != std::string::npos);
    CHECK(table.find("failed") != std::string::npos);
  }
  SUBCASE("fine step is derived per cell") {
    ExperimentConfig c = parse_config(std::string(kQuickConfig) + "sweep:\n  eta: [1, 100]\n");
    const auto cells = sweep_cells(c);
    REQUIRE(cells.size() == 2);
    CHECK(cells[0].integrator.dt <= dither_period(cells[0].gains) / 50.0);
    CHECK(cells[1].integrator.dt == 0.002);
  }
}

TEST_CASE("command-line exit codes") {
  const fs::path root = scratch("cli");
  spit(root / "quick.yaml", kQuickConfig);
  spit(root / "bad_eps.yaml", "plant: paper-defaults\ngains:\n  epsilon: 0\n");
  spit(root / "unknown.yaml", "plant: paper-defaults\ncolour: blue\n");
  spit(root / "escape.yaml",
       "plant: paper-defaults\ngains:\n  gamma: 1e-6\ninitial:\n  u0: [-50, 0]\nt_end: 1\noutput:\n  directory: escape\n");
  spit(root / "nosweep.yaml", kQuickConfig);

  CHECK(run_cli("run '" + (root / "quick.yaml").string() + "'", root) == 0);
  CHECK(fs::exists(root / "quick" / "trajectory.csv"));
  CHECK(fs::exists(root / "quick" / "manifest.yaml"));

  CHECK(run_cli("run '" + (root / "bad_eps.yaml").string() + "'", root) == 2);
  CHECK(slurp(root / "stderr.txt").find("line 3") != std::string::npos);
  CHECK(run_cli("run '" + (root / "unknown.yaml").string() + "'", root) == 2);
  CHECK(slurp(root / "stderr.txt").find("line 2") != std::string::npos);
  CHECK(run_cli("run '" + (root / "missing.yaml").string() + "'", root) == 2);
  CHECK(run_cli("sweep '" + (root / "nosweep.yaml").string() + "'", root) == 2);
  CHECK(run_cli("verify nonsense", root) == 2);
  CHECK(run_cli("", root) == 2);

  CHECK(run_cli("run '" + (root / "escape.yaml").string() + "'", root) == 1);
  CHECK(fs::exists(root / "escape" / "trajectory.csv"));

  CHECK(run_cli("verify controller", root) == 0);
  CHECK(slurp(root / "stdout.txt").find("[PASS]") != std::string::npos);
  CHECK(run_cli("print-defaults", root) == 0);
  CHECK(parse_config(slurp(root / "stdout.txt")).name == "experiment");

  // Manifest from the CLI run reproduces the trajectory byte for byte.
  const std::string first = slurp(root / "quick" / "trajectory.csv");
  fs::copy_file(root / "quick" / "manifest.yaml", root / "manifest_copy.yaml");
  CHECK(run_cli("run '" + (root / "manifest_copy.yaml").string() + "'", root) == 0);
  CHECK(slurp(root / "quick" / "trajectory.csv") == first);
}
