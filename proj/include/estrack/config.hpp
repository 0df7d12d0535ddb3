#pragma once

// Experiment configuration: YAML in, validated ExperimentConfig out.
//
// Every field has a documented default (see default_config_text()) except the
// plant, which must be listed explicitly or set to `paper-defaults`. Unknown
// keys are rejected. Errors carry the 1-based line of the offending node.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "estrack/closed_loop.hpp"
#include "estrack/controller.hpp"
#include "estrack/ode.hpp"
#include "estrack/plant.hpp"
#include "estrack/reference.hpp"

namespace estrack {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line = 0) : std::runtime_error(format(what, line)), line_(line) {}
  int line() const { return line_; }  // 0 when no position is known

 private:
  static std::string format(const std::string& what, int line) {
    return line > 0 ? "line " + std::to_string(line) + ": " + what : what;
  }
  int line_;
};

struct ReferenceConfig {
  ReferenceSpec spec;
  EvaluationMode mode = EvaluationMode::CoIntegrate;
  double grid_step = 0.01;
  StateVec x_star_guess{-0.065, 0.008};
  double orbit_tol = 1e-10;
};

// Exactly one of x0 / delta_x and one of u0 / delta_u is set after parsing.
// Offsets are taken from x*(0) and u*(0).
struct InitialCondition {
  std::optional<StateVec> x0;
  std::optional<StateVec> delta_x;
  std::optional<InputVec> u0;
  std::optional<InputVec> delta_u;
};

struct OutputConfig {
  std::string directory = "run";
  int samples_per_period = 2000;
};

struct AnalysisConfig {
  double rho = 0.5;
  double window = 0.0;  // 0 selects one reference period
};

struct SweepAxes {
  std::vector<double> gamma;
  std::vector<double> epsilon;
  std::vector<double> eta;

  bool empty() const { return gamma.empty() && epsilon.empty() && eta.empty(); }
};

struct ExperimentConfig {
  std::string name = "experiment";
  CstrParams plant;
  ReferenceConfig reference;
  ESGains gains;
  ode::IntegratorConfig integrator;
  InitialCondition initial;
  double t_end = 200.0;
  ControllerMode controller = ControllerMode::ExtremumSeeking;
  bool clamp_inputs = false;
  OutputConfig output;
  AnalysisConfig analysis;
  SweepAxes sweep;
};

// Throws ConfigError on malformed YAML, unknown keys, type errors, or values
// violating a type invariant.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Resolved config with explicit plant parameters and absolute x0, u0, ready
// to be parsed back. `x0`, `u0` replace the initial section.
std::string emit_config(const ExperimentConfig& cfg, const StateVec& x0, const InputVec& u0,
                        const std::string& tool_version);

// Commented template listing every key with its default.
std::string default_config_text();

std::string to_string(Waveform w);
std::string to_string(EvaluationMode m);
std::string to_string(ode::Method m);
std::string to_string(ControllerMode m);
std::string to_string(ModelVariant v);

}  // namespace estrack
