#pragma once

// Single runs and gain sweeps driven by an ExperimentConfig, with artifact
// writing. Layout under <root>/<output.directory>/:
//
//   run:   trajectory.csv, trajectory.meta.yaml, errors.csv, report.yaml, manifest.yaml
//   sweep: sweep.csv, manifest.yaml, cell_NNN/{trajectory.csv, report.yaml}

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "estrack/analysis.hpp"
#include "estrack/closed_loop.hpp"
#include "estrack/config.hpp"
#include "estrack/reference.hpp"

namespace estrack {

inline constexpr const char* kToolVersion = "0.1.0";

// Output root: $ESTRACK_OUTPUT_ROOT if set and non-empty, else the working directory.
std::filesystem::path output_root();

struct ResolvedExperiment {
  ReferenceTrajectory reference;
  StateVec x0;
  InputVec u0;
};

// Solves the periodic orbit and turns offsets into absolute initial conditions.
ResolvedExperiment resolve_experiment(const ExperimentConfig& cfg);

struct RunResult {
  Trajectory trajectory;
  std::optional<TrackingReport> report;  // absent when the run is shorter than two windows
  std::string report_note;
};

RunResult run_experiment(const ExperimentConfig& cfg, const ResolvedExperiment& resolved);

// Writes the run artifacts into `dir` (created if needed).
void write_run_artifacts(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                         const ResolvedExperiment& resolved, const RunResult& result);

struct SweepCell {
  std::size_t index = 0;
  ESGains gains;
  ode::IntegratorConfig integrator;
};

// Cartesian product of the sweep axes (a missing axis uses the base gain).
// A fixed step is lowered to eta*epsilon/50 per cell when needed.
std::vector<SweepCell> sweep_cells(const ExperimentConfig& cfg);

struct SweepOutcome {
  std::vector<SweepRow> rows;  // successful cells, in cell order
  std::vector<std::pair<std::size_t, std::string>> failures;  // cell index, message
  std::size_t cells = 0;
};

// Runs every cell on up to `jobs` worker threads; one collector writes all
// files. A failing cell is recorded and the sweep continues.
SweepOutcome run_sweep(const ExperimentConfig& cfg, const ResolvedExperiment& resolved,
                       const std::filesystem::path& dir, unsigned jobs);

}  // namespace estrack
