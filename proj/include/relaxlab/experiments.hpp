#pragma once

// Configuration-driven runs: parse a JSON run description, relax along the
// eps schedule, compute the limit harmonic map and every diagnostic, and
// write checkpoints, CSV tables and a JSON summary with acceptance results.

#include "relaxlab/diagnostics.hpp"
#include "relaxlab/solver.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace relaxlab {

struct PotentialConfig {
  std::string name = "ginzburg_landau";
  int k = 3;
  double a = -0.5, b2 = 1.0, c2 = 1.0;
};

struct DomainConfig {
  std::string kind = "ball";  ///< ball | box | mask
  int dimension = 3;
  Point center = Point::Zero(3);
  double radius = 1.0;
  Point lo, hi;
  double h = 1.0 / 24.0;
  std::vector<double> signed_distance;  ///< mask only, one value per grid node
};

struct BoundaryConfig {
  std::string name = "hedgehog";  ///< hedgehog | equator-constant | table
  Vec value;
  std::vector<Point> points;
  std::vector<Vec> values;
};

struct DiagnosticsConfig {
  std::optional<std::vector<Point>> centers;  ///< nullopt: default ball centers
  double rho_max = 0.5;
  KGrid k_grid;
  double tolerance = 1e-3;
  double compact_inner = 0.3;
  double compact_outer = 0.95;
  double singular_theta = 4.0;
  double singular_scale = 0.25;
  std::optional<double> bochner_delta;  ///< nullopt: tubular radius of N
  double lemma_alpha = 0.5;
  double witness_radius = 0.5;
  double witness_spacing = 0.25;
  double witness_percentile = 0.1;
  bool refinement = true;
  std::vector<double> stress_sweep{1.0, 0.1, 0.01};
  int restart_probes = 3;
  bool replay_check = true;
  int gradient_samples = 50;
  int hypothesis_samples = 1000;
};

struct RunConfig {
  PotentialConfig potential;
  DomainConfig domain;
  BoundaryConfig boundary;
  EpsSchedule schedule;
  SolverConfig solver;
  SolverConfig limit;  ///< harmonic-map solve
  DiagnosticsConfig diagnostics;
  double fast_h = 1.0 / 12.0;
  double time_budget = 600.0;
  double fast_time_budget = 60.0;
  std::string output_dir = "runs/out";
  std::uint64_t seed = 0;
};

/// Validates against the schema; unknown keys and bad values raise
/// ConfigError naming the field.
RunConfig parse_config(const nlohmann::json& j);
/// Reads and parses a file; JSON syntax errors report line and column.
RunConfig load_config(const std::filesystem::path& path);

/// Default ball centers, or those listed in the config.
std::vector<Point> diagnostic_centers(const RunConfig& cfg, const DomainSpec& dom);

std::shared_ptr<const Potential> build_potential(const PotentialConfig& cfg);
std::shared_ptr<const DomainSpec> build_domain(const DomainConfig& cfg, double h);
BoundaryData build_boundary(const BoundaryConfig& cfg, const Potential& p, const DomainConfig& dom);

struct RunOptions {
  bool fast = false;
  std::optional<std::filesystem::path> out;
  bool quiet = false;
};

struct Acceptance {
  int id = 0;
  std::string name;
  std::string status;  ///< PASS | FAIL | SKIP
  std::string detail;
  std::string timing;  ///< wall-clock part of the detail, ignored by compare
  std::string line() const { return timing.empty() ? detail : detail + "; " + timing; }
};

struct RunOutcome {
  std::filesystem::path dir;
  nlohmann::json summary;
  std::vector<Acceptance> acceptance;
  double seconds = 0.0;
};

/// Full experiment. Throws ConfigError, SolverError or DiagnosticsError.
RunOutcome run(const RunConfig& cfg, const RunOptions& opts);

/// Exit status of `relaxlab run`: 0 ok, 1 io, 2 schema, 3 solver, 4 diagnostics.
int run_command(const std::filesystem::path& config, const RunOptions& opts);

struct DiffRow {
  std::string key;
  std::string a;
  std::string b;
};

/// Leaves of the two summaries that differ (timings excluded).
std::vector<DiffRow> compare(const std::filesystem::path& a, const std::filesystem::path& b);

struct PlotOutput {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> warnings;
};

/// .dat files and SVG line charts from the CSV tables in dir.
PlotOutput emit_plot_data(const std::filesystem::path& dir);

/// Shortest round-trip decimal form.
std::string format_number(double v);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
};

/// Minimal deterministic SVG line chart.
std::string render_svg(const ChartSpec& spec, const std::vector<Series>& series);

}  // namespace relaxlab
