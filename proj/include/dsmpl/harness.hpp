#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dsmpl/metrics.hpp"
#include "dsmpl/optimizer.hpp"

#include "json.hpp"

namespace dsmpl {

/// Resolved experiment description: problem + graph + algorithm parameters +
/// seeds + output knobs. Serializes losslessly to JSON so a manifest can be
/// re-run bit-identically.
struct ExperimentConfig {
  std::string preset = "custom";
  std::string problem = "quartic";  // quartic | trajectory
  Variant variant = Variant::SCAMPL;

  int n = 10;
  double target_lambda = 0.4;
  double lambda_tol = 0.02;
  std::uint64_t graph_seed = 1234;
  std::uint64_t problem_seed = 2024;

  // explicit algorithm parameters; auto_schedule derives eta/alpha, beta, b0
  double gamma = 2000.0;
  double mu = 5000.0;
  double alpha = 0.05;
  double beta = 3.5e-6;
  double eta = 1e-4;
  int b0 = 1;
  int T = 5000;
  bool auto_schedule = false;

  double noise_std = 1.0;  // quartic oracle noise std
  double x0 = 0.0;         // quartic start (agents identical)

  std::vector<std::uint64_t> seeds = {1};
  int pi_every = 1;       // KKT-residual cadence; 0 = never
  int metrics_every = 1;  // phi/upsilon/F_bar cadence
  int n_threads = 1;
  std::string out_dir = "out";

  // sweep axis values (cmd_sweep)
  std::vector<double> sweep_values;
  std::vector<double> epsilon_list = {1e-1, 3e-2, 1e-2, 3e-3, 1e-3};

  bool trajectory_paper_scale = false;
  /// Key-value overrides of the trajectory setup: N, T_wp, T_f, v_max,
  /// sigma, jitter, vortices [[qx, qy, omega, delta], ...], starts, goals,
  /// formation (rows over the stacked 2N positions of one time index).
  nlohmann::json trajectory = nlohmann::json::object();
};

ExperimentConfig preset_config(const std::string& name);
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// "key=value" override applied to the JSON form; dotted keys descend.
void apply_override(nlohmann::json& j, const std::string& kv);

/// The paper-scale or desk-scale trajectory setup selected by the config.
TrajectoryParams trajectory_params_for(const ExperimentConfig& cfg);

/// Everything produced by one seeded run.
struct RunResult {
  std::uint64_t seed = 0;
  MetricsTrace trace;
  RunStatus status;
  Schedule schedule;
  bool schedule_was_auto = false;
  double lambda = 0.0, nu = 1.0, L_used = 0.0, sigma_bar_sq = 0.0;
  std::uint64_t graph_hash_v = 0;
  Eigen::VectorXd final_mean_iterate;
  double final_F = 0.0;
  double final_violation = 0.0;
  int best_pi_t = 0;
  double best_pi = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_pi_mean_iterate;
  int random_time_t = 0;
  Eigen::VectorXd random_time_mean_iterate;
  TheoryDiagnostics diagnostics;
  int mean_grad_budget = 0;
  int mean_objective_budget = 0;
};

/// Build problem + graph from the config and execute one seed.
RunResult execute_run(const ExperimentConfig& cfg, std::uint64_t seed);

void write_trace_csv(const std::filesystem::path& path, const MetricsTrace& trace);
MetricsTrace read_trace_csv(const std::filesystem::path& path);

struct ExperimentOutput {
  std::filesystem::path manifest_path;
  std::vector<std::filesystem::path> trace_paths;
  std::vector<RunResult> results;
};

/// One run per seed; writes manifest.json and trace_<seed>.csv.
ExperimentOutput cmd_run(const ExperimentConfig& cfg);

enum class SweepAxis { Gamma, N, Lambda, Epsilon };
SweepAxis sweep_axis_from_string(const std::string& s);

struct SweepOutput {
  std::filesystem::path summary_path;
  std::filesystem::path manifest_path;
  int failed_cells = 0;
};

/// Cross product of axis values and seeds; failed cells are recorded and the
/// sweep continues. gamma/lambda axes emit mean-Pi trajectories, n/epsilon
/// axes emit T_epsilon tables.
SweepOutput cmd_sweep(const ExperimentConfig& cfg, SweepAxis axis);

/// Graph calibration to a JSON document.
std::filesystem::path cmd_calibrate_graph(int n, double target_lambda, double tol,
                                          std::uint64_t seed,
                                          const std::filesystem::path& out_dir);

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct CheckReport {
  std::vector<CheckResult> checks;
  bool all_passed() const;
};

/// Invariant suite: tracker/momentum average identity, realized consensus
/// bound, noiseless single-agent descent, noiseless momentum exactness,
/// mixing-matrix stochasticity, final-iterate feasibility.
CheckReport cmd_check(const ExperimentConfig& cfg);

/// Mixing-matrix stochasticity check used by cmd_check, exposed for direct
/// probing with corrupted inputs.
CheckResult check_mixing_matrix(const Eigen::MatrixXd& W);

struct TrajectoryOutput {
  ExperimentOutput runs;
  std::filesystem::path waypoints_path;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  double final_violation = 0.0;
};

/// Trajectory experiment: straight-line start, per-seed traces, final mean
/// trajectory as waypoints.csv (usv, tau, x, y).
TrajectoryOutput cmd_trajectory(const ExperimentConfig& cfg);

}  // namespace dsmpl
