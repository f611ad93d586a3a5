#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dsmpl/harness.hpp"
#include "dsmpl/metrics.hpp"

using namespace dsmpl;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "dsmpl_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

// trace content with the wall-clock column stripped (timing is measured, not
// replayed)
std::string algorithmic_columns(const fs::path& p) {
  std::ifstream is(p);
  std::string out, line;
  while (std::getline(is, line)) {
    const size_t cut = line.rfind(',');
    out += line.substr(0, cut);
    out += '\n';
  }
  return out;
}

ExperimentConfig tiny_quartic(const fs::path& dir) {
  ExperimentConfig cfg;
  cfg.problem = "quartic";
  cfg.variant = Variant::SCAMPL;
  cfg.n = 3;
  cfg.target_lambda = 0.6;
  cfg.lambda_tol = 0.3;
  cfg.gamma = 100.0;
  cfg.mu = 500.0;
  cfg.alpha = 0.3;
  cfg.beta = 0.01;
  cfg.T = 25;
  cfg.seeds = {1};
  cfg.out_dir = dir.string();
  return cfg;
}

}  // namespace

TEST_CASE("presets exist and unknown names are rejected") {
  CHECK(preset_config("synthetic-gamma-sweep").sweep_values.size() == 5);
  CHECK(preset_config("trajectory").problem == "trajectory");
  CHECK(preset_config("trajectory-paper").trajectory_paper_scale);
  CHECK_THROWS_AS(preset_config("nope"), ConfigError);
}

TEST_CASE("config JSON round trip is lossless") {
  ExperimentConfig cfg = preset_config("synthetic-Teps");
  cfg.gamma = 1234.5678901234567;
  cfg.seeds = {1, 99, 0xDEADBEEFCAFEULL};
  cfg.beta = 3.5e-6;
  const nlohmann::json j = config_to_json(cfg);
  const ExperimentConfig back = config_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.gamma == cfg.gamma);
  CHECK(back.beta == cfg.beta);
  CHECK(back.seeds == cfg.seeds);
  CHECK(back.T == cfg.T);
  CHECK(back.variant == cfg.variant);
  CHECK(back.epsilon_list == cfg.epsilon_list);
}

TEST_CASE("config validation points at the offending key") {
  nlohmann::json j;
  j["beta"] = -1.0;
  try {
    config_from_json(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("beta") != std::string::npos);
  }
  nlohmann::json empty_seeds;
  empty_seeds["seeds"] = nlohmann::json::array();
  CHECK_THROWS_AS(config_from_json(empty_seeds), ConfigError);
  nlohmann::json bad_type;
  bad_type["T"] = "many";
  CHECK_THROWS_AS(config_from_json(bad_type), ConfigError);
}

TEST_CASE("overrides reach nested keys and parse JSON values") {
  nlohmann::json j;
  apply_override(j, "gamma=500");
  apply_override(j, "seeds=[7,8]");
  apply_override(j, "problem=quartic");
  CHECK(j["gamma"] == 500);
  CHECK(j["seeds"] == nlohmann::json::array({7, 8}));
  CHECK(j["problem"] == "quartic");
  CHECK_THROWS_AS(apply_override(j, "novalue"), ConfigError);
}

TEST_CASE("cmd_run: identical seeds produce identical trace files") {
  const fs::path dir = fresh_dir("run_same_seed");
  ExperimentConfig cfg = tiny_quartic(dir);
  cfg.seeds = {1, 1};
  ExperimentOutput out = cmd_run(cfg);
  REQUIRE(out.trace_paths.size() == 2);
  // same seed writes the same file name twice; compare the recorded traces
  CHECK(out.results[0].trace.Pi == out.results[1].trace.Pi);
  CHECK(out.results[0].trace.theta == out.results[1].trace.theta);
  CHECK(out.results[0].final_mean_iterate == out.results[1].final_mean_iterate);
}

TEST_CASE("cmd_run: a manifest re-runs bit-identically") {
  const fs::path dir = fresh_dir("run_manifest");
  ExperimentConfig cfg = tiny_quartic(dir);
  cfg.seeds = {3, 4};
  ExperimentOutput first = cmd_run(cfg);
  const nlohmann::json manifest = nlohmann::json::parse(slurp(first.manifest_path));

  ExperimentConfig replay = config_from_json(manifest.at("config"));
  replay.out_dir = fresh_dir("run_manifest_replay").string();
  ExperimentOutput second = cmd_run(replay);
  REQUIRE(first.trace_paths.size() == second.trace_paths.size());
  for (size_t i = 0; i < first.trace_paths.size(); ++i)
    CHECK(algorithmic_columns(first.trace_paths[i]) ==
          algorithmic_columns(second.trace_paths[i]));
}

TEST_CASE("cmd_run: manifest carries schedule, graph hash and summaries") {
  const fs::path dir = fresh_dir("run_manifest_fields");
  ExperimentConfig cfg = tiny_quartic(dir);
  ExperimentOutput out = cmd_run(cfg);
  const nlohmann::json manifest = nlohmann::json::parse(slurp(out.manifest_path));
  CHECK(manifest.contains("schedule"));
  CHECK(manifest.at("graph").contains("hash"));
  CHECK(manifest.at("graph").at("lambda").get<double>() > 0.0);
  CHECK(manifest.at("summary").size() == 1);
  CHECK(manifest.at("summary")[0].contains("best_pi"));
  CHECK(manifest.at("summary")[0].contains("random_time_t"));
}

TEST_CASE("trace CSV round trips including skipped cells") {
  const fs::path dir = fresh_dir("trace_csv");
  ExperimentConfig cfg = tiny_quartic(dir);
  cfg.pi_every = 2;  // odd iterations skip Pi
  RunResult r = execute_run(cfg, 9);
  const fs::path path = dir / "trace.csv";
  write_trace_csv(path, r.trace);
  MetricsTrace back = read_trace_csv(path);
  REQUIRE(back.size() == r.trace.size());
  for (int t = 0; t < back.size(); ++t) {
    CHECK(back.theta[t] == r.trace.theta[t]);
    CHECK(back.has_pi(t) == r.trace.has_pi(t));
    if (back.has_pi(t)) CHECK(back.Pi[t] == r.trace.Pi[t]);
  }
}

TEST_CASE("cmd_sweep: aggregation equals recomputation from the trace files") {
  const fs::path dir = fresh_dir("sweep_gamma");
  ExperimentConfig cfg = tiny_quartic(dir);
  cfg.T = 12;
  cfg.seeds = {1, 2};
  cfg.sweep_values = {50.0, 100.0};
  SweepOutput out = cmd_sweep(cfg, SweepAxis::Gamma);
  CHECK(out.failed_cells == 0);

  const nlohmann::json manifest = nlohmann::json::parse(slurp(out.manifest_path));
  // recompute the mean-Pi curve for value 50 from the individual traces
  std::vector<MetricsTrace> traces;
  for (const auto& cell : manifest.at("cells"))
    if (cell.at("value").get<double>() == 50.0)
      traces.push_back(read_trace_csv(dir / cell.at("trace").get<std::string>()));
  REQUIRE(traces.size() == 2);

  std::ifstream is(out.summary_path);
  std::string line;
  std::getline(is, line);
  CHECK(line == "value,t,mean_Pi,seeds");
  int rows_checked = 0;
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::string v, t, pi, seeds;
    std::getline(ss, v, ',');
    std::getline(ss, t, ',');
    std::getline(ss, pi, ',');
    std::getline(ss, seeds, ',');
    if (std::stod(v) != 50.0) continue;
    const int tt = std::stoi(t) - 1;
    const double expected = 0.5 * (traces[0].Pi[tt] + traces[1].Pi[tt]);
    CHECK(std::stod(pi) == doctest::Approx(expected).epsilon(1e-12));
    ++rows_checked;
  }
  CHECK(rows_checked == 12);
}

TEST_CASE("cmd_sweep: failed cells are recorded and the sweep continues") {
  const fs::path dir = fresh_dir("sweep_fail");
  ExperimentConfig cfg = tiny_quartic(dir);
  cfg.T = 8;
  cfg.sweep_values = {100.0, -1.0};  // the negative penalty weight cannot run
  SweepOutput out = cmd_sweep(cfg, SweepAxis::Gamma);
  CHECK(out.failed_cells == 1);
  const nlohmann::json manifest = nlohmann::json::parse(slurp(out.manifest_path));
  CHECK(manifest.at("failures").size() == 1);
  CHECK(fs::exists(out.summary_path));
}

TEST_CASE("cmd_sweep: the work pool does not change the aggregation") {
  ExperimentConfig cfg = tiny_quartic(fresh_dir("sweep_pool_1"));
  cfg.T = 10;
  cfg.seeds = {1, 2};
  cfg.sweep_values = {50.0, 200.0};
  cfg.n_threads = 1;
  SweepOutput serial = cmd_sweep(cfg, SweepAxis::Gamma);
  cfg.out_dir = fresh_dir("sweep_pool_2").string();
  cfg.n_threads = 2;
  SweepOutput pooled = cmd_sweep(cfg, SweepAxis::Gamma);
  CHECK(slurp(serial.summary_path) == slurp(pooled.summary_path));
}

TEST_CASE("cmd_sweep: empty axis list is an error") {
  ExperimentConfig cfg = tiny_quartic(fresh_dir("sweep_empty"));
  cfg.sweep_values = {};
  CHECK_THROWS_AS(cmd_sweep(cfg, SweepAxis::Gamma), ConfigError);
}

TEST_CASE("cmd_sweep: epsilon axis emits a T_epsilon table") {
  const fs::path dir = fresh_dir("sweep_eps");
  ExperimentConfig cfg = tiny_quartic(dir);
  cfg.T = 40;
  cfg.epsilon_list = {1e2, 1e-12};  // generous and unreachable
  SweepOutput out = cmd_sweep(cfg, SweepAxis::Epsilon);
  std::ifstream is(out.summary_path);
  std::string header, row1, row2;
  std::getline(is, header);
  std::getline(is, row1);
  std::getline(is, row2);
  CHECK(header == "value,epsilon,median_T,hits,cells");
  CHECK(row1.substr(0, 4) == "100,");
  CHECK(row2.find(",-1,0,") != std::string::npos);  // unreachable epsilon: no hits
}

TEST_CASE("calibrate-graph writes a JSON document") {
  const fs::path dir = fresh_dir("calibrate");
  const fs::path path = cmd_calibrate_graph(12, 0.6, 0.2, 4, dir);
  const nlohmann::json j = nlohmann::json::parse(slurp(path));
  CHECK(j.at("n") == 12);
  CHECK(j.at("W").size() == 144);
  CHECK(std::abs(j.at("lambda").get<double>() - 0.6) <= 0.2);
  CHECK(j.contains("radius"));
}

TEST_CASE("check_mixing_matrix flags corrupted weights") {
  Eigen::MatrixXd W = Eigen::MatrixXd::Constant(3, 3, 1.0 / 3.0);
  CHECK(check_mixing_matrix(W).passed);
  W(0, 0) += 0.01;  // row sums 1.01
  CheckResult r = check_mixing_matrix(W);
  CHECK_FALSE(r.passed);
  CHECK(r.measured >= 0.01);
}

TEST_CASE("cmd_check passes on a well-posed configuration") {
  ExperimentConfig cfg = tiny_quartic(fresh_dir("check_ok"));
  cfg.T = 60;
  CheckReport report = cmd_check(cfg);
  for (const auto& c : report.checks) {
    INFO(c.name, " measured ", c.measured);
    CHECK(c.passed);
  }
}

TEST_CASE("cmd_check reports an infeasible final iterate when the penalty is off") {
  ExperimentConfig cfg = tiny_quartic(fresh_dir("check_gamma0"));
  cfg.T = 80;
  cfg.gamma = 0.0;
  CheckReport report = cmd_check(cfg);
  bool found = false;
  for (const auto& c : report.checks)
    if (c.name == "final_iterate_feasibility") {
      found = true;
      CHECK_FALSE(c.passed);
    }
  CHECK(found);
}

TEST_CASE("trajectory setup is configurable from the config document") {
  nlohmann::json j;
  j["preset"] = "trajectory";
  j["trajectory"] = {{"N", 2},
                     {"T_wp", 4},
                     {"T_f", 200.0},
                     {"v_max", 2.5},
                     {"sigma", 0.05},
                     {"jitter", 1.0},
                     {"vortices", {{50.0, 50.0, 40.0, 12.0}}},
                     {"starts", {{0.0, 10.0}, {0.0, 30.0}}},
                     {"goals", {{100.0, 10.0}, {100.0, 30.0}}},
                     {"formation", {{1.0, 0.0, -1.0, 0.0}}}};
  ExperimentConfig cfg = config_from_json(j);
  TrajectoryParams p = trajectory_params_for(cfg);
  CHECK(p.N == 2);
  CHECK(p.T_wp == 4);
  CHECK(p.Delta_t == doctest::Approx(50.0));
  CHECK(p.v_max == 2.5);
  CHECK(p.noise_sigma == 0.05);
  CHECK(p.center_jitter == 1.0);
  REQUIRE(p.base_field.count() == 1);
  CHECK(p.base_field.strengths[0] == 40.0);
  CHECK(p.starts(1, 1) == 30.0);
  CHECK(p.formation_matrix.rows() == 1);

  // lossless through the manifest round trip
  const ExperimentConfig back = config_from_json(config_to_json(cfg));
  CHECK(trajectory_params_for(back).Delta_t == doctest::Approx(50.0));

  nlohmann::json bad = j;
  bad["trajectory"]["vortices"] = {{1.0, 2.0, 3.0}};  // missing delta
  CHECK_THROWS_AS(trajectory_params_for(config_from_json(bad)), ConfigError);
}

TEST_CASE("paper-scale trajectory dimensions") {
  ExperimentConfig cfg = preset_config("trajectory-paper");
  const TrajectoryParams p = trajectory_params_for(cfg);
  CHECK(p.N == 4);
  CHECK(p.T_wp == 20);
  CHECK(p.dim() == 160);
  CHECK(p.Delta_t == doctest::Approx(30.0));
  CHECK(p.base_field.count() == 3);
  // the box formation rows accept the configured starts and goals
  CHECK_NOTHROW(make_trajectory_problem(p, 3));
}

TEST_CASE("zero-field trajectory keeps the straight line feasible") {
  ExperimentConfig cfg = preset_config("trajectory");
  cfg.T = 25;
  cfg.seeds = {4};
  cfg.out_dir = fresh_dir("trajectory_zero_field").string();
  cfg.trajectory = {{"vortices", {{100.0, 100.0, 0.0, 10.0}}}, {"sigma", 0.0}, {"jitter", 0.0}};
  TrajectoryOutput out = cmd_trajectory(cfg);
  CHECK(out.final_violation <= 1e-6);
  CHECK(out.final_objective <= out.initial_objective + 1e-9);
}

TEST_CASE("paper synthetic defaults run and trace is non-empty") {
  ExperimentConfig cfg;  // gamma 2e3, mu 5e3, alpha 0.05, beta 3.5e-6, n = 10
  cfg.T = 30;
  cfg.seeds = {1};
  cfg.out_dir = fresh_dir("paper_defaults").string();
  ExperimentOutput out = cmd_run(cfg);
  REQUIRE(out.results.size() == 1);
  CHECK(out.results[0].trace.size() == 30);
  CHECK_FALSE(out.results[0].status.aborted_non_finite);
  const nlohmann::json manifest = nlohmann::json::parse(slurp(out.manifest_path));
  CHECK(manifest.at("summary")[0].contains("theory_diagnostics"));
}

TEST_CASE("trajectory manifests record the Monte-Carlo estimator budgets") {
  ExperimentConfig cfg = preset_config("trajectory");
  cfg.T = 6;
  cfg.seeds = {1};
  cfg.out_dir = fresh_dir("trajectory_budgets").string();
  ExperimentOutput out = cmd_run(cfg);
  const nlohmann::json manifest = nlohmann::json::parse(slurp(out.manifest_path));
  CHECK(manifest.at("estimator_budgets").at("mean_grad") == 256);
  CHECK(manifest.at("estimator_budgets").at("mean_objective") == 256);
}

TEST_CASE("cmd_trajectory writes waypoints and reports objectives") {
  const fs::path dir = fresh_dir("trajectory_small");
  ExperimentConfig cfg = preset_config("trajectory");
  cfg.T = 12;
  cfg.out_dir = dir.string();
  cfg.seeds = {2};
  TrajectoryOutput out = cmd_trajectory(cfg);
  CHECK(fs::exists(out.waypoints_path));
  CHECK(out.initial_objective > 0.0);
  CHECK(std::isfinite(out.final_objective));
  const std::string waypoints = slurp(out.waypoints_path);
  // header + (T_wp + 1) rows per USV
  const auto lines = std::count(waypoints.begin(), waypoints.end(), '\n');
  CHECK(lines == 1 + 2 * 11);
}
