#include "dsmpl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "dsmpl/graph.hpp"
#include "dsmpl/metrics.hpp"

namespace dsmpl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string variant_name(Variant v) { return v == Variant::SMPL ? "smpl" : "scampl"; }

Variant variant_from(const std::string& s) {
  if (s == "smpl") return Variant::SMPL;
  if (s == "scampl") return Variant::SCAMPL;
  throw ConfigError("config /variant: expected \"smpl\" or \"scampl\", got \"" + s + "\"");
}

void atomic_write(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    os << content;
  }
  fs::rename(tmp, path);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

ProblemSpec build_problem(const ExperimentConfig& cfg) {
  ProblemSpec problem;
  if (cfg.problem == "quartic") {
    problem = make_quartic_problem(cfg.n, cfg.noise_std, cfg.problem_seed);
  } else if (cfg.problem == "trajectory") {
    problem = make_trajectory_problem(trajectory_params_for(cfg), cfg.n);
  } else {
    throw ConfigError("config /problem: expected \"quartic\" or \"trajectory\"");
  }
  problem.gamma = cfg.gamma;
  return problem;
}

double summed_violation(const ProblemSpec& problem, const Eigen::VectorXd& x) {
  return problem.constraint_values(x).cwiseMax(0.0).sum();
}

}  // namespace

namespace {

Eigen::MatrixXd matrix_from_json(const json& rows, const char* where) {
  if (!rows.is_array() || rows.empty())
    throw ConfigError(std::string("config /trajectory/") + where + ": expected a row array");
  const size_t cols = rows.front().size();
  Eigen::MatrixXd out(rows.size(), cols);
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols)
      throw ConfigError(std::string("config /trajectory/") + where + ": ragged rows");
    for (size_t c = 0; c < cols; ++c) out(r, c) = rows[r][c].get<double>();
  }
  return out;
}

void apply_trajectory_overrides(TrajectoryParams& p, const json& t) {
  double T_f = p.Delta_t * p.T_wp;
  if (t.contains("N")) p.N = t.at("N").get<int>();
  if (t.contains("T_wp")) p.T_wp = t.at("T_wp").get<int>();
  if (t.contains("T_f")) T_f = t.at("T_f").get<double>();
  p.Delta_t = T_f / p.T_wp;
  if (t.contains("v_max")) p.v_max = t.at("v_max").get<double>();
  if (t.contains("sigma")) p.noise_sigma = t.at("sigma").get<double>();
  if (t.contains("jitter")) p.center_jitter = t.at("jitter").get<double>();
  if (t.contains("vortices")) {
    const Eigen::MatrixXd v = matrix_from_json(t.at("vortices"), "vortices");
    if (v.cols() != 4)
      throw ConfigError("config /trajectory/vortices: rows are [qx, qy, omega, delta]");
    p.base_field.centers.clear();
    p.base_field.strengths.clear();
    p.base_field.radii.clear();
    for (int m = 0; m < v.rows(); ++m) {
      p.base_field.centers.emplace_back(v(m, 0), v(m, 1));
      p.base_field.strengths.push_back(v(m, 2));
      p.base_field.radii.push_back(v(m, 3));
      if (!(v(m, 3) > 0.0))
        throw ConfigError("config /trajectory/vortices: delta must be > 0");
    }
  }
  if (t.contains("starts")) p.starts = matrix_from_json(t.at("starts"), "starts");
  if (t.contains("goals")) p.goals = matrix_from_json(t.at("goals"), "goals");
  if (t.contains("formation"))
    p.formation_matrix = matrix_from_json(t.at("formation"), "formation");
}

}  // namespace

TrajectoryParams trajectory_params_for(const ExperimentConfig& cfg) {
  TrajectoryParams p;
  p.base_field.strengths = {-60.0, 60.0, -30.0};
  p.base_field.radii = {20.0, 20.0, 10.0};
  p.center_jitter = 5.0;
  p.noise_sigma = 0.1;
  p.v_max = 1.0;
  if (cfg.trajectory_paper_scale) {
    p.N = 4;
    p.T_wp = 20;
    p.Delta_t = 600.0 / p.T_wp;
    p.base_field.centers = {Eigen::Vector2d(60.0, 110.0), Eigen::Vector2d(110.0, 90.0),
                            Eigen::Vector2d(150.0, 130.0)};
    // box formation with 5 m sides; edge-alignment rows keep the corners an
    // axis-aligned rectangle (1,2 top; 3,4 bottom)
    p.starts.resize(4, 2);
    p.starts << 10.0, 97.5, 15.0, 97.5, 10.0, 92.5, 15.0, 92.5;
    p.goals.resize(4, 2);
    p.goals << 180.0, 97.5, 185.0, 97.5, 180.0, 92.5, 185.0, 92.5;
    p.formation_matrix.resize(4, 8);
    p.formation_matrix << 0, 1, 0, -1, 0, 0, 0, 0,  // y1 = y2
        0, 0, 0, 0, 0, 1, 0, -1,                    // y3 = y4
        1, 0, 0, 0, -1, 0, 0, 0,                    // x1 = x3
        0, 0, 1, 0, 0, 0, -1, 0;                    // x2 = x4
  } else {
    p.N = 2;
    p.T_wp = 10;
    p.Delta_t = 600.0 / p.T_wp;
    p.base_field.centers = {Eigen::Vector2d(70.0, 100.0), Eigen::Vector2d(120.0, 85.0),
                            Eigen::Vector2d(160.0, 120.0)};
    p.starts.resize(2, 2);
    p.starts << 10.0, 90.0, 10.0, 110.0;
    p.goals.resize(2, 2);
    p.goals << 190.0, 90.0, 190.0, 110.0;
    // lockstep along-track: equal x progression for the pair
    p.formation_matrix.resize(1, 4);
    p.formation_matrix << 1.0, 0.0, -1.0, 0.0;
  }
  if (cfg.trajectory.is_object() && !cfg.trajectory.empty())
    apply_trajectory_overrides(p, cfg.trajectory);
  return p;
}

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig cfg;
  cfg.preset = name;
  if (name == "custom") return cfg;
  if (name == "synthetic-gamma-sweep") {
    cfg.sweep_values = {1.0, 1000.0, 2000.0, 10000.0, 100000.0};
    cfg.seeds = {1, 2, 3, 4, 5};
    cfg.T = 5000;
    return cfg;
  }
  if (name == "synthetic-Teps") {
    cfg.T = 30000;
    cfg.seeds = {1, 2, 3};
    return cfg;
  }
  if (name == "synthetic-n-sweep") {
    cfg.sweep_values = {50, 60, 70, 80, 90, 100};
    cfg.epsilon_list = {1e-3};
    cfg.T = 20000;
    cfg.seeds = {1, 2, 3};
    return cfg;
  }
  if (name == "synthetic-lambda-sweep") {
    cfg.n = 50;
    cfg.sweep_values = {0.3, 0.6, 0.9};
    cfg.lambda_tol = 0.03;
    cfg.T = 2000;
    cfg.seeds = {1, 2, 3};
    return cfg;
  }
  if (name == "trajectory" || name == "trajectory-paper") {
    cfg.problem = "trajectory";
    cfg.trajectory_paper_scale = (name == "trajectory-paper");
    cfg.n = 3;
    cfg.target_lambda = 2.0 / 3.0;
    cfg.lambda_tol = 0.05;
    cfg.variant = Variant::SCAMPL;
    cfg.gamma = 100.0;
    cfg.mu = 4.0;
    cfg.alpha = 0.5;
    cfg.beta = 0.05;
    cfg.T = 200;
    cfg.pi_every = 0;
    return cfg;
  }
  throw ConfigError("unknown preset \"" + name + "\"");
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["preset"] = cfg.preset;
  j["problem"] = cfg.problem;
  j["variant"] = variant_name(cfg.variant);
  j["n"] = cfg.n;
  j["target_lambda"] = cfg.target_lambda;
  j["lambda_tol"] = cfg.lambda_tol;
  j["graph_seed"] = cfg.graph_seed;
  j["problem_seed"] = cfg.problem_seed;
  j["gamma"] = cfg.gamma;
  j["mu"] = cfg.mu;
  j["alpha"] = cfg.alpha;
  j["beta"] = cfg.beta;
  j["eta"] = cfg.eta;
  j["b0"] = cfg.b0;
  j["T"] = cfg.T;
  j["auto_schedule"] = cfg.auto_schedule;
  j["noise_std"] = cfg.noise_std;
  j["x0"] = cfg.x0;
  j["seeds"] = cfg.seeds;
  j["pi_every"] = cfg.pi_every;
  j["metrics_every"] = cfg.metrics_every;
  j["n_threads"] = cfg.n_threads;
  j["out_dir"] = cfg.out_dir;
  j["sweep_values"] = cfg.sweep_values;
  j["epsilon_list"] = cfg.epsilon_list;
  j["trajectory_paper_scale"] = cfg.trajectory_paper_scale;
  if (!cfg.trajectory.empty()) j["trajectory"] = cfg.trajectory;
  return j;
}

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config /") + key + ": " + e.what());
  }
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("preset")) cfg = preset_config(j.at("preset").get<std::string>());
  read_field(j, "problem", cfg.problem);
  if (j.contains("variant")) cfg.variant = variant_from(j.at("variant").get<std::string>());
  read_field(j, "n", cfg.n);
  read_field(j, "target_lambda", cfg.target_lambda);
  read_field(j, "lambda_tol", cfg.lambda_tol);
  read_field(j, "graph_seed", cfg.graph_seed);
  read_field(j, "problem_seed", cfg.problem_seed);
  read_field(j, "gamma", cfg.gamma);
  read_field(j, "mu", cfg.mu);
  read_field(j, "alpha", cfg.alpha);
  read_field(j, "beta", cfg.beta);
  read_field(j, "eta", cfg.eta);
  read_field(j, "b0", cfg.b0);
  read_field(j, "T", cfg.T);
  read_field(j, "auto_schedule", cfg.auto_schedule);
  read_field(j, "noise_std", cfg.noise_std);
  read_field(j, "x0", cfg.x0);
  read_field(j, "seeds", cfg.seeds);
  read_field(j, "pi_every", cfg.pi_every);
  read_field(j, "metrics_every", cfg.metrics_every);
  read_field(j, "n_threads", cfg.n_threads);
  read_field(j, "out_dir", cfg.out_dir);
  read_field(j, "sweep_values", cfg.sweep_values);
  read_field(j, "epsilon_list", cfg.epsilon_list);
  read_field(j, "trajectory_paper_scale", cfg.trajectory_paper_scale);
  if (j.contains("trajectory")) {
    if (!j.at("trajectory").is_object())
      throw ConfigError("config /trajectory: expected an object");
    cfg.trajectory = j.at("trajectory");
  }

  if (cfg.seeds.empty()) throw ConfigError("config /seeds: at least one seed required");
  if (cfg.n < 1) throw ConfigError("config /n: must be >= 1");
  if (!(cfg.beta > 0.0 && cfg.beta <= 1.0) && !cfg.auto_schedule)
    throw ConfigError("config /beta: must lie in (0, 1]");
  if (cfg.T < 1) throw ConfigError("config /T: must be >= 1");
  if (cfg.problem != "quartic" && cfg.problem != "trajectory")
    throw ConfigError("config /problem: expected \"quartic\" or \"trajectory\"");
  return cfg;
}

void apply_override(json& j, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override \"" + kv + "\": expected key=value");
  std::string key = kv.substr(0, eq);
  const std::string value = kv.substr(eq + 1);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // bare strings stay strings
  }
  json* node = &j;
  size_t pos = 0;
  while (true) {
    const size_t dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot - pos);
    if (dot == std::string::npos) {
      (*node)[part] = parsed;
      return;
    }
    node = &(*node)[part];
    pos = dot + 1;
  }
}

// ---------------------------------------------------------------------------
// Run execution
// ---------------------------------------------------------------------------

RunResult execute_run(const ExperimentConfig& cfg, std::uint64_t seed) {
  const ProblemSpec problem = build_problem(cfg);
  const CalibratedGraph cal =
      calibrate_radius(cfg.n, cfg.target_lambda, cfg.lambda_tol, cfg.graph_seed);

  RunResult result;
  result.seed = seed;
  result.lambda = cal.mixing.lambda;
  result.nu = cal.mixing.nu;
  result.graph_hash_v = graph_hash(cal.graph);
  result.sigma_bar_sq = problem.sigma_bar_sq;

  if (cfg.problem == "quartic") {
    Eigen::VectorXd lo(1), hi(1);
    lo[0] = -6.0;
    hi[0] = 4.0;
    result.L_used = estimate_smoothness(problem, lo, hi, 2001);
  } else {
    result.L_used = problem.L;
  }

  AlgorithmConfig acfg;
  acfg.variant = cfg.variant;
  acfg.gamma = cfg.gamma;
  acfg.T = cfg.T;
  acfg.seed = seed;
  result.schedule_was_auto = cfg.auto_schedule;
  if (cfg.auto_schedule) {
    result.schedule = default_schedule(cfg.variant, cfg.n, cal.mixing.nu, result.L_used,
                                       problem.sigma_bar_sq, cfg.T, cfg.gamma, cfg.mu);
    acfg.beta = result.schedule.beta;
    acfg.b0 = result.schedule.b0;
    if (cfg.variant == Variant::SMPL) {
      acfg.eta = result.schedule.eta_or_alpha;
    } else {
      acfg.alpha = result.schedule.eta_or_alpha;
      acfg.mu = cfg.mu;
    }
  } else {
    acfg.eta = cfg.eta;
    acfg.alpha = cfg.alpha;
    acfg.mu = cfg.mu;
    acfg.beta = cfg.beta;
    acfg.b0 = cfg.b0;
    result.schedule.eta_or_alpha = cfg.variant == Variant::SMPL ? cfg.eta : cfg.alpha;
    result.schedule.beta = cfg.beta;
    result.schedule.b0 = cfg.b0;
  }

  Eigen::VectorXd x0;
  if (cfg.problem == "quartic") {
    x0.resize(1);
    x0[0] = cfg.x0;
  } else {
    x0 = straight_line_trajectory(trajectory_params_for(cfg));
  }

  RunState state = init_run(problem, cal.mixing, acfg, x0);

  const int random_t =
      1 + static_cast<int>(rng::Stream(rng::derive(seed, 0x6f757470ULL)).next_u64() %
                           static_cast<std::uint64_t>(cfg.T));
  result.random_time_t = random_t;

  const TrajectoryParams traj_params =
      cfg.problem == "trajectory" ? trajectory_params_for(cfg) : TrajectoryParams{};
  const double L_used = result.L_used;

  MetricsTrace& trace = state.trace;
  std::vector<MetricsHook> hooks{[&](const IterationView& view) {
    const int idx = view.t - 1;
    if (cfg.metrics_every > 0 && (view.t % cfg.metrics_every == 0 || view.t == 1)) {
      if (problem.has_mean_grad()) {
        auto [phi, upsilon] = gradient_variances(view.z, view.x, problem);
        trace.phi[idx] = phi;
        trace.upsilon[idx] = upsilon;
      }
      const Eigen::VectorXd xbar = view.x.colwise().mean().transpose();
      trace.F_bar[idx] = penalty_objective(xbar, problem);
      trace.violation[idx] = cfg.problem == "trajectory"
                                 ? trajectory_violation(xbar, traj_params)
                                 : summed_violation(problem, xbar);
    }
    if (cfg.pi_every > 0 && (view.t % cfg.pi_every == 0 || view.t == 1)) {
      const double pi = kkt_residual_mean(view.x_check, problem, L_used);
      trace.Pi[idx] = pi;
      if (pi < result.best_pi) {
        result.best_pi = pi;
        result.best_pi_t = view.t;
        result.best_pi_mean_iterate = view.x_check.colwise().mean().transpose();
      }
    }
    if (view.t == random_t)
      result.random_time_mean_iterate = view.x.colwise().mean().transpose();
  }};

  RunOptions options;
  options.n_threads = cfg.n_threads;
  run(state, hooks, options);

  result.status = state.status;
  result.trace = std::move(state.trace);
  result.final_mean_iterate = state.stack_x().colwise().mean().transpose();
  if (!result.status.aborted()) {
    result.final_F = penalty_objective(result.final_mean_iterate, problem);
    result.final_violation =
        cfg.problem == "trajectory"
            ? trajectory_violation(result.final_mean_iterate, traj_params)
            : summed_violation(problem, result.final_mean_iterate);
  }
  result.diagnostics = check_cumulative_bounds(
      result.trace, cal.mixing.nu, cal.mixing.lambda,
      cfg.variant == Variant::SCAMPL ? acfg.alpha : 1.0);
  result.diagnostics.L_estimate = result.L_used;
  result.diagnostics.sigma_bar_sq_estimate = problem.sigma_bar_sq;
  result.mean_grad_budget = problem.mean_grad_budget;
  result.mean_objective_budget = problem.mean_objective_budget;
  return result;
}

// ---------------------------------------------------------------------------
// Trace CSV
// ---------------------------------------------------------------------------

void write_trace_csv(const fs::path& path, const MetricsTrace& trace) {
  std::ostringstream os;
  os << "t,theta,delta,phi,upsilon,eps_track,Pi,F_bar,violation,wall_ms\n";
  auto cell = [&os](double v) {
    if (std::isfinite(v))
      os << ',' << format_double(v);
    else
      os << ',';
  };
  for (int t = 0; t < trace.size(); ++t) {
    os << (t + 1);
    cell(trace.theta[t]);
    cell(trace.delta[t]);
    cell(trace.phi[t]);
    cell(trace.upsilon[t]);
    cell(trace.eps_track[t]);
    cell(trace.Pi[t]);
    cell(trace.F_bar[t]);
    cell(trace.violation[t]);
    cell(trace.wall_ms[t]);
    os << '\n';
  }
  atomic_write(path, os.str());
}

MetricsTrace read_trace_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open trace file " + path.string());
  MetricsTrace trace;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
      cells.push_back(cell.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : std::stod(cell));
    cells.resize(10, std::numeric_limits<double>::quiet_NaN());
    trace.theta.push_back(cells[1]);
    trace.delta.push_back(cells[2]);
    trace.phi.push_back(cells[3]);
    trace.upsilon.push_back(cells[4]);
    trace.eps_track.push_back(cells[5]);
    trace.Pi.push_back(cells[6]);
    trace.F_bar.push_back(cells[7]);
    trace.violation.push_back(cells[8]);
    trace.wall_ms.push_back(cells[9]);
  }
  return trace;
}

// ---------------------------------------------------------------------------
// cmd_run
// ---------------------------------------------------------------------------

namespace {

json run_summary(const RunResult& r) {
  json s;
  s["seed"] = r.seed;
  s["aborted_non_finite"] = r.status.aborted_non_finite;
  s["aborted_solver_error"] = r.status.aborted_solver_error;
  if (r.status.qp_near_solves > 0) s["qp_near_solves"] = r.status.qp_near_solves;
  s["final_F"] = r.final_F;
  s["final_violation"] = r.final_violation;
  s["final_mean_iterate"] = std::vector<double>(
      r.final_mean_iterate.data(), r.final_mean_iterate.data() + r.final_mean_iterate.size());
  if (std::isfinite(r.best_pi)) {
    s["best_pi"] = r.best_pi;
    s["best_pi_t"] = r.best_pi_t;
    s["best_pi_mean_iterate"] =
        std::vector<double>(r.best_pi_mean_iterate.data(),
                            r.best_pi_mean_iterate.data() + r.best_pi_mean_iterate.size());
  }
  s["random_time_t"] = r.random_time_t;
  if (r.random_time_mean_iterate.size() > 0)
    s["random_time_mean_iterate"] = std::vector<double>(
        r.random_time_mean_iterate.data(),
        r.random_time_mean_iterate.data() + r.random_time_mean_iterate.size());
  s["theory_diagnostics"] = {{"lambda", r.diagnostics.lambda},
                             {"nu", r.diagnostics.nu},
                             {"L_estimate", r.diagnostics.L_estimate},
                             {"sigma_bar_sq_estimate", r.diagnostics.sigma_bar_sq_estimate},
                             {"consensus_bound_slack", r.diagnostics.consensus_bound_slack},
                             {"consensus_lhs", r.diagnostics.consensus_lhs},
                             {"consensus_rhs", r.diagnostics.consensus_rhs},
                             {"descent_violations", r.diagnostics.descent_violations}};
  return s;
}

}  // namespace

ExperimentOutput cmd_run(const ExperimentConfig& cfg) {
  ExperimentOutput out;
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);

  json manifest;
  manifest["version"] = kVersion;
  manifest["config"] = config_to_json(cfg);
  json summaries = json::array();
  bool first = true;
  for (std::uint64_t seed : cfg.seeds) {
    RunResult r = execute_run(cfg, seed);
    const fs::path trace_path = dir / ("trace_" + std::to_string(seed) + ".csv");
    write_trace_csv(trace_path, r.trace);
    out.trace_paths.push_back(trace_path);
    summaries.push_back(run_summary(r));
    if (first) {
      manifest["schedule"] = {{"eta_or_alpha", r.schedule.eta_or_alpha},
                              {"beta", r.schedule.beta},
                              {"b0", r.schedule.b0},
                              {"beta_clamped", r.schedule.beta_clamped},
                              {"auto", r.schedule_was_auto}};
      if (r.schedule.beta_clamped)
        manifest["warnings"].push_back("momentum schedule clamped to beta = 1");
      manifest["graph"] = {{"hash", r.graph_hash_v},
                           {"n", cfg.n},
                           {"lambda", r.lambda},
                           {"nu", r.nu}};
      manifest["L_used"] = r.L_used;
      manifest["sigma_bar_sq"] = r.sigma_bar_sq;
      if (r.mean_grad_budget > 0 || r.mean_objective_budget > 0)
        manifest["estimator_budgets"] = {{"mean_grad", r.mean_grad_budget},
                                         {"mean_objective", r.mean_objective_budget}};
      first = false;
    }
    manifest["traces"][std::to_string(seed)] =
        trace_path.filename().string();
    out.results.push_back(std::move(r));
  }
  manifest["summary"] = summaries;
  out.manifest_path = dir / "manifest.json";
  atomic_write(out.manifest_path, manifest.dump(2));
  return out;
}

// ---------------------------------------------------------------------------
// cmd_sweep
// ---------------------------------------------------------------------------

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "gamma") return SweepAxis::Gamma;
  if (s == "n") return SweepAxis::N;
  if (s == "lambda") return SweepAxis::Lambda;
  if (s == "epsilon") return SweepAxis::Epsilon;
  throw ConfigError("sweep axis must be one of gamma, n, lambda, epsilon");
}

namespace {

ExperimentConfig cell_config(const ExperimentConfig& base, SweepAxis axis, double value) {
  ExperimentConfig cfg = base;
  switch (axis) {
    case SweepAxis::Gamma:
      cfg.gamma = value;
      break;
    case SweepAxis::N:
      cfg.n = static_cast<int>(value);
      break;
    case SweepAxis::Lambda:
      cfg.target_lambda = value;
      break;
    case SweepAxis::Epsilon:
      break;  // one configuration; epsilon enters at extraction time
  }
  return cfg;
}

}  // namespace

SweepOutput cmd_sweep(const ExperimentConfig& cfg, SweepAxis axis) {
  std::vector<double> values = cfg.sweep_values;
  if (axis == SweepAxis::Epsilon) values = {0.0};  // single cell family
  if (values.empty()) throw ConfigError("sweep: empty axis value list");

  struct Cell {
    double value;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double v : values)
    for (std::uint64_t s : cfg.seeds) cells.push_back({v, s});

  std::vector<RunResult> results(cells.size());
  std::vector<std::string> failures(cells.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        results[i] = execute_run(cell_config(cfg, axis, cells[i].value), cells[i].seed);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };
  const int workers = std::max(1, cfg.n_threads);
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);

  json manifest;
  manifest["version"] = kVersion;
  manifest["config"] = config_to_json(cfg);
  manifest["axis"] = static_cast<int>(axis);
  manifest["failures"] = json::array();

  SweepOutput out;
  std::ostringstream summary;
  const bool teps_style = axis == SweepAxis::N || axis == SweepAxis::Epsilon;
  if (teps_style)
    summary << "value,epsilon,median_T,hits,cells\n";
  else
    summary << "value,t,mean_Pi,seeds\n";

  for (size_t ci = 0; ci < cells.size(); ++ci) {
    if (failures[ci].empty()) {
      const fs::path tp = dir / ("trace_v" + format_double(cells[ci].value) + "_s" +
                                 std::to_string(cells[ci].seed) + ".csv");
      write_trace_csv(tp, results[ci].trace);
      manifest["cells"].push_back({{"value", cells[ci].value},
                                   {"seed", cells[ci].seed},
                                   {"trace", tp.filename().string()}});
    } else {
      ++out.failed_cells;
      manifest["failures"].push_back(
          {{"value", cells[ci].value}, {"seed", cells[ci].seed}, {"error", failures[ci]}});
    }
  }

  for (double v : values) {
    std::vector<const RunResult*> group;
    for (size_t ci = 0; ci < cells.size(); ++ci)
      if (cells[ci].value == v && failures[ci].empty()) group.push_back(&results[ci]);
    if (group.empty()) continue;
    if (teps_style) {
      for (double eps : cfg.epsilon_list) {
        std::vector<double> hits;
        for (const RunResult* r : group) {
          auto te = extract_T_epsilon(r->trace, {eps});
          if (te[eps]) hits.push_back(*te[eps]);
        }
        std::sort(hits.begin(), hits.end());
        const double median = hits.empty() ? -1.0 : hits[hits.size() / 2];
        summary << format_double(axis == SweepAxis::Epsilon ? eps : v) << ','
                << format_double(eps) << ',' << format_double(median) << ',' << hits.size()
                << ',' << group.size() << '\n';
      }
    } else {
      const int T = group.front()->trace.size();
      for (int t = 0; t < T; ++t) {
        double acc = 0.0;
        int count = 0;
        for (const RunResult* r : group)
          if (t < r->trace.size() && r->trace.has_pi(t)) {
            acc += r->trace.Pi[t];
            ++count;
          }
        if (count > 0)
          summary << format_double(v) << ',' << (t + 1) << ',' << format_double(acc / count)
                  << ',' << count << '\n';
      }
    }
  }

  out.summary_path = dir / "summary.csv";
  atomic_write(out.summary_path, summary.str());
  out.manifest_path = dir / "sweep_manifest.json";
  atomic_write(out.manifest_path, manifest.dump(2));
  return out;
}

// ---------------------------------------------------------------------------
// cmd_calibrate_graph
// ---------------------------------------------------------------------------

fs::path cmd_calibrate_graph(int n, double target_lambda, double tol, std::uint64_t seed,
                             const fs::path& out_dir) {
  const CalibratedGraph cal = calibrate_radius(n, target_lambda, tol, seed);
  fs::create_directories(out_dir);
  const fs::path path = out_dir / "graph.json";
  json j = json::parse(graph_to_json(cal.graph, cal.mixing));
  j["radius"] = cal.radius;
  j["resamples"] = cal.resamples;
  j["seed"] = seed;
  atomic_write(path, j.dump(2));
  return path;
}

// ---------------------------------------------------------------------------
// cmd_check
// ---------------------------------------------------------------------------

CheckResult check_mixing_matrix(const Eigen::MatrixXd& W) {
  CheckResult r;
  r.name = "mixing_doubly_stochastic";
  r.threshold = 1e-12;
  double dev = (W - W.transpose()).cwiseAbs().maxCoeff();
  for (int i = 0; i < W.rows(); ++i) {
    dev = std::max(dev, std::abs(W.row(i).sum() - 1.0));
    dev = std::max(dev, std::abs(W.col(i).sum() - 1.0));
  }
  r.measured = dev;
  r.passed = dev <= r.threshold;
  r.detail = "max symmetry/row/column deviation";
  return r;
}

bool CheckReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const CheckResult& c) { return c.passed; });
}

CheckReport cmd_check(const ExperimentConfig& cfg) {
  CheckReport report;
  const CalibratedGraph cal =
      calibrate_radius(cfg.n, cfg.target_lambda, cfg.lambda_tol, cfg.graph_seed);
  report.checks.push_back(check_mixing_matrix(cal.mixing.W));

  // tracker/momentum average identity on a short run of the configured setup
  {
    ExperimentConfig short_cfg = cfg;
    short_cfg.T = std::min(cfg.T, 200);
    short_cfg.pi_every = 0;
    short_cfg.metrics_every = 0;
    const ProblemSpec problem = build_problem(short_cfg);
    AlgorithmConfig acfg;
    acfg.variant = cfg.variant;
    acfg.eta = cfg.eta;
    acfg.alpha = cfg.alpha;
    acfg.mu = cfg.mu;
    acfg.beta = cfg.beta;
    acfg.gamma = std::max(cfg.gamma, 1e-300);
    acfg.b0 = cfg.b0;
    acfg.T = short_cfg.T;
    acfg.seed = cfg.seeds.front();
    Eigen::VectorXd x0;
    if (cfg.problem == "quartic") {
      x0 = Eigen::VectorXd::Constant(1, cfg.x0);
    } else {
      x0 = straight_line_trajectory(trajectory_params_for(cfg));
    }
    RunState state = init_run(problem, cal.mixing, acfg, x0);
    double worst = 0.0;
    std::vector<MetricsHook> hooks{[&](const IterationView& view) {
      worst = std::max(
          Eigen::RowVectorXd(view.y.colwise().mean() - view.z.colwise().mean()).norm(),
          worst);
    }};
    run(state, hooks);
    CheckResult r;
    r.name = "tracker_momentum_average_identity";
    r.threshold = 1e-9 * std::sqrt(static_cast<double>(problem.d));
    r.measured = worst;
    r.passed = worst <= r.threshold;
    r.detail = "max_t ||ybar - zbar||";
    report.checks.push_back(r);

    CheckResult f;
    f.name = "final_iterate_feasibility";
    f.threshold = 1e-6;
    f.measured = problem.constraint_values(state.stack_x().colwise().mean().transpose())
                     .maxCoeff();
    f.passed = f.measured <= f.threshold;
    f.detail = "max_k g_k at the final mean iterate";
    report.checks.push_back(f);
  }

  // realized consensus accumulation bound on the prox-linear variant
  {
    ExperimentConfig smpl_cfg = cfg;
    smpl_cfg.problem = "quartic";
    smpl_cfg.variant = Variant::SMPL;
    smpl_cfg.T = std::min(cfg.T, 300);
    const ProblemSpec problem = build_problem(smpl_cfg);
    AlgorithmConfig acfg;
    acfg.variant = Variant::SMPL;
    acfg.eta = cfg.variant == Variant::SMPL ? cfg.eta : 1.0 / std::max(cfg.mu, 1e-12);
    acfg.beta = cfg.beta;
    acfg.gamma = std::max(cfg.gamma, 1e-300);
    acfg.b0 = cfg.b0;
    acfg.T = smpl_cfg.T;
    acfg.seed = cfg.seeds.front();
    RunState state =
        init_run(problem, cal.mixing, acfg, Eigen::VectorXd::Constant(1, cfg.x0));
    run(state);
    TheoryDiagnostics diag =
        check_cumulative_bounds(state.trace, cal.mixing.nu, cal.mixing.lambda);
    CheckResult r;
    r.name = "consensus_accumulation_bound";
    r.threshold = 1.0 + 1e-9;
    r.measured = diag.consensus_bound_slack;
    r.passed = r.measured <= r.threshold;
    r.detail = "sum theta / (4 nu^2 lambda^2 sum delta)";
    report.checks.push_back(r);
  }

  // noiseless single-agent descent of the penalty objective
  {
    ProblemSpec problem = make_quartic_problem(1, 0.0, cfg.problem_seed);
    problem.gamma = std::max(cfg.gamma, 1e-300);
    MixingMatrix mix;
    mix.W = Eigen::MatrixXd::Ones(1, 1);
    mix.lambda = 0.0;
    mix.nu = 1.0;
    AlgorithmConfig acfg;
    acfg.variant = Variant::SMPL;
    acfg.eta = 1.0 / (8.0 * problem.L * (1.0 + problem.gamma));
    acfg.beta = 1.0;
    acfg.gamma = problem.gamma;
    acfg.b0 = 1;
    acfg.T = 200;
    acfg.seed = cfg.seeds.front();
    RunState state = init_run(problem, mix, acfg, Eigen::VectorXd::Constant(1, cfg.x0));
    std::vector<double> values;
    std::vector<MetricsHook> hooks{[&](const IterationView& view) {
      values.push_back(penalty_objective(view.x.row(0).transpose(), problem));
    }};
    run(state, hooks);
    int ascents = 0;
    double worst_gap = 0.0;
    for (size_t t = 0; t + 1 < values.size(); ++t)
      if (values[t + 1] > values[t] + 1e-9) {
        ++ascents;
        worst_gap = std::max(worst_gap, values[t + 1] - values[t]);
      }
    CheckResult r;
    r.name = "noiseless_single_agent_descent";
    r.threshold = 0.0;
    r.measured = static_cast<double>(ascents);
    r.passed = ascents == 0;
    r.detail = "ascent steps of F along 200 iterations";
    report.checks.push_back(r);
  }

  // noiseless momentum exactness
  {
    ProblemSpec problem = make_quartic_problem(cfg.n, 0.0, cfg.problem_seed);
    problem.gamma = std::max(cfg.gamma, 1e-300);
    AlgorithmConfig acfg;
    acfg.variant = Variant::SMPL;
    acfg.eta = cfg.variant == Variant::SMPL ? cfg.eta : 1.0 / std::max(cfg.mu, 1e-12);
    acfg.beta = std::min(cfg.beta, 1.0);
    acfg.gamma = problem.gamma;
    acfg.b0 = 1;
    acfg.T = std::min(cfg.T, 200);
    acfg.seed = cfg.seeds.front();
    RunState state =
        init_run(problem, cal.mixing, acfg, Eigen::VectorXd::Constant(1, cfg.x0));
    double worst = 0.0;
    std::vector<MetricsHook> hooks{[&](const IterationView& view) {
      for (int i = 0; i < cfg.n; ++i)
        worst = std::max(worst, (view.z.row(i).transpose() -
                                 problem.mean_grad(i, view.x.row(i).transpose()))
                                    .norm());
    }};
    run(state, hooks);
    CheckResult r;
    r.name = "noiseless_momentum_exactness";
    r.threshold = 1e-10;
    r.measured = worst;
    r.passed = worst <= r.threshold;
    r.detail = "max_t max_i ||z_i - grad f_i(x_i)||";
    report.checks.push_back(r);
  }

  return report;
}

// ---------------------------------------------------------------------------
// cmd_trajectory
// ---------------------------------------------------------------------------

TrajectoryOutput cmd_trajectory(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  cfg.problem = "trajectory";
  TrajectoryOutput out;
  const TrajectoryParams params = trajectory_params_for(cfg);
  const ProblemSpec problem = build_problem(cfg);
  const Eigen::VectorXd x0 = straight_line_trajectory(params);
  out.initial_objective = problem.mean_objective(x0);

  out.runs = cmd_run(cfg);
  const RunResult& first = out.runs.results.front();
  out.final_objective = problem.mean_objective(first.final_mean_iterate);
  out.final_violation = first.final_violation;

  std::ostringstream os;
  os << "usv,tau,x,y\n";
  for (int j = 0; j < params.N; ++j)
    for (int tau = 0; tau <= params.T_wp; ++tau) {
      const Eigen::Vector2d p = waypoint(params, first.final_mean_iterate, j, tau);
      os << j << ',' << tau << ',' << format_double(p.x()) << ',' << format_double(p.y())
         << '\n';
    }
  out.waypoints_path = fs::path(cfg.out_dir) / "waypoints.csv";
  atomic_write(out.waypoints_path, os.str());
  return out;
}

}  // namespace dsmpl
