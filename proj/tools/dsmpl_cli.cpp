// Command-line front end: run, sweep, calibrate-graph, check, trajectory.
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "dsmpl/harness.hpp"

namespace {

using dsmpl::ExperimentConfig;

struct CommonArgs {
  std::string config_path;
  std::string preset;
  std::string out;
  std::vector<std::string> overrides;
  std::vector<std::uint64_t> seeds;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file (or a manifest.json)");
  cmd->add_option("--preset", args.preset, "named preset");
  cmd->add_option("--out", args.out, "output directory");
  cmd->add_option("--override", args.overrides, "key=value config override (repeatable)");
  cmd->add_option("--seed", args.seeds, "seed (repeatable, replaces the config list)");
  cmd->add_option("--threads", args.threads, "worker threads");
}

ExperimentConfig resolve_config(const CommonArgs& args) {
  nlohmann::json j;
  if (!args.config_path.empty()) {
    std::ifstream is(args.config_path);
    if (!is) throw dsmpl::ConfigError("cannot open config file " + args.config_path);
    try {
      j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
      throw dsmpl::ConfigError("config parse error in " + args.config_path + ": " + e.what());
    }
    if (j.contains("config")) j = j["config"];  // accept a run manifest directly
  }
  if (!args.preset.empty()) j["preset"] = args.preset;
  for (const std::string& kv : args.overrides) dsmpl::apply_override(j, kv);
  ExperimentConfig cfg = dsmpl::config_from_json(j);
  if (!args.out.empty()) cfg.out_dir = args.out;
  if (!args.seeds.empty()) cfg.seeds = args.seeds;
  if (args.threads > 0) cfg.n_threads = args.threads;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"decentralized stochastic constrained optimization simulator"};
  app.require_subcommand(1);

  CommonArgs run_args, sweep_args, check_args, traj_args;
  std::string sweep_axis = "gamma";

  CLI::App* run_cmd = app.add_subcommand("run", "execute one experiment (per-seed traces)");
  add_common(run_cmd, run_args);

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "cross product over an axis and seeds");
  add_common(sweep_cmd, sweep_args);
  sweep_cmd->add_option("--axis", sweep_axis, "gamma | n | lambda | epsilon")->required();

  int cal_n = 50;
  double cal_lambda = 0.4, cal_tol = 0.02;
  std::uint64_t cal_seed = 1;
  std::string cal_out = "out";
  CLI::App* cal_cmd =
      app.add_subcommand("calibrate-graph", "bisect a geometric graph onto a spectral norm");
  cal_cmd->add_option("--n", cal_n, "agent count");
  cal_cmd->add_option("--target-lambda", cal_lambda, "target spectral norm");
  cal_cmd->add_option("--tol", cal_tol, "tolerance");
  cal_cmd->add_option("--seed", cal_seed, "seed");
  cal_cmd->add_option("--out", cal_out, "output directory");

  CLI::App* check_cmd = app.add_subcommand("check", "run the invariant suite");
  add_common(check_cmd, check_args);

  CLI::App* traj_cmd = app.add_subcommand("trajectory", "ocean-current trajectory experiment");
  add_common(traj_cmd, traj_args);
  bool paper_scale = false;
  traj_cmd->add_flag("--paper-scale", paper_scale, "4 USVs, 20 waypoints");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(run_args);
      dsmpl::ExperimentOutput out = dsmpl::cmd_run(cfg);
      std::cout << "manifest: " << out.manifest_path.string() << "\n";
      for (const auto& p : out.trace_paths) std::cout << "trace: " << p.string() << "\n";
    } else if (sweep_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(sweep_args);
      dsmpl::SweepOutput out = dsmpl::cmd_sweep(cfg, dsmpl::sweep_axis_from_string(sweep_axis));
      std::cout << "summary: " << out.summary_path.string() << "\n";
      std::cout << "manifest: " << out.manifest_path.string() << "\n";
      if (out.failed_cells > 0)
        std::cout << "failed cells: " << out.failed_cells << " (see manifest)\n";
    } else if (cal_cmd->parsed()) {
      const auto path = dsmpl::cmd_calibrate_graph(cal_n, cal_lambda, cal_tol, cal_seed, cal_out);
      std::cout << "graph: " << path.string() << "\n";
    } else if (check_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(check_args);
      dsmpl::CheckReport report = dsmpl::cmd_check(cfg);
      for (const auto& c : report.checks)
        std::printf("[%s] %-36s measured %.3e (threshold %.3e) %s\n",
                    c.passed ? "PASS" : "FAIL", c.name.c_str(), c.measured, c.threshold,
                    c.detail.c_str());
      return report.all_passed() ? 0 : 1;
    } else if (traj_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(traj_args);
      if (traj_args.preset.empty()) {
        ExperimentConfig base = dsmpl::preset_config(paper_scale ? "trajectory-paper"
                                                                 : "trajectory");
        base.out_dir = cfg.out_dir;
        base.seeds = cfg.seeds;
        base.n_threads = cfg.n_threads;
        nlohmann::json j = dsmpl::config_to_json(base);
        for (const std::string& kv : traj_args.overrides) dsmpl::apply_override(j, kv);
        cfg = dsmpl::config_from_json(j);
      }
      if (paper_scale) cfg.trajectory_paper_scale = true;
      dsmpl::TrajectoryOutput out = dsmpl::cmd_trajectory(cfg);
      const dsmpl::TrajectoryParams params = dsmpl::trajectory_params_for(cfg);
      std::cout << "decision dimension: " << params.dim() << "\n";
      std::cout << "objective: " << out.initial_objective << " -> " << out.final_objective
                << "\n";
      std::cout << "final violation: " << out.final_violation << "\n";
      std::cout << "waypoints: " << out.waypoints_path.string() << "\n";
      std::cout << "manifest: " << out.runs.manifest_path.string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
