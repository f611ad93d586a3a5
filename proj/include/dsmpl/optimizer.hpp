#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include <Eigen/Dense>

#include "dsmpl/graph.hpp"
#include "dsmpl/metrics.hpp"
#include "dsmpl/problem.hpp"
#include "dsmpl/qp.hpp"

namespace dsmpl {

enum class Variant { SMPL, SCAMPL };

/// Quadratic surrogate: linearization plus (mu/2)||u - x||^2, or a supplied
/// PSD curvature matrix K in place of mu I.
struct SurrogateSpec {
  double mu = 1.0;
  std::optional<Eigen::MatrixXd> curvature;  // K, d x d PSD
};

struct AlgorithmConfig {
  Variant variant = Variant::SMPL;
  double eta = 0.0;    // step size (SMPL)
  double alpha = 1.0;  // relaxation in (0, 1] (SCAMPL)
  double mu = 0.0;     // surrogate strong convexity (SCAMPL)
  std::optional<Eigen::MatrixXd> curvature;  // optional K_i (shared across agents)
  double beta = 1.0;   // momentum in (0, 1]
  double gamma = 0.0;  // penalty weight
  int b0 = 1;          // initialization batch
  int T = 0;           // iterations
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError

  /// kappa_s = L_s / mu of the quadratic surrogate; 1 for the plain
  /// prox-linear surrogate, lambda_max(K) / lambda_min(K) when a curvature
  /// matrix is supplied.
  double surrogate_condition() const;
};

struct AgentState {
  int index = 0;            // this agent's id, feeds its oracle
  Eigen::VectorXd x;        // iterate x_i^t
  Eigen::VectorXd z;        // momentum estimate z_i^t
  Eigen::VectorXd y;        // tracker y_i^t
  Eigen::VectorXd x_check;  // subproblem solution xcheck_i^t
  /// (1 - beta)(z_i^{t-1} - grad f_i(x_i^{t-1}, xi_i^t)), the carried part of
  /// the surrogate's first-order term; zero before the first momentum step.
  Eigen::VectorXd momentum_correction;
  std::uint64_t prev_sample_key = 0;  // the xi_i^t reused in the correction
  std::optional<QPSolution> qp_warm;
};

struct RunStatus {
  bool aborted_non_finite = false;
  /// a subproblem solve failed beyond the acceptance margin (solver error
  /// propagated)
  bool aborted_solver_error = false;
  int aborted_at = 0;  // iteration of the abort (1-based), 0 when clean
  /// MaxIters subproblems whose best iterate was still within 100x the
  /// tolerances and was accepted
  int qp_near_solves = 0;

  bool aborted() const { return aborted_non_finite || aborted_solver_error; }
};

struct RunState {
  std::vector<AgentState> agents;
  int t = 0;
  const MixingMatrix* mixing = nullptr;
  const ProblemSpec* problem = nullptr;
  AlgorithmConfig cfg;
  MetricsTrace trace;
  RunStatus status;

  int n() const { return static_cast<int>(agents.size()); }
  Eigen::MatrixXd stack_x() const;
  Eigen::MatrixXd stack_y() const;
  Eigen::MatrixXd stack_z() const;
  Eigen::MatrixXd stack_xcheck() const;
};

/// Every agent starts at the identical x0; z_i = y_i = b0-sample average of
/// stochastic gradients at x0 with per-agent keys derived from (seed, i, r).
/// Throws BadInit when x0 violates the problem equalities beyond 1e-9.
RunState init_run(const ProblemSpec& problem, const MixingMatrix& mixing,
                  const AlgorithmConfig& cfg, const Eigen::VectorXd& x0);

/// Prox-linear subproblem: decision (x, upsilon [, l1 epigraph]); objective
/// <y_i, x> + 1/(2 eta) ||x - x_i||^2 + gamma upsilon; linearized constraints
/// g_k(x_i) + <grad g_k(x_i), x - x_i> <= upsilon; upsilon >= 0; problem
/// equalities appended.
QPInstance assemble_smpl_subproblem(const AgentState& agent, const ProblemSpec& problem,
                                    double eta, double gamma);

/// Surrogate subproblem: the linear part is grad f_i(x_i, xi) for the given
/// sample key plus the stored momentum correction plus (y_i - z_i); curvature
/// mu I or the supplied K. Constraints as in the prox-linear assembly.
QPInstance assemble_scampl_subproblem(const AgentState& agent, const ProblemSpec& problem,
                                      std::uint64_t sample_key, double mu, double gamma,
                                      const SurrogateSpec& surrogate);

/// z^{t+1} = grad_new + (1 - beta)(z - grad_old); both gradients must be
/// evaluated with the SAME sample key.
Eigen::VectorXd momentum_update(const Eigen::VectorXd& z, const Eigen::VectorXd& grad_new,
                                const Eigen::VectorXd& grad_old_same_sample, double beta);

/// y_i^{t+1} = sum_j W_ij (y_j + z_j^new - z_j^old); rows are agents.
Eigen::MatrixXd tracking_update(const Eigen::MatrixXd& all_y, const Eigen::MatrixXd& z_new,
                                const Eigen::MatrixXd& z_old, const MixingMatrix& W);

/// SMPL: W xcheck; SCAMPL: W (x + alpha (xcheck - x)).
Eigen::MatrixXd consensus_x(const Eigen::MatrixXd& all_xcheck, const Eigen::MatrixXd& all_x,
                            const MixingMatrix& W, Variant variant, double alpha);

struct Schedule {
  double eta_or_alpha = 0.0;
  double beta = 0.0;
  int b0 = 1;
  bool beta_clamped = false;  // degenerate: the momentum schedule hit 1
};

/// Theory-driven defaults. SMPL: eta = min{(n^2 / (nu^2 sigma^2 T))^{1/3},
/// cap} with cap = (1/8L) min{1/(1+gamma), sqrt(2)/(13 sqrt(3) nu^2),
/// sqrt(n)/(3 nu)}; beta = clamp(576 nu^2 L^2 eta^2 / n); b0 = ceil((nT)^{1/3}).
/// SCAMPL: alpha = min{mu (n^2/(nu^2 sigma^2 T))^{1/3}, cap} with cap =
/// min{1/2, sqrt(2)/(13 sqrt(3) lambda nu^2), sqrt(n)/(3 nu)} mu/(8L) and
/// lambda recovered from nu; beta = clamp(576 nu^2 L^2 alpha^2 / (n mu^2)).
Schedule default_schedule(Variant variant, int n, double nu, double L, double sigma_bar_sq,
                          int T, double gamma, double mu);

/// Read-only snapshot handed to per-iteration hooks: the pre-consensus state
/// of iteration t together with the freshly solved subproblems.
struct IterationView {
  int t = 0;  // 1-based
  const Eigen::MatrixXd& x;
  const Eigen::MatrixXd& x_check;
  const Eigen::MatrixXd& y;
  const Eigen::MatrixXd& z;
  double wall_ms = 0.0;  // algorithmic time spent on this iteration
};

using MetricsHook = std::function<void(const IterationView&)>;

struct RunOptions {
  int n_threads = 1;  // per-agent subproblems; output is thread-count invariant
  SolverSettings qp;
};

/// Executes T iterations: per-agent subproblem solves (warm-started),
/// consensus, same-sample momentum, tracking. Hooks fire once per iteration
/// before consensus. Aborts recording NonFinite when an iterate leaves the
/// finite range.
MetricsTrace run(RunState& state, const std::vector<MetricsHook>& hooks = {},
                 const RunOptions& options = {});

}  // namespace dsmpl
