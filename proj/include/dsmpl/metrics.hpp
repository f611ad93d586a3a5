#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dsmpl/problem.hpp"
#include "dsmpl/qp.hpp"

namespace dsmpl {

/// Per-iteration diagnostics; one row per iteration t = 1..T. Pi is optional
/// (skipped when too expensive for the problem at hand); all stored entries
/// are finite and the squared quantities nonnegative by construction.
struct MetricsTrace {
  std::vector<double> theta;      // consensus error ||x - Cx||^2
  std::vector<double> delta;      // iterate progress ||xcheck - x||^2
  std::vector<double> phi;        // global gradient variance
  std::vector<double> upsilon;    // network gradient variance
  std::vector<double> eps_track;  // tracking error ||y - Cy||^2
  std::vector<double> Pi;         // augmented KKT residual (NaN if skipped)
  std::vector<double> F_bar;      // penalty objective at the mean iterate
  std::vector<double> violation;  // summed constraint violation at the mean iterate
  std::vector<double> wall_ms;

  int size() const { return static_cast<int>(theta.size()); }
  bool has_pi(int t) const { return std::isfinite(Pi[t]); }
};

struct TheoryDiagnostics {
  double lambda = 0.0;
  double nu = 1.0;
  double L_estimate = 0.0;
  double sigma_bar_sq_estimate = 0.0;
  /// realized (sum theta) / (4 nu^2 lambda^2 alpha^2 sum delta); <= 1 on
  /// every run of the plain prox-linear variant
  double consensus_bound_slack = 0.0;
  double consensus_lhs = 0.0;
  double consensus_rhs = 0.0;
  int descent_violations = 0;
};

/// ||x - Cx||^2 = sum_i ||x_i - xbar||^2 for row-stacked agent iterates.
double consensus_error(const Eigen::MatrixXd& all_x);

/// ||xcheck - x||^2 over the stacked iterates.
double iterate_progress(const Eigen::MatrixXd& all_xcheck, const Eigen::MatrixXd& all_x);

/// phi = ||zbar - (1/n) sum_i grad f_i(x_i)||^2 and
/// upsilon = sum_i ||z_i - grad f_i(x_i)||^2. Throws MeanGradUnavailable.
std::pair<double, double> gradient_variances(const Eigen::MatrixXd& all_z,
                                             const Eigen::MatrixXd& all_x,
                                             const ProblemSpec& problem);

/// ||y - Cy||^2.
double tracking_error(const Eigen::MatrixXd& all_y);

/// Augmented KKT residual of one agent at x: best-case stationarity over
/// nonnegative multipliers plus complementarity magnitude (one joint convex
/// QP: the complementarity term is linear for lam >= 0), plus the positive
/// part of the worst constraint, plus L^2 * consensus_sq (squared distance
/// to the across-agent mean).
double kkt_residual(const Eigen::VectorXd& x, const ProblemSpec& problem,
                    const Eigen::VectorXd& grad, double L, double consensus_sq);

/// Mean of kkt_residual over the row-stacked agent solutions, fed by the
/// problem's available mean gradient.
double kkt_residual_mean(const Eigen::MatrixXd& all_xcheck, const ProblemSpec& problem,
                         double L);

/// F(x) = f(x) + h(x) + gamma * max_k [g_k(x)]_+ with f from the problem's
/// mean objective (exact or declared-budget Monte Carlo).
double penalty_objective(const Eigen::VectorXd& x, const ProblemSpec& problem);

/// sum_j sum_tau max(0, ||x^j(tau+1) - x^j(tau)|| - v_max Delta_t); norm
/// form, matching the reported metric rather than the optimized squared one.
double trajectory_violation(const Eigen::VectorXd& x, const TrajectoryParams& params);

/// max over sampled points of the operator norm of the central-difference
/// Hessian of the mean objective and of each g_k. Full grid for d <= 2,
/// seeded point sample above.
double estimate_smoothness(const ProblemSpec& problem, const Eigen::VectorXd& box_lo,
                           const Eigen::VectorXd& box_hi, int grid_points);

/// Per epsilon, the first t (1-based) with Pi^t <= eps; absent when never
/// reached. Antitone in epsilon.
std::map<double, std::optional<int>> extract_T_epsilon(const MetricsTrace& trace,
                                                       const std::vector<double>& epsilon_list);

/// Realized cumulative consensus bound: sum theta vs 4 nu^2 lambda^2 (alpha^2)
/// sum delta, plus descent-violation count of F_bar.
TheoryDiagnostics check_cumulative_bounds(const MetricsTrace& trace, double nu, double lambda,
                                          double alpha = 1.0);

}  // namespace dsmpl
