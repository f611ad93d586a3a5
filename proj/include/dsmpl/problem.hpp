#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dsmpl/common.hpp"

namespace dsmpl {

enum class RegularizerKind { Zero, WeightedL1 };

struct Regularizer {
  RegularizerKind kind = RegularizerKind::Zero;
  Eigen::VectorXd weights;  // per-coordinate, WeightedL1 only

  double eval(const Eigen::VectorXd& x) const {
    if (kind == RegularizerKind::Zero) return 0.0;
    return weights.cwiseProduct(x.cwiseAbs()).sum();
  }
};

struct LinearEqualities {
  Eigen::MatrixXd A;  // p x d, full row rank
  Eigen::VectorXd b;  // p
};

/// Per-agent stochastic first-order oracles plus the deterministic constraint
/// structure of the problem template. Immutable after construction; all
/// oracles are pure functions of their arguments and safe to call
/// concurrently.
struct ProblemSpec {
  int d = 0;
  int n = 0;
  int m = 0;

  /// Stochastic gradient of f_i at x for the realization indexed by key.
  std::function<Eigen::VectorXd(int agent, const Eigen::VectorXd& x, std::uint64_t key)>
      grad_oracle;
  /// Exact E[grad] when available (empty otherwise; see mean_grad_budget).
  std::function<Eigen::VectorXd(int agent, const Eigen::VectorXd& x)> mean_grad;
  /// Monte-Carlo sample budget behind mean_grad; 0 means exact.
  int mean_grad_budget = 0;

  /// Values g_k(x) and gradients (rows of G) of the m smooth convex
  /// inequality constraints.
  std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& values, Eigen::MatrixXd& grads)>
      constraint_eval;

  Regularizer regularizer;
  std::optional<LinearEqualities> eq_constraints;

  double gamma = 0.0;         // penalty weight
  double sigma_bar_sq = 0.0;  // noise-variance estimate
  double L = 1.0;             // smoothness estimate

  /// Mean objective f(x) = (1/n) sum_i f_i(x); exact or Monte-Carlo with the
  /// declared budget.
  std::function<double(const Eigen::VectorXd& x)> mean_objective;
  int mean_objective_budget = 0;

  bool has_mean_grad() const { return static_cast<bool>(mean_grad); }

  Eigen::VectorXd constraint_values(const Eigen::VectorXd& x) const {
    Eigen::VectorXd v;
    Eigen::MatrixXd g;
    constraint_eval(x, v, g);
    return v;
  }
};

// ---------------------------------------------------------------------------
// Synthetic quartic benchmark: f_i(x) = s_i prod_j (x - a_ij) in 1-D with two
// quadratic constraints whose intersection is the interval [-2.1, -2].
// ---------------------------------------------------------------------------

struct QuarticParams {
  Eigen::VectorXd scales;       // s_i in [0.5, 1.5]
  Eigen::MatrixXd roots;        // n x 4, two clusters (near -3 and near 2)
  double noise_std = 0.0;
};

QuarticParams make_quartic_params(int n, double noise_std, std::uint64_t seed);
ProblemSpec make_quartic_problem(int n, double noise_std, std::uint64_t seed);
ProblemSpec make_quartic_problem(const QuarticParams& params);

// ---------------------------------------------------------------------------
// Ocean-current trajectory benchmark.
// ---------------------------------------------------------------------------

/// Superposition of Lamb-Oseen vortices.
struct VortexField {
  std::vector<Eigen::Vector2d> centers;  // q_m  [m]
  std::vector<double> strengths;         // omega_m [m^2/s]
  std::vector<double> radii;             // delta_m [m], > 0

  int count() const { return static_cast<int>(centers.size()); }
};

/// Velocity at x; the removable singularity at each center is patched with
/// its analytic limit 0 inside radius 1e-9.
Eigen::Vector2d vortex_velocity(const VortexField& field, const Eigen::Vector2d& x);

/// Velocity Jacobian at x (needed by the analytic objective gradient).
Eigen::Matrix2d vortex_jacobian(const VortexField& field, const Eigen::Vector2d& x);

struct TrajectoryParams {
  int N = 0;            // USV count
  int T_wp = 0;         // waypoints per USV
  double Delta_t = 0;   // seconds per step (T_f / T_wp)
  Eigen::MatrixXd starts;            // N x 2 [m]
  Eigen::MatrixXd goals;             // N x 2 [m]
  Eigen::MatrixXd formation_matrix;  // rows over the stacked 2N positions at one time index
  double v_max = 1.0;                // speed cap [m/s]
  VortexField base_field;
  double center_jitter = 5.0;  // half-width of the uniform per-agency center shift [m]
  double noise_sigma = 0.1;    // multiplicative velocity noise std

  int dim() const { return 2 * N * T_wp; }
};

/// One realized forecast: the sampled multiplicative factor together with the
/// agency's shifted vortex field. Evaluate anywhere via velocity()/jacobian().
struct ForecastRealization {
  VortexField shifted;          // centers moved by the agency's fixed jitter
  Eigen::Vector2d noise_scale;  // diag(I + e)

  Eigen::Vector2d velocity(const Eigen::Vector2d& x) const {
    return noise_scale.cwiseProduct(vortex_velocity(shifted, x));
  }
  Eigen::Matrix2d jacobian(const Eigen::Vector2d& x) const {
    return noise_scale.asDiagonal() * vortex_jacobian(shifted, x);
  }
};

/// Center shifts depend on the agent only (fixed across samples); the
/// multiplicative factor is drawn from (agent, sample_key).
ForecastRealization sample_forecast(const TrajectoryParams& params, int agent,
                                    std::uint64_t sample_key);

/// Stacks N trajectories of T_wp waypoints (x^j(0) is fixed, not a variable);
/// control-effort objective under realized forecasts, squared-speed
/// inequality constraints, terminal + formation equalities. Throws
/// InfeasibleFormation when starts or goals violate the formation rows.
ProblemSpec make_trajectory_problem(const TrajectoryParams& params, int n);

/// Straight-line interpolation start -> goal, the standard initialization.
Eigen::VectorXd straight_line_trajectory(const TrajectoryParams& params);

/// Waypoint accessor: position of USV j at time index tau in {0, ..., T_wp}
/// (tau = 0 returns the fixed start).
Eigen::Vector2d waypoint(const TrajectoryParams& params, const Eigen::VectorXd& x, int j,
                         int tau);

/// Exact objective of one realized forecast (test and diagnostics helper).
double trajectory_objective(const TrajectoryParams& params, const Eigen::VectorXd& x,
                            const ForecastRealization& forecast);

}  // namespace dsmpl
