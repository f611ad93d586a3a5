#include "dsmpl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace dsmpl {

double consensus_error(const Eigen::MatrixXd& all_x) {
  const Eigen::RowVectorXd mean = all_x.colwise().mean();
  return (all_x.rowwise() - mean).squaredNorm();
}

double iterate_progress(const Eigen::MatrixXd& all_xcheck, const Eigen::MatrixXd& all_x) {
  return (all_xcheck - all_x).squaredNorm();
}

std::pair<double, double> gradient_variances(const Eigen::MatrixXd& all_z,
                                             const Eigen::MatrixXd& all_x,
                                             const ProblemSpec& problem) {
  if (!problem.has_mean_grad())
    throw MeanGradUnavailable("gradient_variances: problem exposes no mean gradient");
  const int n = static_cast<int>(all_z.rows());
  const int d = static_cast<int>(all_z.cols());
  Eigen::VectorXd z_bar = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd g_bar = Eigen::VectorXd::Zero(d);
  double upsilon = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd g = problem.mean_grad(i, all_x.row(i).transpose());
    z_bar += all_z.row(i).transpose();
    g_bar += g;
    upsilon += (all_z.row(i).transpose() - g).squaredNorm();
  }
  const double phi = ((z_bar - g_bar) / n).squaredNorm();
  return {phi, upsilon};
}

double tracking_error(const Eigen::MatrixXd& all_y) { return consensus_error(all_y); }

double kkt_residual(const Eigen::VectorXd& x, const ProblemSpec& problem,
                    const Eigen::VectorXd& grad, double L, double consensus_sq) {
  Eigen::VectorXd g_vals;
  Eigen::MatrixXd g_grads;
  problem.constraint_eval(x, g_vals, g_grads);
  const int m = problem.m;

  // min_{lam >= 0} ||grad + G' lam||^2 + sum_k lam_k |g_k|; the absolute
  // values have fixed sign under lam >= 0, so this is one convex QP
  QPInstance inst;
  const Eigen::MatrixXd Gt = g_grads.transpose();  // columns are constraint gradients
  inst.P = 2.0 * Gt.transpose() * Gt;
  inst.P = 0.5 * (inst.P + inst.P.transpose().eval());
  inst.q = 2.0 * Gt.transpose() * grad + g_vals.cwiseAbs();
  inst.A_in.resize(0, m);
  inst.u.resize(0);
  inst.A_eq.resize(0, m);
  inst.b.resize(0);
  inst.lb = Eigen::VectorXd::Zero(m);
  const QPSolution sol = solve_qp(inst);
  const Eigen::VectorXd lam = sol.z.cwiseMax(0.0);

  const double stationarity = (grad + Gt * lam).squaredNorm();
  const double complementarity = lam.dot(g_vals.cwiseAbs());
  const double viol = std::max(0.0, g_vals.maxCoeff());
  return stationarity + complementarity + viol + L * L * consensus_sq;
}

double kkt_residual_mean(const Eigen::MatrixXd& all_xcheck, const ProblemSpec& problem,
                         double L) {
  if (!problem.has_mean_grad())
    throw MeanGradUnavailable("kkt_residual_mean: problem exposes no mean gradient");
  const int n = static_cast<int>(all_xcheck.rows());
  const Eigen::RowVectorXd mean = all_xcheck.colwise().mean();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = all_xcheck.row(i).transpose();
    const Eigen::VectorXd grad = problem.mean_grad(i, xi);
    const double cons = (all_xcheck.row(i) - mean).squaredNorm();
    acc += kkt_residual(xi, problem, grad, L, cons);
  }
  return acc / n;
}

double penalty_objective(const Eigen::VectorXd& x, const ProblemSpec& problem) {
  const Eigen::VectorXd g = problem.constraint_values(x);
  const double penalty = problem.gamma * std::max(0.0, g.maxCoeff());
  return problem.mean_objective(x) + problem.regularizer.eval(x) + penalty;
}

double trajectory_violation(const Eigen::VectorXd& x, const TrajectoryParams& params) {
  double acc = 0.0;
  const double cap = params.v_max * params.Delta_t;
  for (int j = 0; j < params.N; ++j)
    for (int tau = 0; tau < params.T_wp; ++tau) {
      const double step =
          (waypoint(params, x, j, tau + 1) - waypoint(params, x, j, tau)).norm();
      acc += std::max(0.0, step - cap);
    }
  return acc;
}

namespace {

// operator norm of the central-difference Hessian of a gradient map at x
double hessian_norm_fd(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                       const Eigen::VectorXd& x, double h) {
  const int d = static_cast<int>(x.size());
  Eigen::MatrixXd H(d, d);
  for (int j = 0; j < d; ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    H.col(j) = (grad(xp) - grad(xm)) / (2.0 * h);
  }
  H = 0.5 * (H + H.transpose().eval());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

double estimate_smoothness(const ProblemSpec& problem, const Eigen::VectorXd& box_lo,
                           const Eigen::VectorXd& box_hi, int grid_points) {
  const int d = problem.d;
  const double h = 1e-5 * std::max(1.0, (box_hi - box_lo).cwiseAbs().maxCoeff());

  std::vector<Eigen::VectorXd> points;
  if (d <= 2) {
    const int per_axis = d == 1 ? grid_points : std::max(2, static_cast<int>(std::sqrt(
                                                                 (double)grid_points)));
    if (d == 1) {
      for (int k = 0; k < per_axis; ++k) {
        Eigen::VectorXd x(1);
        x[0] = box_lo[0] + (box_hi[0] - box_lo[0]) * k / std::max(1, per_axis - 1);
        points.push_back(x);
      }
    } else {
      for (int a = 0; a < per_axis; ++a)
        for (int b = 0; b < per_axis; ++b) {
          Eigen::VectorXd x(2);
          x[0] = box_lo[0] + (box_hi[0] - box_lo[0]) * a / (per_axis - 1);
          x[1] = box_lo[1] + (box_hi[1] - box_lo[1]) * b / (per_axis - 1);
          points.push_back(x);
        }
    }
  } else {
    rng::Stream stream(0x736d6f6fULL);
    for (int k = 0; k < grid_points; ++k) {
      Eigen::VectorXd x(d);
      for (int j = 0; j < d; ++j) x[j] = stream.uniform(box_lo[j], box_hi[j]);
      points.push_back(x);
    }
  }

  auto mean_grad_all = [&problem](const Eigen::VectorXd& x) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(problem.d);
    for (int i = 0; i < problem.n; ++i) g += problem.mean_grad(i, x);
    return (g / problem.n).eval();
  };
  auto constraint_grad = [&problem](int k, const Eigen::VectorXd& x) {
    Eigen::VectorXd v;
    Eigen::MatrixXd g;
    problem.constraint_eval(x, v, g);
    return g.row(k).transpose().eval();
  };

  double L = 0.0;
  for (const auto& x : points) {
    if (problem.has_mean_grad()) L = std::max(L, hessian_norm_fd(mean_grad_all, x, h));
    for (int k = 0; k < problem.m; ++k) {
      auto gk = [&constraint_grad, k](const Eigen::VectorXd& pt) {
        return constraint_grad(k, pt);
      };
      L = std::max(L, hessian_norm_fd(gk, x, h));
    }
  }
  return L;
}

std::map<double, std::optional<int>> extract_T_epsilon(const MetricsTrace& trace,
                                                       const std::vector<double>& epsilon_list) {
  std::map<double, std::optional<int>> out;
  for (double eps : epsilon_list) {
    std::optional<int> hit;
    for (int t = 0; t < trace.size(); ++t) {
      if (trace.has_pi(t) && trace.Pi[t] <= eps) {
        hit = t + 1;
        break;
      }
    }
    out[eps] = hit;
  }
  return out;
}

TheoryDiagnostics check_cumulative_bounds(const MetricsTrace& trace, double nu, double lambda,
                                          double alpha) {
  TheoryDiagnostics diag;
  diag.lambda = lambda;
  diag.nu = nu;
  const int T = trace.size();
  double lhs = 0.0, rhs_sum = 0.0;
  for (int t = 0; t < T; ++t) {
    lhs += trace.theta[t];
    if (t < T - 1) rhs_sum += trace.delta[t];
  }
  diag.consensus_lhs = lhs;
  diag.consensus_rhs = 4.0 * nu * nu * lambda * lambda * alpha * alpha * rhs_sum;
  diag.consensus_bound_slack = diag.consensus_rhs > 0.0 ? lhs / diag.consensus_rhs
                               : (lhs == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
  for (int t = 0; t + 1 < T; ++t)
    if (trace.F_bar[t + 1] > trace.F_bar[t] + 1e-9) ++diag.descent_violations;
  return diag;
}

}  // namespace dsmpl
