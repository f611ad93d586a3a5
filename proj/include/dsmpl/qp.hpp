#pragma once

#include <iosfwd>
#include <optional>

#include <Eigen/Dense>

#include "dsmpl/common.hpp"

namespace dsmpl {

/// Linearly constrained convex quadratic program
///   min 1/2 z'Pz + q'z   s.t.  A_in z <= u,  A_eq z = b,  z >= lb (optional).
/// lb has size 0 (no bounds) or dim() with -inf entries where a variable is
/// free; it carries epigraph variables such as the penalty slack.
struct QPInstance {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd A_in;
  Eigen::VectorXd u;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b;
  Eigen::VectorXd lb;

  int dim() const { return static_cast<int>(q.size()); }
  int n_in() const { return static_cast<int>(A_in.rows()); }
  int n_eq() const { return static_cast<int>(A_eq.rows()); }

  /// Symmetry within 1e-12, consistent dimensions, P PSD (Cholesky of
  /// P + 1e-10 I succeeds). Throws std::invalid_argument.
  void validate() const;
};

enum class QPStatus { Solved, MaxIters, Infeasible };

struct QPSolution {
  Eigen::VectorXd z;
  /// Multipliers for [A_in; A_eq] rows: inequality duals first (>= 0 up to
  /// eps_dual), then free equality duals.
  Eigen::VectorXd duals;
  /// Multipliers of the lower bounds (>= 0 convention for z_j >= lb_j),
  /// zero where no bound; sized dim() whenever lb is present.
  Eigen::VectorXd lb_duals;
  QPStatus status = QPStatus::MaxIters;
  double primal_res = 0.0;
  double dual_res = 0.0;
  int iterations = 0;
};

struct SolverSettings {
  double eps_primal = 1e-8;
  double eps_dual = 1e-8;
  int max_iters = 20000;
  double rho = 0.1;  // splitting step, adaptively rescaled
  const QPSolution* warm_start = nullptr;
};

/// Operator-splitting solve: alternating a regularized equality-constrained
/// quadratic solve with projection onto the stacked interval set, dual ascent
/// on the splitting variable, plus an active-set polish pass once residuals
/// are small. MaxIters returns the best iterate seen; Infeasible is detected
/// through a divergence certificate on the dual increments.
QPSolution solve_qp(const QPInstance& inst, const SolverSettings& settings = {});

/// argmin_{lam >= 0} || v + M lam ||^2 (columns of M are constraint
/// gradients, v the objective gradient). Errors propagate from solve_qp.
Eigen::VectorXd solve_nnls(const Eigen::MatrixXd& M, const Eigen::VectorXd& v);

/// Sparse triplet text dump for external cross-checking.
void dump_triplets(const QPInstance& inst, std::ostream& os);

}  // namespace dsmpl
