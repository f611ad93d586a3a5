#include "dsmpl/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <vector>

namespace dsmpl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSigma = 1e-6;       // primal regularization
constexpr double kRelax = 1.6;        // over-relaxation
constexpr double kRhoEqScale = 1e3;   // stiffer step on equality rows
constexpr int kCheckEvery = 25;
constexpr int kRhoAdaptEvery = 50;
constexpr double kInfeasTol = 1e-10;

// Stacked interval form: rows of A with bounds [lo, hi] collect the
// inequality rows (hi = u), equality rows (lo = hi = b), and variable lower
// bounds (identity rows, hi = +inf).
struct Stacked {
  Eigen::MatrixXd A;
  Eigen::VectorXd lo, hi;
  Eigen::VectorXd rho;  // per-row splitting step
  int k = 0, p = 0, nb = 0;
  std::vector<int> bound_vars;  // variable index per bound row
};

Stacked stack_rows(const QPInstance& inst, double rho_base) {
  const int d = inst.dim();
  const int k = inst.n_in();
  const int p = inst.n_eq();
  std::vector<int> bound_vars;
  if (inst.lb.size() > 0) {
    for (int j = 0; j < d; ++j)
      if (inst.lb[j] > -kInf) bound_vars.push_back(j);
  }
  const int nb = static_cast<int>(bound_vars.size());
  Stacked s;
  s.k = k;
  s.p = p;
  s.nb = nb;
  s.bound_vars = bound_vars;
  s.A.setZero(k + p + nb, d);
  s.lo.resize(k + p + nb);
  s.hi.resize(k + p + nb);
  s.rho.resize(k + p + nb);
  if (k > 0) {
    s.A.topRows(k) = inst.A_in;
    s.lo.head(k).setConstant(-kInf);
    s.hi.head(k) = inst.u;
    s.rho.head(k).setConstant(rho_base);
  }
  if (p > 0) {
    s.A.middleRows(k, p) = inst.A_eq;
    s.lo.segment(k, p) = inst.b;
    s.hi.segment(k, p) = inst.b;
    s.rho.segment(k, p).setConstant(rho_base * kRhoEqScale);
  }
  for (int r = 0; r < nb; ++r) {
    s.A(k + p + r, bound_vars[r]) = 1.0;
    s.lo[k + p + r] = inst.lb[bound_vars[r]];
    s.hi[k + p + r] = kInf;
    s.rho[k + p + r] = rho_base;
  }
  return s;
}

Eigen::VectorXd clamp_rows(const Eigen::VectorXd& v, const Stacked& s) {
  return v.cwiseMax(s.lo).cwiseMin(s.hi);
}

// Ruiz equilibration of the stacked problem: diagonal D (variables), E
// (rows), cost scale c. Iteration runs on the scaled data; residuals, polish
// and reporting stay in the original space.
struct Scaling {
  Eigen::VectorXd D, E;
  double c = 1.0;
};

Scaling ruiz_equilibrate(Eigen::MatrixXd& P, Eigen::VectorXd& q, Stacked& s, int iters = 10) {
  const int n = static_cast<int>(P.rows());
  const int m = static_cast<int>(s.A.rows());
  Scaling sc;
  sc.D = Eigen::VectorXd::Ones(n);
  sc.E = Eigen::VectorXd::Ones(m);
  auto clip = [](double v) { return std::clamp(v, 1e-4, 1e4); };
  for (int it = 0; it < iters; ++it) {
    Eigen::VectorXd dcol(n), erow(m);
    for (int j = 0; j < n; ++j) {
      double norm = P.col(j).cwiseAbs().maxCoeff();
      if (m > 0) norm = std::max(norm, s.A.col(j).cwiseAbs().maxCoeff());
      dcol[j] = clip(1.0 / std::sqrt(std::max(norm, 1e-8)));
    }
    for (int i = 0; i < m; ++i)
      erow[i] = clip(1.0 / std::sqrt(std::max(s.A.row(i).cwiseAbs().maxCoeff(), 1e-8)));
    P = dcol.asDiagonal() * P * dcol.asDiagonal();
    q = dcol.cwiseProduct(q);
    if (m > 0) {
      s.A = erow.asDiagonal() * s.A * dcol.asDiagonal();
      s.lo = erow.cwiseProduct(s.lo);  // +-inf entries stay infinite
      s.hi = erow.cwiseProduct(s.hi);
    }
    sc.D = sc.D.cwiseProduct(dcol);
    sc.E = sc.E.cwiseProduct(erow);
    // cost normalization
    double cost = q.cwiseAbs().maxCoeff();
    if (n > 0) cost = std::max(cost, P.cwiseAbs().colwise().maxCoeff().mean());
    const double ck = clip(1.0 / std::max(cost, 1e-8));
    P *= ck;
    q *= ck;
    sc.c *= ck;
  }
  return sc;
}

struct Residuals {
  double primal, dual;
};

Residuals residuals_at(const QPInstance& inst, const Stacked& s,
                       const Eigen::VectorXd& z, const Eigen::VectorXd& y) {
  const Eigen::VectorXd az = s.A * z;
  const double rp = s.A.rows() == 0 ? 0.0
                                    : (az - clamp_rows(az, s)).cwiseAbs().maxCoeff();
  const Eigen::VectorXd stat = inst.P * z + inst.q + s.A.transpose() * y;
  double rd = stat.cwiseAbs().maxCoeff();
  // sign violations of inequality/bound duals count against dual feasibility
  for (int i = 0; i < s.k; ++i) rd = std::max(rd, -y[i]);                // need y >= 0
  for (int r = 0; r < s.nb; ++r) rd = std::max(rd, y[s.k + s.p + r]);   // need y <= 0
  return {rp, rd};
}

// Solve the KKT system restricted to an active set, then verify that the
// candidate beats the splitting iterate on both residuals.
bool try_polish(const QPInstance& inst, const Stacked& s, const Eigen::VectorXd& z_in,
                const Eigen::VectorXd& y_in, double rp_in, Eigen::VectorXd& z_out,
                Eigen::VectorXd& y_out) {
  const int d = inst.dim();
  const double act_tol = std::max(1e-7, 2.0 * rp_in);
  std::vector<int> act;
  std::vector<double> act_rhs;
  const Eigen::VectorXd az = s.A * z_in;
  for (int r = 0; r < s.A.rows(); ++r) {
    const bool at_hi = s.hi[r] < kInf && (az[r] >= s.hi[r] - act_tol || y_in[r] > 1e-9);
    const bool at_lo = s.lo[r] > -kInf && (az[r] <= s.lo[r] + act_tol || y_in[r] < -1e-9);
    const bool is_eq = s.lo[r] == s.hi[r];
    if (is_eq || at_hi || at_lo) {
      act.push_back(r);
      act_rhs.push_back(is_eq ? s.lo[r] : (at_hi && s.hi[r] < kInf ? s.hi[r] : s.lo[r]));
    }
  }
  const int na = static_cast<int>(act.size());
  Eigen::MatrixXd K(d + na, d + na);
  K.setZero();
  K.topLeftCorner(d, d) = inst.P + 1e-11 * Eigen::MatrixXd::Identity(d, d);
  for (int a = 0; a < na; ++a) {
    K.block(0, d + a, d, 1) = s.A.row(act[a]).transpose();
    K.block(d + a, 0, 1, d) = s.A.row(act[a]);
    K(d + a, d + a) = -1e-11;
  }
  Eigen::VectorXd rhs(d + na);
  rhs.head(d) = -inst.q;
  for (int a = 0; a < na; ++a) rhs[d + a] = act_rhs[a];
  Eigen::LDLT<Eigen::MatrixXd> ldlt(K);
  if (ldlt.info() != Eigen::Success) return false;
  Eigen::VectorXd sol = ldlt.solve(rhs);
  // one step of iterative refinement against the unregularized system
  Eigen::MatrixXd K0 = K;
  K0.topLeftCorner(d, d) = inst.P;
  for (int a = 0; a < na; ++a) K0(d + a, d + a) = 0.0;
  sol += ldlt.solve(rhs - K0 * sol);
  if (!sol.allFinite()) return false;

  Eigen::VectorXd z = sol.head(d);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(s.A.rows());
  for (int a = 0; a < na; ++a) y[act[a]] = sol[d + a];
  const Residuals before = residuals_at(inst, s, z_in, y_in);
  const Residuals after = residuals_at(inst, s, z, y);
  if (after.primal <= std::max(before.primal, 1e-12) &&
      after.dual <= std::max(before.dual, 1e-12)) {
    z_out = std::move(z);
    y_out = std::move(y);
    return true;
  }
  return false;
}

bool primal_infeasibility_certificate(const Stacked& s, const Eigen::VectorXd& dy) {
  const double dy_norm = dy.cwiseAbs().maxCoeff();
  if (dy_norm < kInfeasTol) return false;
  const Eigen::VectorXd v = dy / dy_norm;
  if ((s.A.transpose() * v).cwiseAbs().maxCoeff() > 1e-6) return false;
  double support = 0.0;
  for (int r = 0; r < v.size(); ++r) {
    const double pos = std::max(v[r], 0.0);
    const double neg = std::min(v[r], 0.0);
    if (pos > 1e-8 && s.hi[r] >= kInf) return false;
    if (neg < -1e-8 && s.lo[r] <= -kInf) return false;
    if (s.hi[r] < kInf) support += s.hi[r] * pos;
    if (s.lo[r] > -kInf) support += s.lo[r] * neg;
  }
  return support < -1e-8;
}

}  // namespace

void QPInstance::validate() const {
  const int d = dim();
  if (P.rows() != d || P.cols() != d)
    throw std::invalid_argument("QPInstance: P/q dimension mismatch");
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("QPInstance: P is not symmetric");
  if (A_in.rows() != u.size() || (A_in.rows() > 0 && A_in.cols() != d))
    throw std::invalid_argument("QPInstance: inequality block mismatch");
  if (A_eq.rows() != b.size() || (A_eq.rows() > 0 && A_eq.cols() != d))
    throw std::invalid_argument("QPInstance: equality block mismatch");
  if (lb.size() != 0 && lb.size() != d)
    throw std::invalid_argument("QPInstance: lb must be empty or sized dim()");
  Eigen::LLT<Eigen::MatrixXd> llt(P + 1e-10 * Eigen::MatrixXd::Identity(d, d));
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("QPInstance: P is not positive semidefinite");
}

QPSolution solve_qp(const QPInstance& inst, const SolverSettings& settings) {
  inst.validate();
  const int d = inst.dim();
  const Stacked orig = stack_rows(inst, settings.rho);
  const int m = static_cast<int>(orig.A.rows());

  QPSolution out;
  out.lb_duals = Eigen::VectorXd::Zero(inst.lb.size() > 0 ? d : 0);

  if (m == 0) {  // unconstrained: stationary point of the regularized quadratic
    Eigen::LLT<Eigen::MatrixXd> llt(inst.P + 1e-12 * Eigen::MatrixXd::Identity(d, d));
    out.z = llt.solve(-inst.q);
    out.duals.resize(0);
    out.status = QPStatus::Solved;
    out.primal_res = 0.0;
    out.dual_res = (inst.P * out.z + inst.q).cwiseAbs().maxCoeff();
    out.iterations = 0;
    return out;
  }

  // iterate on the equilibrated problem; measure and report on the original
  Eigen::MatrixXd Ps = inst.P;
  Eigen::VectorXd qs = inst.q;
  Stacked ss = orig;
  const Scaling sc = ruiz_equilibrate(Ps, qs, ss);
  auto unscale_z = [&](const Eigen::VectorXd& zh) { return sc.D.cwiseProduct(zh).eval(); };
  auto unscale_y = [&](const Eigen::VectorXd& yh) {
    return (sc.E.cwiseProduct(yh) / sc.c).eval();
  };

  Eigen::VectorXd z_s = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd y_s = Eigen::VectorXd::Zero(m);
  if (settings.warm_start != nullptr && settings.warm_start->z.size() == d) {
    const QPSolution& w = *settings.warm_start;
    z_s = w.z.cwiseQuotient(sc.D);
    if (w.duals.size() == ss.k + ss.p) {
      Eigen::VectorXd y0 = Eigen::VectorXd::Zero(m);
      y0.head(ss.k + ss.p) = w.duals;
      if (w.lb_duals.size() == d)
        for (int r = 0; r < ss.nb; ++r) y0[ss.k + ss.p + r] = -w.lb_duals[ss.bound_vars[r]];
      y_s = sc.c * y0.cwiseQuotient(sc.E);
    }
  }
  Eigen::VectorXd zeta = clamp_rows(ss.A * z_s, ss);

  auto factorize = [&](void) -> Eigen::LLT<Eigen::MatrixXd> {
    Eigen::MatrixXd K = Ps + kSigma * Eigen::MatrixXd::Identity(d, d);
    K.noalias() += ss.A.transpose() * ss.rho.asDiagonal() * ss.A;
    return Eigen::LLT<Eigen::MatrixXd>(K);
  };
  Eigen::LLT<Eigen::MatrixXd> llt = factorize();

  double best_score = kInf;
  Eigen::VectorXd best_z, best_y;
  double best_rp = kInf, best_rd = kInf;
  Eigen::VectorXd y_prev_window = y_s;
  int it = 0;
  bool infeasible = false;

  auto finish = [&](QPStatus status, const Eigen::VectorXd& zf, const Eigen::VectorXd& yf,
                    double rp, double rd) {
    out.z = zf;
    out.duals = yf.head(ss.k + ss.p);
    if (out.lb_duals.size() == d) {
      out.lb_duals.setZero();
      for (int r = 0; r < ss.nb; ++r) out.lb_duals[ss.bound_vars[r]] = -yf[ss.k + ss.p + r];
    }
    out.status = status;
    out.primal_res = rp;
    out.dual_res = rd;
    out.iterations = it;
    return out;
  };

  best_z = unscale_z(z_s);
  best_y = unscale_y(y_s);

  for (it = 1; it <= settings.max_iters; ++it) {
    Eigen::VectorXd rhs = kSigma * z_s - qs;
    rhs.noalias() += ss.A.transpose() * (ss.rho.asDiagonal() * zeta - y_s);
    const Eigen::VectorXd z_tilde = llt.solve(rhs);
    const Eigen::VectorXd az_tilde = ss.A * z_tilde;

    z_s = kRelax * z_tilde + (1.0 - kRelax) * z_s;
    const Eigen::VectorXd zeta_relaxed = kRelax * az_tilde + (1.0 - kRelax) * zeta;
    const Eigen::VectorXd pre_proj = zeta_relaxed + ss.rho.cwiseInverse().cwiseProduct(y_s);
    zeta = clamp_rows(pre_proj, ss);
    y_s += ss.rho.cwiseProduct(zeta_relaxed - zeta);

    if (it % kCheckEvery != 0 && it != settings.max_iters) continue;

    const Eigen::VectorXd z = unscale_z(z_s);
    const Eigen::VectorXd y = unscale_y(y_s);
    Residuals res = residuals_at(inst, orig, z, y);
    const double score = std::max(res.primal, res.dual);
    if (score < best_score) {
      best_score = score;
      best_z = z;
      best_y = y;
      best_rp = res.primal;
      best_rd = res.dual;
    }
    if (res.primal <= settings.eps_primal && res.dual <= settings.eps_dual) {
      Eigen::VectorXd zp, yp;
      if (try_polish(inst, orig, z, y, res.primal, zp, yp)) {
        Residuals pres = residuals_at(inst, orig, zp, yp);
        return finish(QPStatus::Solved, zp, yp, pres.primal, pres.dual);
      }
      return finish(QPStatus::Solved, z, y, res.primal, res.dual);
    }
    // near-convergence: a polish pass often lands inside tolerance directly
    if (res.primal <= std::max(1e3 * settings.eps_primal, 1e-4) &&
        res.dual <= std::max(1e3 * settings.eps_dual, 1e-3)) {
      Eigen::VectorXd zp, yp;
      if (try_polish(inst, orig, z, y, res.primal, zp, yp)) {
        Residuals pres = residuals_at(inst, orig, zp, yp);
        if (pres.primal <= settings.eps_primal && pres.dual <= settings.eps_dual)
          return finish(QPStatus::Solved, zp, yp, pres.primal, pres.dual);
      }
    }

    if (it % kRhoAdaptEvery == 0) {
      const Eigen::VectorXd dy = y_s - y_prev_window;
      if (primal_infeasibility_certificate(ss, dy)) {
        infeasible = true;
        break;
      }
      y_prev_window = y_s;

      // scaled-space residual ratio drives the step adaptation
      const Eigen::VectorXd az_s = ss.A * z_s;
      const double rp_s = (az_s - clamp_rows(az_s, ss)).cwiseAbs().maxCoeff();
      const double rd_s =
          (Ps * z_s + qs + ss.A.transpose() * y_s).cwiseAbs().maxCoeff();
      const double num =
          rp_s / std::max({az_s.cwiseAbs().maxCoeff(), zeta.cwiseAbs().maxCoeff(), 1e-10});
      const double den =
          rd_s / std::max({(Ps * z_s).cwiseAbs().maxCoeff(), qs.cwiseAbs().maxCoeff(),
                           (ss.A.transpose() * y_s).cwiseAbs().maxCoeff(), 1e-10});
      const double ratio = std::sqrt(num / std::max(den, 1e-16));
      if (ratio > 5.0 || ratio < 0.2) {
        // capped jump: let rho walk through the good region instead of
        // leaping over it and cycling
        const double scale = std::clamp(ratio, 0.1, 10.0);
        ss.rho = (ss.rho * scale).cwiseMax(1e-6).cwiseMin(1e6);
        llt = factorize();
      }
    }
  }

  if (infeasible)
    return finish(QPStatus::Infeasible, unscale_z(z_s), unscale_y(y_s), best_rp, best_rd);

  // MaxIters: last chance polish from the best iterate, else report it as-is.
  Eigen::VectorXd zp, yp;
  if (try_polish(inst, orig, best_z, best_y, best_rp, zp, yp)) {
    Residuals pres = residuals_at(inst, orig, zp, yp);
    if (pres.primal <= settings.eps_primal && pres.dual <= settings.eps_dual)
      return finish(QPStatus::Solved, zp, yp, pres.primal, pres.dual);
  }
  return finish(QPStatus::MaxIters, best_z, best_y, best_rp, best_rd);
}

Eigen::VectorXd solve_nnls(const Eigen::MatrixXd& M, const Eigen::VectorXd& v) {
  const int m = static_cast<int>(M.cols());
  QPInstance inst;
  inst.P = M.transpose() * M;
  inst.P = 0.5 * (inst.P + inst.P.transpose().eval());
  inst.q = M.transpose() * v;
  inst.A_in.resize(0, m);
  inst.u.resize(0);
  inst.A_eq.resize(0, m);
  inst.b.resize(0);
  inst.lb = Eigen::VectorXd::Zero(m);
  QPSolution sol = solve_qp(inst);
  return sol.z.cwiseMax(0.0);
}

void dump_triplets(const QPInstance& inst, std::ostream& os) {
  auto emit = [&os](const char* name, const Eigen::MatrixXd& mat) {
    for (int r = 0; r < mat.rows(); ++r)
      for (int c = 0; c < mat.cols(); ++c)
        if (mat(r, c) != 0.0) os << name << ' ' << r << ' ' << c << ' ' << mat(r, c) << '\n';
  };
  auto emit_vec = [&os](const char* name, const Eigen::VectorXd& vec) {
    for (int r = 0; r < vec.size(); ++r)
      if (vec[r] != 0.0) os << name << ' ' << r << " 0 " << vec[r] << '\n';
  };
  os << "dims " << inst.dim() << ' ' << inst.n_in() << ' ' << inst.n_eq() << '\n';
  emit("P", inst.P);
  emit_vec("q", inst.q);
  emit("Ain", inst.A_in);
  emit_vec("u", inst.u);
  emit("Aeq", inst.A_eq);
  emit_vec("b", inst.b);
  if (inst.lb.size() > 0) emit_vec("lb", inst.lb);
}

}  // namespace dsmpl
