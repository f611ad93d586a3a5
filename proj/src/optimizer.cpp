#include "dsmpl/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include <Eigen/Eigenvalues>

namespace dsmpl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

// sample key of the r-th draw at iteration t (r = 1 for the per-iteration
// draw, 1..b0 during initialization)
std::uint64_t sample_key(std::uint64_t seed, int agent, int t, int r) {
  return rng::derive(seed, static_cast<std::uint64_t>(agent), static_cast<std::uint64_t>(t),
                     static_cast<std::uint64_t>(r));
}

// Shared constraint/epigraph layout of both subproblems: decision
// [x (d); upsilon; s (one per positive l1 weight)], quadratic Q on the
// x block, linear coefficient c on the x block.
QPInstance assemble_prox_qp(const Eigen::VectorXd& x_i, const Eigen::VectorXd& c,
                            const Eigen::MatrixXd& Q, const ProblemSpec& problem,
                            double gamma) {
  const int d = problem.d;
  Eigen::VectorXd g_vals;
  Eigen::MatrixXd g_grads;
  problem.constraint_eval(x_i, g_vals, g_grads);
  const int m = problem.m;

  std::vector<int> l1_vars;
  if (problem.regularizer.kind == RegularizerKind::WeightedL1)
    for (int j = 0; j < d; ++j)
      if (problem.regularizer.weights[j] > 0.0) l1_vars.push_back(j);
  const int ns = static_cast<int>(l1_vars.size());
  const int dim = d + 1 + ns;
  const int n_eq = problem.eq_constraints ? static_cast<int>(problem.eq_constraints->A.rows()) : 0;

  QPInstance inst;
  inst.P.setZero(dim, dim);
  inst.P.topLeftCorner(d, d) = Q;
  inst.q.setZero(dim);
  inst.q.head(d) = c - Q * x_i;
  inst.q[d] = gamma;
  for (int s = 0; s < ns; ++s) inst.q[d + 1 + s] = problem.regularizer.weights[l1_vars[s]];

  inst.A_in.setZero(m + 2 * ns, dim);
  inst.u.setZero(m + 2 * ns);
  for (int k = 0; k < m; ++k) {
    inst.A_in.row(k).head(d) = g_grads.row(k);
    inst.A_in(k, d) = -1.0;  // ... <= upsilon
    inst.u[k] = g_grads.row(k).dot(x_i) - g_vals[k];
  }
  for (int s = 0; s < ns; ++s) {
    inst.A_in(m + 2 * s, l1_vars[s]) = 1.0;
    inst.A_in(m + 2 * s, d + 1 + s) = -1.0;
    inst.A_in(m + 2 * s + 1, l1_vars[s]) = -1.0;
    inst.A_in(m + 2 * s + 1, d + 1 + s) = -1.0;
  }

  inst.A_eq.setZero(n_eq, dim);
  inst.b.setZero(n_eq);
  if (n_eq > 0) {
    inst.A_eq.leftCols(d) = problem.eq_constraints->A;
    inst.b = problem.eq_constraints->b;
  }

  inst.lb = Eigen::VectorXd::Constant(dim, -kInf);
  inst.lb[d] = 0.0;  // upsilon >= 0
  return inst;
}

}  // namespace

void AlgorithmConfig::validate() const {
  if (variant == Variant::SMPL) {
    if (!(eta > 0.0)) throw ConfigError("config: eta must be > 0 for the SMPL variant");
  } else {
    if (!(alpha > 0.0 && alpha <= 1.0))
      throw ConfigError("config: alpha must lie in (0, 1] for the SCA variant");
    if (!(mu > 0.0) && !curvature)
      throw ConfigError("config: mu must be > 0 (or a curvature matrix supplied)");
  }
  if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("config: beta must lie in (0, 1]");
  if (!(gamma > 0.0)) throw ConfigError("config: gamma must be > 0");
  if (b0 < 1) throw ConfigError("config: b0 must be >= 1");
  if (T < 1) throw ConfigError("config: T must be >= 1");
}

double AlgorithmConfig::surrogate_condition() const {
  if (!curvature) return 1.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*curvature, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

Eigen::MatrixXd RunState::stack_x() const {
  Eigen::MatrixXd X(n(), agents.empty() ? 0 : agents[0].x.size());
  for (int i = 0; i < n(); ++i) X.row(i) = agents[i].x.transpose();
  return X;
}
Eigen::MatrixXd RunState::stack_y() const {
  Eigen::MatrixXd Y(n(), agents.empty() ? 0 : agents[0].y.size());
  for (int i = 0; i < n(); ++i) Y.row(i) = agents[i].y.transpose();
  return Y;
}
Eigen::MatrixXd RunState::stack_z() const {
  Eigen::MatrixXd Z(n(), agents.empty() ? 0 : agents[0].z.size());
  for (int i = 0; i < n(); ++i) Z.row(i) = agents[i].z.transpose();
  return Z;
}
Eigen::MatrixXd RunState::stack_xcheck() const {
  Eigen::MatrixXd X(n(), agents.empty() ? 0 : agents[0].x.size());
  for (int i = 0; i < n(); ++i) X.row(i) = agents[i].x_check.transpose();
  return X;
}

RunState init_run(const ProblemSpec& problem, const MixingMatrix& mixing,
                  const AlgorithmConfig& cfg, const Eigen::VectorXd& x0) {
  cfg.validate();
  if (x0.size() != problem.d) throw BadInit("init_run: x0 dimension mismatch");
  if (!x0.allFinite()) throw BadInit("init_run: x0 is not finite");
  if (problem.eq_constraints) {
    const double viol =
        (problem.eq_constraints->A * x0 - problem.eq_constraints->b).cwiseAbs().maxCoeff();
    if (viol > 1e-9) throw BadInit("init_run: x0 violates the equality constraints");
  }
  if (mixing.n() != problem.n) throw BadInit("init_run: mixing size != agent count");

  RunState state;
  state.mixing = &mixing;
  state.problem = &problem;
  state.cfg = cfg;
  state.t = 1;
  state.agents.resize(problem.n);
  for (int i = 0; i < problem.n; ++i) {
    AgentState& a = state.agents[i];
    a.index = i;
    a.x = x0;
    a.x_check = x0;
    Eigen::VectorXd z = Eigen::VectorXd::Zero(problem.d);
    for (int r = 1; r <= cfg.b0; ++r)
      z += problem.grad_oracle(i, x0, sample_key(cfg.seed, i, 1, r));
    a.z = z / cfg.b0;
    a.y = a.z;
    a.momentum_correction = Eigen::VectorXd::Zero(problem.d);
    a.prev_sample_key = sample_key(cfg.seed, i, 1, 1);
  }
  return state;
}

QPInstance assemble_smpl_subproblem(const AgentState& agent, const ProblemSpec& problem,
                                    double eta, double gamma) {
  const Eigen::MatrixXd Q =
      (1.0 / eta) * Eigen::MatrixXd::Identity(problem.d, problem.d);
  return assemble_prox_qp(agent.x, agent.y, Q, problem, gamma);
}

QPInstance assemble_scampl_subproblem(const AgentState& agent, const ProblemSpec& problem,
                                      std::uint64_t sample_key_, double mu, double gamma,
                                      const SurrogateSpec& surrogate) {
  const Eigen::VectorXd grad_sample = problem.grad_oracle(agent.index, agent.x, sample_key_);
  const Eigen::VectorXd c = grad_sample + agent.momentum_correction + (agent.y - agent.z);
  const Eigen::MatrixXd Q = surrogate.curvature
                                ? *surrogate.curvature
                                : (mu * Eigen::MatrixXd::Identity(problem.d, problem.d)).eval();
  return assemble_prox_qp(agent.x, c, Q, problem, gamma);
}

Eigen::VectorXd momentum_update(const Eigen::VectorXd& z, const Eigen::VectorXd& grad_new,
                                const Eigen::VectorXd& grad_old_same_sample, double beta) {
  return grad_new + (1.0 - beta) * (z - grad_old_same_sample);
}

Eigen::MatrixXd tracking_update(const Eigen::MatrixXd& all_y, const Eigen::MatrixXd& z_new,
                                const Eigen::MatrixXd& z_old, const MixingMatrix& W) {
  return W.W * (all_y + z_new - z_old);
}

Eigen::MatrixXd consensus_x(const Eigen::MatrixXd& all_xcheck, const Eigen::MatrixXd& all_x,
                            const MixingMatrix& W, Variant variant, double alpha) {
  if (variant == Variant::SMPL) return W.W * all_xcheck;
  return W.W * (all_x + alpha * (all_xcheck - all_x));
}

Schedule default_schedule(Variant variant, int n, double nu, double L, double sigma_bar_sq,
                          int T, double gamma, double mu) {
  Schedule s;
  const double base =
      std::cbrt(static_cast<double>(n) * n / (nu * nu * sigma_bar_sq * static_cast<double>(T)));
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const double c13 = std::sqrt(2.0) / (13.0 * std::sqrt(3.0));
  if (variant == Variant::SMPL) {
    const double cap =
        (1.0 / (8.0 * L)) *
        std::min({1.0 / (1.0 + gamma), c13 / (nu * nu), sqrt_n / (3.0 * nu)});
    s.eta_or_alpha = std::min(base, cap);
    const double beta_raw = 576.0 * nu * nu * L * L * s.eta_or_alpha * s.eta_or_alpha / n;
    s.beta_clamped = beta_raw >= 1.0;
    s.beta = std::min(beta_raw, 1.0);
  } else {
    const double lambda = std::sqrt(std::max(0.0, 1.0 - 1.0 / nu));
    const double lam_term = lambda > 0.0 ? c13 / (lambda * nu * nu)
                                         : std::numeric_limits<double>::infinity();
    const double cap = std::min({0.5, lam_term, sqrt_n / (3.0 * nu)}) * mu / (8.0 * L);
    s.eta_or_alpha = std::min({mu * base, cap, 1.0});
    const double beta_raw =
        576.0 * nu * nu * L * L * s.eta_or_alpha * s.eta_or_alpha / (n * mu * mu);
    s.beta_clamped = beta_raw >= 1.0;
    s.beta = std::min(beta_raw, 1.0);
  }
  s.b0 = static_cast<int>(std::ceil(std::cbrt(static_cast<double>(n) * T)));
  return s;
}

MetricsTrace run(RunState& state, const std::vector<MetricsHook>& hooks,
                 const RunOptions& options) {
  using clock = std::chrono::steady_clock;
  const ProblemSpec& problem = *state.problem;
  const MixingMatrix& mixing = *state.mixing;
  const AlgorithmConfig& cfg = state.cfg;
  const int n = state.n();
  const int d = problem.d;
  const int threads = std::max(1, options.n_threads);

  SurrogateSpec surrogate;
  surrogate.mu = cfg.mu;
  surrogate.curvature = cfg.curvature;

  auto solve_agent = [&](int i) {
    AgentState& a = state.agents[i];
    const QPInstance inst =
        cfg.variant == Variant::SMPL
            ? assemble_smpl_subproblem(a, problem, cfg.eta, cfg.gamma)
            : assemble_scampl_subproblem(a, problem, a.prev_sample_key, cfg.mu, cfg.gamma,
                                         surrogate);
    SolverSettings settings = options.qp;
    settings.warm_start = a.qp_warm ? &*a.qp_warm : nullptr;
    QPSolution sol = solve_qp(inst, settings);
    a.x_check = sol.z.head(d);
    a.qp_warm = std::move(sol);
  };

  auto parallel_agents = [&](auto&& body) {
    if (threads == 1 || n == 1) {
      for (int i = 0; i < n; ++i) body(i);
      return;
    }
    std::vector<std::thread> pool;
    const int used = std::min(threads, n);
    pool.reserve(used);
    for (int w = 0; w < used; ++w)
      pool.emplace_back([&, w]() {
        for (int i = w; i < n; i += used) body(i);
      });
    for (auto& th : pool) th.join();
  };

  for (int t = state.t; t <= cfg.T; ++t) {
    state.t = t;
    const auto t0 = clock::now();
    parallel_agents(solve_agent);
    const double qp_ms =
        std::chrono::duration<double, std::milli>(clock::now() - t0).count();

    // propagate solver errors: accept a near-solve, abort on anything worse
    bool qp_failed = false;
    for (const AgentState& a : state.agents) {
      if (a.qp_warm->status == QPStatus::Solved) continue;
      if (a.qp_warm->status == QPStatus::MaxIters &&
          a.qp_warm->primal_res <= 100.0 * options.qp.eps_primal &&
          a.qp_warm->dual_res <= 100.0 * options.qp.eps_dual) {
        ++state.status.qp_near_solves;
        continue;
      }
      qp_failed = true;
    }
    if (qp_failed) {
      state.status.aborted_solver_error = true;
      state.status.aborted_at = t;
      break;
    }

    // one trace row per iteration; hooks fill the problem-dependent columns
    const Eigen::MatrixXd X = state.stack_x();
    const Eigen::MatrixXd Xc = state.stack_xcheck();
    const Eigen::MatrixXd Y = state.stack_y();
    const Eigen::MatrixXd Z = state.stack_z();
    state.trace.theta.push_back(consensus_error(X));
    state.trace.delta.push_back(iterate_progress(Xc, X));
    state.trace.eps_track.push_back(tracking_error(Y));
    state.trace.phi.push_back(kNaN);
    state.trace.upsilon.push_back(kNaN);
    state.trace.Pi.push_back(kNaN);
    state.trace.F_bar.push_back(kNaN);
    state.trace.violation.push_back(kNaN);
    state.trace.wall_ms.push_back(0.0);
    IterationView view{t, X, Xc, Y, Z, qp_ms};
    for (const auto& hook : hooks) hook(view);

    const auto t1 = clock::now();
    const Eigen::MatrixXd Xnew = consensus_x(Xc, X, mixing, cfg.variant, cfg.alpha);
    if (!Xnew.allFinite()) {
      state.status.aborted_non_finite = true;
      state.status.aborted_at = t;
      state.trace.wall_ms.back() = qp_ms;
      break;
    }

    Eigen::MatrixXd Znew(n, d);
    parallel_agents([&](int i) {
      AgentState& a = state.agents[i];
      const std::uint64_t key = sample_key(cfg.seed, i, t + 1, 1);
      const Eigen::VectorXd grad_new = problem.grad_oracle(i, Xnew.row(i).transpose(), key);
      const Eigen::VectorXd grad_old = problem.grad_oracle(i, a.x, key);
      Znew.row(i) = momentum_update(a.z, grad_new, grad_old, cfg.beta).transpose();
      a.momentum_correction = (1.0 - cfg.beta) * (a.z - grad_old);
      a.prev_sample_key = key;
    });
    const Eigen::MatrixXd Ynew = tracking_update(Y, Znew, Z, mixing);
    if (!Znew.allFinite() || !Ynew.allFinite()) {
      state.status.aborted_non_finite = true;
      state.status.aborted_at = t;
      state.trace.wall_ms.back() = qp_ms;
      break;
    }
    for (int i = 0; i < n; ++i) {
      state.agents[i].x = Xnew.row(i).transpose();
      state.agents[i].z = Znew.row(i).transpose();
      state.agents[i].y = Ynew.row(i).transpose();
    }
    state.trace.wall_ms.back() =
        qp_ms + std::chrono::duration<double, std::milli>(clock::now() - t1).count();
  }
  return state.trace;
}

}  // namespace dsmpl
