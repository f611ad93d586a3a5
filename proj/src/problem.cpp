#include "dsmpl/problem.hpp"

#include <cmath>

namespace dsmpl {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// f(x) = s * prod_j (x - a_j) and its first two derivatives.
double quartic_value(double s, const Eigen::Vector4d& a, double x) {
  return s * (x - a[0]) * (x - a[1]) * (x - a[2]) * (x - a[3]);
}

double quartic_grad(double s, const Eigen::Vector4d& a, double x) {
  double sum = 0.0;
  for (int j = 0; j < 4; ++j) {
    double prod = 1.0;
    for (int l = 0; l < 4; ++l)
      if (l != j) prod *= x - a[l];
    sum += prod;
  }
  return s * sum;
}

double quartic_hess(double s, const Eigen::Vector4d& a, double x) {
  double sum = 0.0;
  for (int j = 0; j < 4; ++j)
    for (int k = j + 1; k < 4; ++k) {
      double prod = 1.0;
      for (int l = 0; l < 4; ++l)
        if (l != j && l != k) prod *= x - a[l];
      sum += prod;
    }
  return 2.0 * s * sum;
}

}  // namespace

QuarticParams make_quartic_params(int n, double noise_std, std::uint64_t seed) {
  QuarticParams p;
  p.noise_std = noise_std;
  p.scales.resize(n);
  p.roots.resize(n, 4);
  const Eigen::Vector4d base(-3.5, -2.5, 1.5, 2.5);
  for (int i = 0; i < n; ++i) {
    rng::Stream stream(rng::derive(seed, 0x71756172ULL, i));
    p.scales[i] = stream.uniform(0.5, 1.5);
    for (int j = 0; j < 4; ++j) p.roots(i, j) = base[j] + stream.uniform(-0.2, 0.2);
  }
  return p;
}

ProblemSpec make_quartic_problem(const QuarticParams& params) {
  const int n = static_cast<int>(params.scales.size());
  ProblemSpec spec;
  spec.d = 1;
  spec.n = n;
  spec.m = 2;
  spec.gamma = 2000.0;
  spec.sigma_bar_sq = params.noise_std * params.noise_std;

  const double noise_std = params.noise_std;
  spec.mean_grad = [params](int i, const Eigen::VectorXd& x) {
    Eigen::VectorXd g(1);
    g[0] = quartic_grad(params.scales[i], params.roots.row(i), x[0]);
    return g;
  };
  spec.grad_oracle = [params, noise_std](int i, const Eigen::VectorXd& x, std::uint64_t key) {
    Eigen::VectorXd g(1);
    g[0] = quartic_grad(params.scales[i], params.roots.row(i), x[0]);
    if (noise_std > 0.0) {
      rng::Stream stream(key);
      g[0] += noise_std * stream.normal();
    }
    return g;
  };
  spec.constraint_eval = [](const Eigen::VectorXd& x, Eigen::VectorXd& v, Eigen::MatrixXd& g) {
    v.resize(2);
    g.resize(2, 1);
    v[0] = (x[0] + 4.0) * (x[0] + 4.0) - 4.0;
    v[1] = (x[0] + 1.5) * (x[0] + 1.5) - 0.36;
    g(0, 0) = 2.0 * (x[0] + 4.0);
    g(1, 0) = 2.0 * (x[0] + 1.5);
  };
  spec.mean_objective = [params, n](const Eigen::VectorXd& x) {
    double f = 0.0;
    for (int i = 0; i < n; ++i)
      f += quartic_value(params.scales[i], params.roots.row(i), x[0]);
    return f / static_cast<double>(n);
  };

  // smoothness over the operating box [-6, 4]: per-agent |f_i''| plus the
  // constant constraint curvature 2
  double L = 2.0;
  for (int i = 0; i < n; ++i)
    for (int k = 0; k <= 2000; ++k) {
      const double x = -6.0 + 10.0 * k / 2000.0;
      L = std::max(L, std::abs(quartic_hess(params.scales[i], params.roots.row(i), x)));
    }
  spec.L = L;
  return spec;
}

ProblemSpec make_quartic_problem(int n, double noise_std, std::uint64_t seed) {
  return make_quartic_problem(make_quartic_params(n, noise_std, seed));
}

// ---------------------------------------------------------------------------
// Lamb-Oseen vortices
// ---------------------------------------------------------------------------

namespace {

// radial profile A(s) = (1 - exp(-s/delta^2)) / (2 pi s), s = |r|^2, and its
// derivative; series expansion below u = s/delta^2 = 1e-4 avoids cancellation
void vortex_profile(double s, double delta, double& A, double& dA) {
  const double d2 = delta * delta;
  const double u = s / d2;
  if (u < 1e-4) {
    A = (1.0 - 0.5 * u + u * u / 6.0) / (kTwoPi * d2);
    dA = (-0.5 + u / 3.0 - u * u / 8.0) / (kTwoPi * d2 * d2);
    return;
  }
  const double em = std::exp(-u);
  A = (1.0 - em) / (kTwoPi * s);
  dA = (u * em - (1.0 - em)) / (kTwoPi * s * s);
}

}  // namespace

Eigen::Vector2d vortex_velocity(const VortexField& field, const Eigen::Vector2d& x) {
  Eigen::Vector2d v = Eigen::Vector2d::Zero();
  for (int m = 0; m < field.count(); ++m) {
    const Eigen::Vector2d r = x - field.centers[m];
    if (r.norm() < 1e-9) continue;  // analytic limit 0 at the center
    double A, dA;
    vortex_profile(r.squaredNorm(), field.radii[m], A, dA);
    const double w = field.strengths[m];
    v += A * Eigen::Vector2d(-w * r.y(), w * r.x());
  }
  return v;
}

Eigen::Matrix2d vortex_jacobian(const VortexField& field, const Eigen::Vector2d& x) {
  Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
  for (int m = 0; m < field.count(); ++m) {
    const Eigen::Vector2d r = x - field.centers[m];
    const double w = field.strengths[m];
    Eigen::Matrix2d Omega;
    Omega << 0.0, -w, w, 0.0;
    if (r.norm() < 1e-9) {
      J += Omega / (kTwoPi * field.radii[m] * field.radii[m]);
      continue;
    }
    double A, dA;
    vortex_profile(r.squaredNorm(), field.radii[m], A, dA);
    J += A * Omega + 2.0 * dA * (Omega * r) * r.transpose();
  }
  return J;
}

ForecastRealization sample_forecast(const TrajectoryParams& params, int agent,
                                    std::uint64_t sample_key) {
  ForecastRealization out;
  out.shifted = params.base_field;
  rng::Stream center_stream(rng::derive(0x466f7265ULL, agent));
  for (auto& q : out.shifted.centers) {
    q.x() += center_stream.uniform(-params.center_jitter, params.center_jitter);
    q.y() += center_stream.uniform(-params.center_jitter, params.center_jitter);
  }
  out.noise_scale = Eigen::Vector2d::Ones();
  if (params.noise_sigma > 0.0) {
    rng::Stream noise_stream(rng::derive(0x70736b65ULL, agent, sample_key));
    out.noise_scale.x() += params.noise_sigma * noise_stream.normal();
    out.noise_scale.y() += params.noise_sigma * noise_stream.normal();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory problem assembly
// ---------------------------------------------------------------------------

namespace {

constexpr int kMeanBudget = 256;  // Monte-Carlo budget behind mean quantities

// waypoint tau in {1..T} of USV j lives at coordinates base..base+1
inline int wp_index(const TrajectoryParams& p, int j, int tau) {
  return 2 * (j * p.T_wp + (tau - 1));
}

Eigen::VectorXd trajectory_gradient(const TrajectoryParams& p, const Eigen::VectorXd& x,
                                    const ForecastRealization& fc) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p.dim());
  const double invN = 1.0 / static_cast<double>(p.N);
  for (int j = 0; j < p.N; ++j) {
    for (int tau = 0; tau < p.T_wp; ++tau) {
      const Eigen::Vector2d cur = waypoint(p, x, j, tau);
      const Eigen::Vector2d nxt = waypoint(p, x, j, tau + 1);
      const Eigen::Vector2d vel = fc.velocity(cur);
      const Eigen::Vector2d r = nxt - cur - vel * p.Delta_t;
      grad.segment<2>(wp_index(p, j, tau + 1)) += 2.0 * invN * r;
      if (tau >= 1) {
        const Eigen::Matrix2d J = fc.jacobian(cur);
        grad.segment<2>(wp_index(p, j, tau)) +=
            2.0 * invN * ((-Eigen::Matrix2d::Identity() - p.Delta_t * J).transpose() * r);
      }
    }
  }
  return grad;
}

}  // namespace

Eigen::Vector2d waypoint(const TrajectoryParams& params, const Eigen::VectorXd& x, int j,
                         int tau) {
  if (tau == 0) return params.starts.row(j).transpose();
  return x.segment<2>(wp_index(params, j, tau));
}

double trajectory_objective(const TrajectoryParams& params, const Eigen::VectorXd& x,
                            const ForecastRealization& forecast) {
  double f = 0.0;
  for (int j = 0; j < params.N; ++j)
    for (int tau = 0; tau < params.T_wp; ++tau) {
      const Eigen::Vector2d cur = waypoint(params, x, j, tau);
      const Eigen::Vector2d nxt = waypoint(params, x, j, tau + 1);
      f += (nxt - cur - forecast.velocity(cur) * params.Delta_t).squaredNorm();
    }
  return f / static_cast<double>(params.N);
}

Eigen::VectorXd straight_line_trajectory(const TrajectoryParams& params) {
  Eigen::VectorXd x(params.dim());
  for (int j = 0; j < params.N; ++j) {
    const Eigen::Vector2d s = params.starts.row(j).transpose();
    const Eigen::Vector2d g = params.goals.row(j).transpose();
    for (int tau = 1; tau <= params.T_wp; ++tau) {
      const double frac = static_cast<double>(tau) / params.T_wp;
      x.segment<2>(wp_index(params, j, tau)) = s + frac * (g - s);
    }
  }
  return x;
}

ProblemSpec make_trajectory_problem(const TrajectoryParams& params, int n) {
  if (params.N < 1 || params.T_wp < 1 || params.Delta_t <= 0.0)
    throw std::invalid_argument("trajectory: N, T_wp, Delta_t must be positive");
  if (params.starts.rows() != params.N || params.goals.rows() != params.N)
    throw std::invalid_argument("trajectory: starts/goals inconsistent with N");
  const Eigen::MatrixXd& F = params.formation_matrix;
  if (F.rows() > 0 && F.cols() != 2 * params.N)
    throw std::invalid_argument("trajectory: formation rows must span 2N coordinates");
  if (F.rows() > 0) {
    Eigen::VectorXd s_stack(2 * params.N), g_stack(2 * params.N);
    for (int j = 0; j < params.N; ++j) {
      s_stack.segment<2>(2 * j) = params.starts.row(j).transpose();
      g_stack.segment<2>(2 * j) = params.goals.row(j).transpose();
    }
    if ((F * s_stack).cwiseAbs().maxCoeff() > 1e-9 ||
        (F * g_stack).cwiseAbs().maxCoeff() > 1e-9)
      throw InfeasibleFormation("trajectory: starts/goals violate the formation rows");
  }

  ProblemSpec spec;
  spec.d = params.dim();
  spec.n = n;
  spec.m = params.N * params.T_wp;
  spec.gamma = 100.0;

  const TrajectoryParams p = params;
  spec.grad_oracle = [p](int i, const Eigen::VectorXd& x, std::uint64_t key) {
    return trajectory_gradient(p, x, sample_forecast(p, i, key));
  };
  spec.mean_grad_budget = kMeanBudget;
  spec.mean_grad = [p](int i, const Eigen::VectorXd& x) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(p.dim());
    for (int r = 0; r < kMeanBudget; ++r)
      g += trajectory_gradient(p, x, sample_forecast(p, i, rng::derive(0x6d632d67ULL, i, r)));
    return (g / kMeanBudget).eval();
  };
  spec.mean_objective_budget = kMeanBudget;
  const int n_agents = n;
  spec.mean_objective = [p, n_agents](const Eigen::VectorXd& x) {
    double f = 0.0;
    for (int i = 0; i < n_agents; ++i)
      for (int r = 0; r < kMeanBudget; ++r)
        f += trajectory_objective(p, x, sample_forecast(p, i, rng::derive(0x6d632d6fULL, i, r)));
    return f / (static_cast<double>(n_agents) * kMeanBudget);
  };

  const double cap_sq = (p.v_max * p.Delta_t) * (p.v_max * p.Delta_t);
  spec.constraint_eval = [p, cap_sq](const Eigen::VectorXd& x, Eigen::VectorXd& v,
                                     Eigen::MatrixXd& g) {
    v.resize(p.N * p.T_wp);
    g.setZero(p.N * p.T_wp, p.dim());
    for (int j = 0; j < p.N; ++j)
      for (int tau = 0; tau < p.T_wp; ++tau) {
        const int k = j * p.T_wp + tau;
        const Eigen::Vector2d cur = waypoint(p, x, j, tau);
        const Eigen::Vector2d nxt = waypoint(p, x, j, tau + 1);
        const Eigen::Vector2d diff = nxt - cur;
        v[k] = diff.squaredNorm() - cap_sq;
        g.row(k).segment<2>(wp_index(p, j, tau + 1)) = 2.0 * diff;
        if (tau >= 1) g.row(k).segment<2>(wp_index(p, j, tau)) = -2.0 * diff;
      }
  };

  // terminal waypoints pinned to the goals, formation rows at interior times
  const int p_term = 2 * params.N;
  const int p_form = static_cast<int>(F.rows()) * std::max(0, params.T_wp - 1);
  LinearEqualities eq;
  eq.A.setZero(p_term + p_form, spec.d);
  eq.b.setZero(p_term + p_form);
  for (int j = 0; j < params.N; ++j) {
    eq.A(2 * j, wp_index(params, j, params.T_wp)) = 1.0;
    eq.A(2 * j + 1, wp_index(params, j, params.T_wp) + 1) = 1.0;
    eq.b.segment<2>(2 * j) = params.goals.row(j).transpose();
  }
  int row = p_term;
  for (int tau = 1; tau <= params.T_wp - 1; ++tau)
    for (int fr = 0; fr < F.rows(); ++fr, ++row)
      for (int j = 0; j < params.N; ++j) {
        eq.A(row, wp_index(params, j, tau)) = F(fr, 2 * j);
        eq.A(row, wp_index(params, j, tau) + 1) = F(fr, 2 * j + 1);
      }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(eq.A.transpose());
  if (qr.rank() != eq.A.rows())
    throw std::invalid_argument("trajectory: equality constraints are rank deficient");
  spec.eq_constraints = std::move(eq);

  // noise-variance estimate at the straight-line initialization
  const Eigen::VectorXd x0 = straight_line_trajectory(params);
  constexpr int kVarBudget = 64;
  double sig_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd samples(spec.d, kVarBudget);
    for (int r = 0; r < kVarBudget; ++r)
      samples.col(r) = spec.grad_oracle(i, x0, rng::derive(0x73696768ULL, i, r));
    const Eigen::VectorXd mean = samples.rowwise().mean();
    sig_sq += (samples.colwise() - mean).squaredNorm() / kVarBudget;
  }
  spec.sigma_bar_sq = sig_sq / n;

  // crude smoothness estimate: power iteration on the finite-difference
  // Hessian of the Monte-Carlo mean gradient at the initialization, floored
  // by the exact constraint curvature 4
  {
    const double eps = 1e-4 * std::max(1.0, x0.cwiseAbs().maxCoeff());
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(spec.d, 1.0, 2.0).normalized();
    double est = 0.0;
    for (int it = 0; it < 12; ++it) {
      const Eigen::VectorXd hv =
          (spec.mean_grad(0, x0 + eps * v) - spec.mean_grad(0, x0 - eps * v)) / (2.0 * eps);
      est = hv.norm();
      if (est < 1e-12) break;
      v = hv / est;
    }
    spec.L = std::max(4.0, est);
  }
  return spec;
}

}  // namespace dsmpl
