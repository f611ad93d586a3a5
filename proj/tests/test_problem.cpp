#include <cmath>

#include "doctest.h"
#include "dsmpl/problem.hpp"

using namespace dsmpl;

namespace {

Eigen::VectorXd scalar(double v) {
  Eigen::VectorXd x(1);
  x[0] = v;
  return x;
}

TrajectoryParams desk_params() {
  TrajectoryParams p;
  p.N = 2;
  p.T_wp = 5;
  p.Delta_t = 30.0;
  p.starts.resize(2, 2);
  p.starts << 0.0, 0.0, 30.0, 0.0;
  p.goals.resize(2, 2);
  p.goals << 90.0, 0.0, 120.0, 0.0;
  p.formation_matrix.resize(1, 4);
  p.formation_matrix << 0.0, 1.0, 0.0, -1.0;  // equal y coordinates
  p.v_max = 1.0;
  p.base_field.centers = {Eigen::Vector2d(45.0, 25.0)};
  p.base_field.strengths = {40.0};
  p.base_field.radii = {15.0};
  p.center_jitter = 3.0;
  p.noise_sigma = 0.1;
  return p;
}

}  // namespace

TEST_CASE("quartic: the two constraints intersect on [-2.1, -2]") {
  ProblemSpec spec = make_quartic_problem(4, 0.0, 1);
  for (double x : {-2.1, -2.05, -2.0}) {
    const Eigen::VectorXd g = spec.constraint_values(scalar(x));
    CHECK(g.maxCoeff() <= 1e-12);
  }
  CHECK(spec.constraint_values(scalar(-2.1))[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(spec.constraint_values(scalar(-2.0))[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(spec.constraint_values(scalar(-1.99)).maxCoeff() > 0.0);
  CHECK(spec.constraint_values(scalar(-2.11)).maxCoeff() > 0.0);
}

TEST_CASE("quartic: zero noise makes every oracle draw exact") {
  ProblemSpec spec = make_quartic_problem(3, 0.0, 5);
  const Eigen::VectorXd x = scalar(0.0);
  const Eigen::VectorXd mean = spec.mean_grad(1, x);
  for (int r = 0; r < 10000; ++r)
    REQUIRE(spec.grad_oracle(1, x, rng::derive(9, r)) == mean);
}

TEST_CASE("quartic: reference roots give f(0) = 24 and a finite-difference match") {
  QuarticParams params;
  params.scales = Eigen::VectorXd::Ones(1);
  params.roots.resize(1, 4);
  params.roots << -4.0, -2.0, 1.0, 3.0;
  params.noise_std = 0.0;
  ProblemSpec spec = make_quartic_problem(params);
  CHECK(spec.mean_objective(scalar(0.0)) == doctest::Approx(24.0));
  const double h = 1e-6;
  const double fd =
      (spec.mean_objective(scalar(h)) - spec.mean_objective(scalar(-h))) / (2.0 * h);
  CHECK(spec.mean_grad(0, scalar(0.0))[0] == doctest::Approx(fd).epsilon(1e-7));
}

TEST_CASE("quartic: oracle noise is unbiased (statistical)") {
  const double noise_std = 0.5;
  ProblemSpec spec = make_quartic_problem(2, noise_std, 11);
  const Eigen::VectorXd x = scalar(-1.0);
  const double mean_exact = spec.mean_grad(0, x)[0];
  const int samples = 10000;
  double acc = 0.0;
  for (int r = 0; r < samples; ++r) acc += spec.grad_oracle(0, x, rng::derive(123, r))[0];
  acc /= samples;
  CHECK(std::abs(acc - mean_exact) <= 3.0 * noise_std / 100.0);
}

TEST_CASE("quartic: oracle is a pure function of its key") {
  ProblemSpec spec = make_quartic_problem(2, 1.0, 3);
  const Eigen::VectorXd x = scalar(0.7);
  CHECK(spec.grad_oracle(0, x, 42) == spec.grad_oracle(0, x, 42));
  CHECK(spec.grad_oracle(0, x, 42) != spec.grad_oracle(0, x, 43));
}

TEST_CASE("quartic constraint gradients match central finite differences") {
  ProblemSpec spec = make_quartic_problem(2, 0.0, 3);
  rng::Stream s(8);
  for (int trial = 0; trial < 20; ++trial) {
    const double x = s.uniform(-6.0, 4.0);
    Eigen::VectorXd v, vp, vm;
    Eigen::MatrixXd g, gdummy;
    spec.constraint_eval(scalar(x), v, g);
    const double h = 1e-6;
    spec.constraint_eval(scalar(x + h), vp, gdummy);
    spec.constraint_eval(scalar(x - h), vm, gdummy);
    for (int k = 0; k < 2; ++k) {
      const double fd = (vp[k] - vm[k]) / (2.0 * h);
      CHECK(g(k, 0) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("vortex velocity vanishes at the center") {
  VortexField field;
  field.centers = {Eigen::Vector2d(1.0, 2.0)};
  field.strengths = {60.0};
  field.radii = {20.0};
  CHECK(vortex_velocity(field, Eigen::Vector2d(1.0, 2.0)).norm() == 0.0);
}

TEST_CASE("vortex velocity matches the direct formula at r = (20, 0)") {
  VortexField field;
  field.centers = {Eigen::Vector2d::Zero()};
  field.strengths = {60.0};
  field.radii = {20.0};
  const Eigen::Vector2d v = vortex_velocity(field, Eigen::Vector2d(20.0, 0.0));
  const double expected = 60.0 * 20.0 / (2.0 * M_PI * 400.0) * (1.0 - std::exp(-1.0));
  CHECK(v.x() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(v.y() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.30185).epsilon(1e-4));
}

TEST_CASE("equal vortices mirrored about the query point cancel") {
  VortexField field;
  field.centers = {Eigen::Vector2d(3.0, 1.0), Eigen::Vector2d(-3.0, -1.0)};
  field.strengths = {25.0, 25.0};
  field.radii = {10.0, 10.0};
  CHECK(vortex_velocity(field, Eigen::Vector2d::Zero()).norm() <= 1e-12);
}

TEST_CASE("vortex jacobian agrees with finite differences near and far from the core") {
  VortexField field;
  field.centers = {Eigen::Vector2d(0.0, 0.0)};
  field.strengths = {-30.0};
  field.radii = {10.0};
  for (const Eigen::Vector2d& x :
       {Eigen::Vector2d(12.0, -7.0), Eigen::Vector2d(0.3, 0.1), Eigen::Vector2d(1e-5, 0.0)}) {
    const Eigen::Matrix2d J = vortex_jacobian(field, x);
    const double h = 1e-6;
    for (int c = 0; c < 2; ++c) {
      Eigen::Vector2d xp = x, xm = x;
      xp[c] += h;
      xm[c] -= h;
      const Eigen::Vector2d fd = (vortex_velocity(field, xp) - vortex_velocity(field, xm)) / (2 * h);
      CHECK((J.col(c) - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));
    }
  }
}

TEST_CASE("forecast: no jitter and no noise reproduce the base field") {
  TrajectoryParams p = desk_params();
  p.center_jitter = 0.0;
  p.noise_sigma = 0.0;
  ForecastRealization fc = sample_forecast(p, 1, 99);
  for (double xc : {10.0, 50.0, 90.0}) {
    const Eigen::Vector2d x(xc, 5.0);
    CHECK((fc.velocity(x) - vortex_velocity(p.base_field, x)).norm() == 0.0);
  }
}

TEST_CASE("forecast realizations are deterministic in (agent, key)") {
  TrajectoryParams p = desk_params();
  ForecastRealization a = sample_forecast(p, 2, 123);
  ForecastRealization b = sample_forecast(p, 2, 123);
  CHECK(a.noise_scale == b.noise_scale);
  CHECK(a.shifted.centers[0] == b.shifted.centers[0]);
  ForecastRealization c = sample_forecast(p, 2, 124);
  CHECK(a.noise_scale != c.noise_scale);
  // the agency-level center shift is fixed across samples
  CHECK(a.shifted.centers[0] == c.shifted.centers[0]);
}

TEST_CASE("forecast sample mean converges to the agent's shifted field (statistical)") {
  TrajectoryParams p = desk_params();
  p.noise_sigma = 0.1;
  const Eigen::Vector2d x(40.0, 10.0);
  const VortexField shifted = sample_forecast(p, 0, 0).shifted;  // sample-independent
  const Eigen::Vector2d expected = vortex_velocity(shifted, x);
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  const int samples = 100000;
  for (int r = 0; r < samples; ++r) acc += sample_forecast(p, 0, r).velocity(x);
  acc /= samples;
  for (int c = 0; c < 2; ++c) {
    const double tol = 3.0 * 0.1 * std::abs(expected[c]) / std::sqrt((double)samples) + 1e-12;
    CHECK(std::abs(acc[c] - expected[c]) <= tol);
  }
}

TEST_CASE("trajectory: paper-scale dimension is 160") {
  TrajectoryParams p = desk_params();
  p.N = 4;
  p.T_wp = 20;
  CHECK(p.dim() == 160);
}

TEST_CASE("trajectory: straight line at sub-cap speed keeps every speed constraint slack") {
  TrajectoryParams p = desk_params();
  p.base_field.strengths = {0.0};
  ProblemSpec spec = make_trajectory_problem(p, 2);
  const Eigen::VectorXd x0 = straight_line_trajectory(p);
  const Eigen::VectorXd g = spec.constraint_values(x0);
  // USV 0 moves 18 m per 30 s step against a 30 m cap
  const double expected = 18.0 * 18.0 - 30.0 * 30.0;
  CHECK(g[0] == doctest::Approx(expected));
  CHECK(g.maxCoeff() <= 0.0);
}

TEST_CASE("trajectory gradient matches central finite differences at fixed xi") {
  TrajectoryParams p = desk_params();
  ProblemSpec spec = make_trajectory_problem(p, 3);
  rng::Stream s(21);
  Eigen::VectorXd x = straight_line_trajectory(p);
  for (int i = 0; i < x.size(); ++i) x[i] += 4.0 * s.normal();
  const std::uint64_t key = 77;
  const ForecastRealization fc = sample_forecast(p, 1, key);
  const Eigen::VectorXd grad = spec.grad_oracle(1, x, key);
  Eigen::VectorXd fd(x.size());
  const double h = 1e-5;
  for (int c = 0; c < x.size(); ++c) {
    Eigen::VectorXd xp = x, xm = x;
    xp[c] += h;
    xm[c] -= h;
    fd[c] = (trajectory_objective(p, xp, fc) - trajectory_objective(p, xm, fc)) / (2.0 * h);
  }
  CHECK((grad - fd).norm() <= 1e-5 * std::max(1.0, grad.norm()));
}

TEST_CASE("trajectory constraint gradients match central finite differences") {
  TrajectoryParams p = desk_params();
  ProblemSpec spec = make_trajectory_problem(p, 2);
  rng::Stream s(33);
  Eigen::VectorXd x = straight_line_trajectory(p);
  for (int i = 0; i < x.size(); ++i) x[i] += 5.0 * s.normal();
  Eigen::VectorXd v;
  Eigen::MatrixXd g;
  spec.constraint_eval(x, v, g);
  const double h = 1e-6;
  for (int c = 0; c < x.size(); ++c) {
    Eigen::VectorXd xp = x, xm = x;
    xp[c] += h;
    xm[c] -= h;
    Eigen::VectorXd vp, vm;
    Eigen::MatrixXd gd;
    spec.constraint_eval(xp, vp, gd);
    spec.constraint_eval(xm, vm, gd);
    for (int k = 0; k < spec.m; ++k) {
      const double fd = (vp[k] - vm[k]) / (2.0 * h);
      CHECK(g(k, c) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("trajectory objective is nonnegative for any realization") {
  TrajectoryParams p = desk_params();
  ProblemSpec spec = make_trajectory_problem(p, 2);
  rng::Stream s(5);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd x = straight_line_trajectory(p);
    for (int i = 0; i < x.size(); ++i) x[i] += 10.0 * s.normal();
    CHECK(trajectory_objective(p, x, sample_forecast(p, trial % 2, trial)) >= 0.0);
  }
}

TEST_CASE("constraints are convex along random segments on both benchmarks") {
  ProblemSpec quartic = make_quartic_problem(2, 0.0, 3);
  TrajectoryParams p = desk_params();
  ProblemSpec traj = make_trajectory_problem(p, 2);
  rng::Stream s(17);
  for (const ProblemSpec* spec : {&quartic, &traj}) {
    Eigen::VectorXd x(spec->d), y(spec->d);
    for (int i = 0; i < spec->d; ++i) {
      x[i] = 20.0 * s.normal();
      y[i] = 20.0 * s.normal();
    }
    const Eigen::VectorXd gx = spec->constraint_values(x);
    const Eigen::VectorXd gy = spec->constraint_values(y);
    for (double t : {0.25, 0.5, 0.75}) {
      const Eigen::VectorXd gm = spec->constraint_values(t * x + (1.0 - t) * y);
      for (int kk = 0; kk < spec->m; ++kk)
        CHECK(gm[kk] <= t * gx[kk] + (1.0 - t) * gy[kk] + 1e-9);
    }
  }
}

TEST_CASE("trajectory equalities: straight line satisfies terminal and formation rows") {
  TrajectoryParams p = desk_params();
  ProblemSpec spec = make_trajectory_problem(p, 2);
  REQUIRE(spec.eq_constraints.has_value());
  const auto& eq = *spec.eq_constraints;
  CHECK(eq.A.rows() == 2 * p.N + (p.T_wp - 1) * p.formation_matrix.rows());
  const Eigen::VectorXd x0 = straight_line_trajectory(p);
  CHECK((eq.A * x0 - eq.b).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("formation-violating endpoints are rejected") {
  TrajectoryParams p = desk_params();
  p.goals(1, 1) = 4.0;  // breaks the equal-y formation at the goal
  CHECK_THROWS_AS(make_trajectory_problem(p, 2), InfeasibleFormation);
}

TEST_CASE("trajectory Monte-Carlo mean gradient declares its budget") {
  TrajectoryParams p = desk_params();
  ProblemSpec spec = make_trajectory_problem(p, 2);
  CHECK(spec.mean_grad_budget == 256);
  CHECK(spec.has_mean_grad());
  CHECK(spec.sigma_bar_sq > 0.0);
  CHECK(spec.L >= 4.0);
}
