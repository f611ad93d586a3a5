#include "dsmpl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "json.hpp"

namespace dsmpl {

bool Graph::has_edge(int i, int j) const {
  if (i > j) std::swap(i, j);
  return std::find(edges.begin(), edges.end(), std::make_pair(i, j)) != edges.end();
}

std::vector<int> Graph::degrees() const {
  std::vector<int> deg(n, 0);
  for (const auto& [i, j] : edges) {
    ++deg[i];
    ++deg[j];
  }
  return deg;
}

bool Graph::connected() const {
  if (n <= 0) return false;
  if (n == 1) return true;
  std::vector<std::vector<int>> adj(n);
  for (const auto& [i, j] : edges) {
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  std::vector<char> seen(n, 0);
  std::deque<int> frontier{0};
  seen[0] = 1;
  int reached = 1;
  while (!frontier.empty()) {
    int v = frontier.front();
    frontier.pop_front();
    for (int w : adj[v]) {
      if (!seen[w]) {
        seen[w] = 1;
        ++reached;
        frontier.push_back(w);
      }
    }
  }
  return reached == n;
}

Graph generate_random_geometric(int n, double radius, std::uint64_t seed) {
  Graph g;
  g.n = n;
  std::vector<Eigen::Vector2d> pos(n);
  rng::Stream stream(rng::derive(seed, /*stream=*/0x67656f6dULL));
  for (int i = 0; i < n; ++i) {
    const double x = stream.next_double();
    const double y = stream.next_double();
    pos[i] = Eigen::Vector2d(x, y);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if ((pos[i] - pos[j]).norm() < radius) g.edges.emplace_back(i, j);
    }
  }
  g.positions = std::move(pos);
  return g;
}

MixingMatrix metropolis_weights(const Graph& g) {
  if (!g.connected()) throw DisconnectedGraph("metropolis_weights: graph is disconnected");
  const int n = g.n;
  const std::vector<int> deg = g.degrees();
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [i, j] : g.edges) {
    const double w = 1.0 / (1.0 + std::max(deg[i], deg[j]));
    W(i, j) = w;
    W(j, i) = w;
  }
  for (int i = 0; i < n; ++i) W(i, i) = 1.0 - W.row(i).sum();
  MixingMatrix mix;
  mix.W = std::move(W);
  std::tie(mix.lambda, mix.nu) = spectral_gap(mix.W);
  return mix;
}

namespace {

void check_doubly_stochastic(const Eigen::MatrixXd& W) {
  const int n = static_cast<int>(W.rows());
  if (n == 0 || W.cols() != n) throw NotDoublyStochastic("spectral_gap: W is not square");
  const double asym = (W - W.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9) throw NotDoublyStochastic("spectral_gap: W is not symmetric");
  for (int i = 0; i < n; ++i) {
    if (std::abs(W.row(i).sum() - 1.0) > 1e-9)
      throw NotDoublyStochastic("spectral_gap: row sums deviate from 1");
    if (std::abs(W.col(i).sum() - 1.0) > 1e-9)
      throw NotDoublyStochastic("spectral_gap: column sums deviate from 1");
  }
}

}  // namespace

double spectral_norm_power(const Eigen::MatrixXd& W) {
  const int n = static_cast<int>(W.rows());
  const Eigen::MatrixXd B =
      W - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  // B is symmetric, so ||B|| = max |eigenvalue|; power iteration on B^2 avoids
  // sign flip stalls. Deterministic start vector.
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(n, 1.0, 2.0).normalized();
  double prev = 0.0;
  for (int it = 0; it < 10000; ++it) {
    Eigen::VectorXd w = B * (B * v);
    const double norm = w.norm();
    if (norm < 1e-300) return 0.0;
    v = w / norm;
    const double est = std::sqrt(norm);
    if (it > 0 && std::abs(est - prev) <= 1e-10 * std::max(1.0, est)) return est;
    prev = est;
  }
  return prev;
}

std::pair<double, double> spectral_gap(const Eigen::MatrixXd& W) {
  check_doubly_stochastic(W);
  const int n = static_cast<int>(W.rows());
  double lambda = 0.0;
  if (n <= 64) {
    const Eigen::MatrixXd B =
        W - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B, Eigen::EigenvaluesOnly);
    lambda = es.eigenvalues().cwiseAbs().maxCoeff();
  } else {
    lambda = spectral_norm_power(W);
  }
  if (lambda >= 1.0 - 1e-9)
    throw DegenerateMixing("spectral_gap: lambda ~ 1, effectively disconnected");
  const double nu = 1.0 / (1.0 - lambda * lambda);
  return {lambda, nu};
}

CalibratedGraph calibrate_radius(int n, double target_lambda, double tol,
                                 std::uint64_t seed, int max_rejects) {
  if (tol <= 0.0) throw CalibrationFailed("calibrate_radius: tol must be > 0");
  const double r_max = std::sqrt(2.0) + 1e-9;
  for (int attempt = 0; attempt <= max_rejects; ++attempt) {
    const std::uint64_t sub_seed = rng::derive(seed, 0x63616c69ULL, attempt);
    double lo = 0.0, hi = r_max;
    // lambda decreases as the radius grows; a disconnected graph counts as
    // lambda = 1 so bisection pushes the radius up.
    for (int it = 0; it < 64; ++it) {
      const double mid = 0.5 * (lo + hi);
      Graph g = generate_random_geometric(n, mid, sub_seed);
      double lambda = 1.0;
      MixingMatrix mix;
      if (g.connected()) {
        mix = metropolis_weights(g);
        lambda = mix.lambda;
        if (std::abs(lambda - target_lambda) <= tol)
          return CalibratedGraph{std::move(g), std::move(mix), mid, attempt};
      }
      if (lambda > target_lambda)
        lo = mid;
      else
        hi = mid;
      if (hi - lo < 1e-13) break;  // bracket collapsed: resample positions
    }
  }
  throw CalibrationFailed("calibrate_radius: target lambda unreachable at this n");
}

std::string graph_to_json(const Graph& g, const MixingMatrix& mix) {
  nlohmann::json j;
  j["n"] = g.n;
  auto& edges = j["edges"] = nlohmann::json::array();
  for (const auto& [a, b] : g.edges) edges.push_back({a, b});
  if (g.positions) {
    auto& pos = j["positions"] = nlohmann::json::array();
    for (const auto& p : *g.positions) pos.push_back({p.x(), p.y()});
  }
  auto& w = j["W"] = nlohmann::json::array();
  for (int r = 0; r < mix.n(); ++r)
    for (int c = 0; c < mix.n(); ++c) w.push_back(mix.W(r, c));
  j["lambda"] = mix.lambda;
  j["nu"] = mix.nu;
  return j.dump(2);
}

std::uint64_t graph_hash(const Graph& g) {
  std::uint64_t h = fnv1a(&g.n, sizeof(g.n));
  for (const auto& [a, b] : g.edges) {
    h = fnv1a(&a, sizeof(a), h);
    h = fnv1a(&b, sizeof(b), h);
  }
  return h;
}

}  // namespace dsmpl
