#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dsmpl/common.hpp"

namespace dsmpl {

/// Undirected communication graph. Edges are stored as (i, j) with i < j;
/// positions are kept for geometric graphs so calibration can be replayed.
struct Graph {
  int n = 0;
  std::vector<std::pair<int, int>> edges;
  std::optional<std::vector<Eigen::Vector2d>> positions;

  bool has_edge(int i, int j) const;
  std::vector<int> degrees() const;
  bool connected() const;  // BFS reachability from node 0
};

/// Symmetric doubly-stochastic weights supported on a graph, together with
/// lambda = ||W - (1/n)11^T|| and the inverse mixing gap nu = 1/(1-lambda^2).
struct MixingMatrix {
  Eigen::MatrixXd W;
  double lambda = 0.0;
  double nu = 1.0;

  int n() const { return static_cast<int>(W.rows()); }
};

/// Nodes i.i.d. uniform in the unit square from the seeded stream; edge (i,j)
/// present iff the Euclidean distance is strictly below radius. Disconnected
/// output is legal; callers check.
Graph generate_random_geometric(int n, double radius, std::uint64_t seed);

/// Metropolis-Hastings weights: W_ij = 1/(1 + max(deg_i, deg_j)) on edges,
/// diagonal absorbs the remainder. Throws DisconnectedGraph.
MixingMatrix metropolis_weights(const Graph& g);

/// lambda and nu of a symmetric doubly-stochastic W. Dense eigendecomposition
/// for n <= 64, power iteration (1e-10 relative-change stop) above. Throws
/// NotDoublyStochastic and DegenerateMixing (lambda >= 1 - 1e-9).
std::pair<double, double> spectral_gap(const Eigen::MatrixXd& W);

/// Power-iteration spectral norm of W - J, exposed for cross-checks.
double spectral_norm_power(const Eigen::MatrixXd& W);

struct CalibratedGraph {
  Graph graph;
  MixingMatrix mixing;
  double radius = 0.0;
  int resamples = 0;
};

/// Bisect on radius until |lambda - target| <= tol, resampling positions with
/// a derived sub-seed when the bracket collapses (lambda is a step function of
/// radius for fixed positions). Deterministic given seed. Throws
/// CalibrationFailed after max_rejects resamples.
CalibratedGraph calibrate_radius(int n, double target_lambda, double tol,
                                 std::uint64_t seed, int max_rejects = 50);

std::string graph_to_json(const Graph& g, const MixingMatrix& mix);
std::uint64_t graph_hash(const Graph& g);

}  // namespace dsmpl
