#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace cnext {

enum class TopologyKind { Ring, CirculantExpander, Custom };

inline std::string_view to_string(TopologyKind k) {
  switch (k) {
    case TopologyKind::Ring: return "ring";
    case TopologyKind::CirculantExpander: return "expander";
    case TopologyKind::Custom: return "custom";
  }
  return "?";
}

using Adjacency = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Undirected graph with self-loops on every node.
struct Topology {
  TopologyKind kind = TopologyKind::Custom;
  std::size_t n = 0;
  std::size_t degree = 0;  // only meaningful for CirculantExpander
  Adjacency adjacency;

  /// Neighbor count excluding the self-loop.
  std::size_t neighbor_count(std::size_t i) const {
    std::size_t d = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && adjacency(i, j)) ++d;
    return d;
  }
};

inline bool is_connected(const Adjacency& adj) {
  const auto n = static_cast<std::size_t>(adj.rows());
  if (n == 0) return false;
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> stack{0};
  seen[0] = 1;
  std::size_t visited = 1;
  while (!stack.empty()) {
    const auto i = stack.back();
    stack.pop_back();
    for (std::size_t j = 0; j < n; ++j) {
      if (adj(i, j) && !seen[j]) {
        seen[j] = 1;
        ++visited;
        stack.push_back(j);
      }
    }
  }
  return visited == n;
}

/// Validates a user-supplied adjacency: square, symmetric, self-looped.
/// Connectivity is checked when weights are built.
inline Topology make_custom_topology(Adjacency adjacency) {
  if (adjacency.rows() == 0 || adjacency.rows() != adjacency.cols())
    throw InvalidArgument("adjacency must be a non-empty square matrix");
  const auto n = static_cast<std::size_t>(adjacency.rows());
  for (std::size_t i = 0; i < n; ++i) {
    adjacency(i, i) = true;
    for (std::size_t j = 0; j < i; ++j)
      if (adjacency(i, j) != adjacency(j, i))
        throw InvalidArgument("adjacency is not symmetric at (" + std::to_string(i) + "," +
                              std::to_string(j) + ")");
  }
  return Topology{TopologyKind::Custom, n, 0, std::move(adjacency)};
}

inline Topology build_ring(std::size_t n) {
  if (n == 0) throw InvalidArgument("ring needs at least one node");
  Adjacency adj = Adjacency::Constant(n, n, false);
  for (std::size_t i = 0; i < n; ++i) {
    adj(i, i) = true;
    adj(i, (i + 1) % n) = adj((i + 1) % n, i) = true;
  }
  return Topology{TopologyKind::Ring, n, n >= 3 ? 2 : n - 1, std::move(adj)};
}

/// Node i linked to i +- 1, ..., i +- degree/2 (mod n).
inline Topology build_circulant_expander(std::size_t n, std::size_t degree) {
  if (degree == 0 || degree % 2 != 0)
    throw InvalidArgument("expander degree must be even and positive");
  if (degree >= n) throw InvalidArgument("expander degree must be below the node count");
  Adjacency adj = Adjacency::Constant(n, n, false);
  for (std::size_t i = 0; i < n; ++i) {
    adj(i, i) = true;
    for (std::size_t s = 1; s <= degree / 2; ++s) {
      const auto j = (i + s) % n;
      adj(i, j) = adj(j, i) = true;
    }
  }
  return Topology{TopologyKind::CirculantExpander, n, degree, std::move(adj)};
}

/// Spectral norm of a symmetric matrix.
inline double symmetric_spectral_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Doubly stochastic mixing network and its spectral constants.
struct Network {
  Topology topology;
  Eigen::MatrixXd W;
  double rho = 0.0;   ///< ||W - 11'/n||
  double beta = 0.0;  ///< ||I - W||

  std::size_t size() const { return topology.n; }

  /// Consensus contraction with damping gamma: (1 - gamma) + gamma * rho.
  double rho_tilde(double gamma) const { return (1.0 - gamma) + gamma * rho; }
};

/// Fills rho and beta from W by dense symmetric eigen-decomposition.
inline void compute_spectral_constants(Network& net) {
  const auto n = static_cast<Eigen::Index>(net.size());
  const Eigen::MatrixXd avg = Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  net.rho = symmetric_spectral_norm(net.W - avg);
  net.beta = symmetric_spectral_norm(Eigen::MatrixXd::Identity(n, n) - net.W);
}

/// Metropolis-Hastings weights: w_ij = 1 / (1 + max(d_i, d_j)) on edges,
/// diagonal takes the remaining mass.
inline Network metropolis_hastings_weights(const Topology& t) {
  if (t.n == 0 || !is_connected(t.adjacency))
    throw InvalidArgument("metropolis-hastings weights need a connected topology");
  const auto n = t.n;
  std::vector<std::size_t> deg(n);
  for (std::size_t i = 0; i < n; ++i) deg[i] = t.neighbor_count(i);

  Network net;
  net.topology = t;
  net.W = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double off = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || !t.adjacency(i, j)) continue;
      const double w = 1.0 / (1.0 + static_cast<double>(std::max(deg[i], deg[j])));
      net.W(i, j) = w;
      off += w;
    }
    net.W(i, i) = 1.0 - off;
  }
  compute_spectral_constants(net);
  return net;
}

}  // namespace cnext
