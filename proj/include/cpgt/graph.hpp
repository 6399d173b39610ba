//
// Copyright 2026 The CPGT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cpgt/error.hpp"

namespace cpgt {

using Edge = std::pair<int, int>;
using EdgeList = std::vector<Edge>;

enum class WeightRule { kMetropolis, kUniform };

inline WeightRule parse_weight_rule(std::string_view name) {
  if (name == "metropolis") return WeightRule::kMetropolis;
  if (name == "uniform") return WeightRule::kUniform;
  throw InvalidArgument("unknown weight rule '" + std::string(name) + "'");
}

inline std::string to_string(WeightRule rule) {
  return rule == WeightRule::kMetropolis ? "metropolis" : "uniform";
}

/// Symmetric doubly stochastic mixing matrix of a connected undirected graph,
/// together with the two spectral scalars the convergence analysis consumes.
struct MixingMatrix {
  int n = 0;
  Eigen::MatrixXd weights;
  /// Spectral radius of W - (1/n) 1 1^T.
  double rho_w = 0.0;
  /// Spectral radius of W - I.
  double lambda_wi = 0.0;
  EdgeList edges;
};

struct SpectralScalars {
  double rho_w;
  double lambda_wi;
};

/// Largest singular values of W - 11^T/n and W - I. W is symmetric, so these
/// are the largest eigenvalue magnitudes of a dense symmetric eigensolve.
inline SpectralScalars spectral_scalars(const Eigen::MatrixXd& weights) {
  const auto n = weights.rows();
  if (n == 0 || weights.cols() != n) throw InvalidArgument("mixing matrix must be square and non-empty");
  if ((weights - weights.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw InvalidArgument("mixing matrix must be symmetric");
  const Eigen::MatrixXd centered =
      weights - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  const Eigen::MatrixXd shifted = weights - Eigen::MatrixXd::Identity(n, n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> c(centered, Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> s(shifted, Eigen::EigenvaluesOnly);
  return {c.eigenvalues().cwiseAbs().maxCoeff(), s.eigenvalues().cwiseAbs().maxCoeff()};
}

inline SpectralScalars spectral_scalars(const MixingMatrix& w) { return spectral_scalars(w.weights); }

inline bool is_connected(const EdgeList& edges, int n) {
  if (n <= 0) return false;
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (const auto& [a, b] : edges) {
    adj[static_cast<std::size_t>(a)].push_back(b);
    adj[static_cast<std::size_t>(b)].push_back(a);
  }
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!frontier.empty()) {
    const int v = frontier.front();
    frontier.pop();
    for (int u : adj[static_cast<std::size_t>(v)]) {
      if (!seen[static_cast<std::size_t>(u)]) {
        seen[static_cast<std::size_t>(u)] = 1;
        ++reached;
        frontier.push(u);
      }
    }
  }
  return reached == n;
}

/// Builds W for a connected simple undirected graph on vertices 0..n-1.
///
/// Metropolis-Hastings: w_ij = 1 / (1 + max(deg_i, deg_j)) on edges.
/// Uniform: w_ij = 1 / (1 + max degree of the graph) on edges.
/// In both cases the diagonal absorbs the remainder of each row.
inline MixingMatrix build_mixing_matrix(const EdgeList& edges, int n,
                                        WeightRule rule = WeightRule::kMetropolis) {
  if (n < 1) throw InvalidArgument("graph needs at least one vertex");
  std::set<Edge> seen;
  std::vector<int> degree(static_cast<std::size_t>(n), 0);
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n)
      throw InvalidArgument("edge (" + std::to_string(a) + "," + std::to_string(b) +
                            ") references a vertex outside [0," + std::to_string(n) + ")");
    if (a == b) throw InvalidArgument("self-loop at vertex " + std::to_string(a));
    const Edge key{std::min(a, b), std::max(a, b)};
    if (!seen.insert(key).second)
      throw InvalidArgument("duplicate edge (" + std::to_string(key.first) + "," +
                            std::to_string(key.second) + ")");
    ++degree[static_cast<std::size_t>(a)];
    ++degree[static_cast<std::size_t>(b)];
  }
  if (!is_connected(edges, n))
    throw InvalidArgument("graph on " + std::to_string(n) + " vertices with " +
                          std::to_string(edges.size()) + " edges is not connected");

  const int max_degree = n > 0 ? *std::max_element(degree.begin(), degree.end()) : 0;
  MixingMatrix out;
  out.n = n;
  out.weights = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [a, b] : seen) {
    const int da = degree[static_cast<std::size_t>(a)];
    const int db = degree[static_cast<std::size_t>(b)];
    const double w = rule == WeightRule::kMetropolis ? 1.0 / (1.0 + std::max(da, db))
                                                     : 1.0 / (1.0 + max_degree);
    out.weights(a, b) = w;
    out.weights(b, a) = w;
  }
  for (int i = 0; i < n; ++i) out.weights(i, i) = 1.0 - out.weights.row(i).sum();
  out.edges.assign(seen.begin(), seen.end());
  const auto s = spectral_scalars(out.weights);
  out.rho_w = s.rho_w;
  out.lambda_wi = s.lambda_wi;
  return out;
}

/// The 6-agent graph of the reference experiment, 0-based.
inline EdgeList reference_edges() {
  // 1-based: 1-2, 1-4, 1-6, 2-3, 2-5, 3-4, 4-5, 5-6
  return {{0, 1}, {0, 3}, {0, 5}, {1, 2}, {1, 4}, {2, 3}, {3, 4}, {4, 5}};
}

inline MixingMatrix graph_preset(std::string_view name, WeightRule rule = WeightRule::kMetropolis) {
  if (name == "paper-fig1") return build_mixing_matrix(reference_edges(), 6, rule);
  throw InvalidArgument("unknown graph preset '" + std::string(name) + "'");
}

/// W_gamma = (1 - gamma) I + gamma W.
inline Eigen::MatrixXd lazy_mix(const MixingMatrix& w, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw InvalidArgument("gamma must lie in (0,1], got " + std::to_string(gamma));
  return (1.0 - gamma) * Eigen::MatrixXd::Identity(w.n, w.n) + gamma * w.weights;
}

}  // namespace cpgt
