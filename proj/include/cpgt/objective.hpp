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

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "cpgt/error.hpp"
#include "cpgt/random.hpp"

namespace cpgt {

/// Least-squares data held by one agent.
struct AgentData {
  Eigen::MatrixXd a;  // m_i x d
  Eigen::VectorXd b;  // m_i
};

/// Per-agent costs f_i(x) = s * (||A_i x - b_i||^2 + ridge ||x||^2), their
/// constants and the exact minimizer of sum_i f_i.
///
/// The cost scale s defaults to 1. It exists so that step sizes quoted for a
/// normalized objective can be used as-is; every constant below includes it.
struct ProblemInstance {
  int n = 0;
  int d = 0;
  std::vector<AgentData> agents;
  double ridge = 0.0;
  double cost_scale = 1.0;
  double mu = 0.0;
  double L = 0.0;
  Eigen::VectorXd x_star;

  // Normal-equation form: grad f_i(x) = hessians[i] x - linear[i].
  std::vector<Eigen::MatrixXd> hessians;
  std::vector<Eigen::VectorXd> linear;
  Eigen::MatrixXd total_hessian;
  Eigen::VectorXd total_linear;
  Eigen::LLT<Eigen::MatrixXd> total_llt;
};

struct SmoothnessConstants {
  double mu;
  double L;
};

struct GeneratorOptions {
  double cost_scale = 1.0;
  // When set, cost_scale is replaced by 1 / L_raw so that L == 1.
  bool normalize_smoothness = false;
};

namespace detail {

inline Eigen::VectorXd refine_solve(const ProblemInstance& p, const Eigen::VectorXd& rhs) {
  Eigen::VectorXd x = p.total_llt.solve(rhs);
  // One round of iterative refinement.
  const Eigen::VectorXd r = rhs - p.total_hessian * x;
  x += p.total_llt.solve(r);
  return x;
}

}  // namespace detail

/// Assembles an instance from raw agent data and computes mu, L and x*.
inline ProblemInstance make_problem(std::vector<AgentData> agents, double ridge, double cost_scale = 1.0) {
  if (agents.empty()) throw InvalidArgument("problem needs at least one agent");
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw InvalidArgument("ridge must be finite and >= 0");
  if (!(cost_scale > 0.0) || !std::isfinite(cost_scale)) throw InvalidArgument("cost_scale must be finite and > 0");
  ProblemInstance p;
  p.n = static_cast<int>(agents.size());
  p.d = static_cast<int>(agents.front().a.cols());
  if (p.d < 1) throw InvalidArgument("decision dimension must be >= 1");
  p.ridge = ridge;
  p.cost_scale = cost_scale;
  p.total_hessian = Eigen::MatrixXd::Zero(p.d, p.d);
  p.total_linear = Eigen::VectorXd::Zero(p.d);
  p.mu = std::numeric_limits<double>::infinity();
  p.L = 0.0;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const auto& ag = agents[i];
    if (ag.a.cols() != p.d || ag.a.rows() != ag.b.size() || ag.a.rows() < 1)
      throw InvalidArgument("agent " + std::to_string(i) + " has inconsistent data shapes");
    Eigen::MatrixXd h = 2.0 * cost_scale *
                        (ag.a.transpose() * ag.a + ridge * Eigen::MatrixXd::Identity(p.d, p.d));
    h = 0.5 * (h + h.transpose());
    Eigen::VectorXd c = 2.0 * cost_scale * ag.a.transpose() * ag.b;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h, Eigen::EigenvaluesOnly);
    p.mu = std::min(p.mu, eig.eigenvalues().minCoeff());
    p.L = std::max(p.L, eig.eigenvalues().maxCoeff());
    p.total_hessian += h;
    p.total_linear += c;
    p.hessians.push_back(std::move(h));
    p.linear.push_back(std::move(c));
  }
  p.agents = std::move(agents);
  p.total_llt.compute(p.total_hessian);
  if (p.total_llt.info() != Eigen::Success)
    throw InvalidArgument("aggregate Hessian is not positive definite");
  p.x_star = detail::refine_solve(p, p.total_linear);
  return p;
}

/// Gaussian least-squares instance: A_i and the true parameter are standard
/// normal, b_i = A_i x_true + e_i with standard normal e_i.
inline ProblemInstance generate_problem(int n, int d, int m_per_agent, double ridge, std::uint64_t seed,
                                        GeneratorOptions options = {}) {
  if (n < 1 || d < 1 || m_per_agent < 1) throw InvalidArgument("n, d and m_per_agent must all be >= 1");
  if (!(ridge >= 0.0)) throw InvalidArgument("ridge must be >= 0");
  if (m_per_agent < d && ridge == 0.0)
    throw InvalidArgument("m_per_agent (" + std::to_string(m_per_agent) + ") < d (" + std::to_string(d) +
                          ") requires ridge > 0 for per-agent strong convexity");
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(Stream::kProblem)));
  Eigen::VectorXd x_true(d);
  for (int j = 0; j < d; ++j) x_true(j) = rng.normal();
  std::vector<AgentData> agents(static_cast<std::size_t>(n));
  for (auto& ag : agents) {
    ag.a.resize(m_per_agent, d);
    for (int r = 0; r < m_per_agent; ++r)
      for (int c = 0; c < d; ++c) ag.a(r, c) = rng.normal();
    ag.b = ag.a * x_true;
    for (int r = 0; r < m_per_agent; ++r) ag.b(r) += rng.normal();
  }
  double scale = options.cost_scale;
  if (options.normalize_smoothness) {
    const ProblemInstance raw = make_problem(agents, ridge, 1.0);
    scale = 1.0 / raw.L;
  }
  return make_problem(std::move(agents), ridge, scale);
}

inline void check_agent(const ProblemInstance& p, int agent) {
  if (agent < 0 || agent >= p.n)
    throw InvalidArgument("agent index " + std::to_string(agent) + " out of range [0," + std::to_string(p.n) + ")");
}

inline double cost(const ProblemInstance& p, int agent, const Eigen::VectorXd& x) {
  check_agent(p, agent);
  const auto& ag = p.agents[static_cast<std::size_t>(agent)];
  return p.cost_scale * ((ag.a * x - ag.b).squaredNorm() + p.ridge * x.squaredNorm());
}

inline Eigen::VectorXd gradient(const ProblemInstance& p, int agent, const Eigen::VectorXd& x) {
  check_agent(p, agent);
  if (x.size() != p.d) throw InvalidArgument("gradient: x has wrong dimension");
  if (!x.allFinite()) throw InvalidArgument("gradient: x is not finite");
  const auto i = static_cast<std::size_t>(agent);
  return p.hessians[i] * x - p.linear[i];
}

/// Row i of the result is grad f_i(row i of x).
inline Eigen::MatrixXd stacked_gradient(const ProblemInstance& p, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd g(p.n, p.d);
  for (int i = 0; i < p.n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    g.row(i).noalias() = (p.hessians[k] * x.row(i).transpose() - p.linear[k]).transpose();
  }
  return g;
}

inline SmoothnessConstants smoothness_constants(const ProblemInstance& p) { return {p.mu, p.L}; }

/// Unique x with sum_i grad f_i(x) = rhs.
inline Eigen::VectorXd solve_shifted_optimum(const ProblemInstance& p, const Eigen::VectorXd& rhs) {
  if (rhs.size() != p.d) throw InvalidArgument("solve_shifted_optimum: rhs has wrong dimension");
  if (!rhs.allFinite()) throw InvalidArgument("solve_shifted_optimum: rhs is not finite");
  if (p.total_llt.info() != Eigen::Success) throw InvalidArgument("aggregate Hessian is not positive definite");
  return detail::refine_solve(p, rhs + p.total_linear);
}

// CSV layout: agent,row,b,a_0,...,a_{d-1}. Doubles use 17 significant digits.
inline void write_problem_csv(const ProblemInstance& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path + " for writing");
  out.precision(17);
  out << "agent,row,b";
  for (int j = 0; j < p.d; ++j) out << ",a_" << j;
  out << '\n';
  for (int i = 0; i < p.n; ++i) {
    const auto& ag = p.agents[static_cast<std::size_t>(i)];
    for (Eigen::Index r = 0; r < ag.a.rows(); ++r) {
      out << i << ',' << r << ',' << ag.b(r);
      for (int j = 0; j < p.d; ++j) out << ',' << ag.a(r, j);
      out << '\n';
    }
  }
}

inline ProblemInstance read_problem_csv(const std::string& path, double ridge, double cost_scale = 1.0) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<std::vector<double>>> rows;  // agent -> row -> [b, a...]
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() < 4) throw InvalidArgument("malformed problem CSV line: " + line);
    const auto agent = static_cast<std::size_t>(vals[0]);
    if (rows.size() <= agent) rows.resize(agent + 1);
    rows[agent].emplace_back(vals.begin() + 2, vals.end());
  }
  std::vector<AgentData> agents;
  for (const auto& ar : rows) {
    if (ar.empty()) throw InvalidArgument("problem CSV skips an agent index");
    const auto m = static_cast<Eigen::Index>(ar.size());
    const auto d = static_cast<Eigen::Index>(ar.front().size() - 1);
    AgentData ag{Eigen::MatrixXd(m, d), Eigen::VectorXd(m)};
    for (Eigen::Index r = 0; r < m; ++r) {
      if (static_cast<Eigen::Index>(ar[static_cast<std::size_t>(r)].size()) != d + 1)
        throw InvalidArgument("problem CSV rows have inconsistent widths");
      ag.b(r) = ar[static_cast<std::size_t>(r)][0];
      for (Eigen::Index j = 0; j < d; ++j) ag.a(r, j) = ar[static_cast<std::size_t>(r)][static_cast<std::size_t>(j + 1)];
    }
    agents.push_back(std::move(ag));
  }
  return make_problem(std::move(agents), ridge, cost_scale);
}

}  // namespace cpgt
