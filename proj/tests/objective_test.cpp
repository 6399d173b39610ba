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

#include "cpgt/objective.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <random>

namespace cpgt {
namespace {

AgentData scalar_agent(double a, double b) {
  AgentData ag{Eigen::MatrixXd::Constant(1, 1, a), Eigen::VectorXd::Constant(1, b)};
  return ag;
}

Eigen::VectorXd random_vector(int d, std::mt19937_64& gen, double spread = 3.0) {
  std::normal_distribution<double> normal(0.0, spread);
  Eigen::VectorXd v(d);
  for (int j = 0; j < d; ++j) v(j) = normal(gen);
  return v;
}

TEST(ObjectiveTest, ScalarTwoAgentOptimum) {
  const auto p = make_problem({scalar_agent(1, 2), scalar_agent(1, 4)}, 0.0);
  EXPECT_NEAR(p.x_star(0), 3.0, 1e-14);
  EXPECT_NEAR(solve_shifted_optimum(p, Eigen::VectorXd::Constant(1, -2.0))(0), 2.5, 1e-14);
}

TEST(ObjectiveTest, ScalarGradient) {
  const auto p = make_problem({scalar_agent(1, 2)}, 0.0);
  EXPECT_DOUBLE_EQ(gradient(p, 0, Eigen::VectorXd::Constant(1, 5.0))(0), 6.0);
}

TEST(ObjectiveTest, GradientVanishesAtExactFit) {
  std::mt19937_64 gen(3);
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(7, 4);
  const Eigen::VectorXd x = random_vector(4, gen);
  const auto p = make_problem({AgentData{a, a * x}}, 0.0);
  EXPECT_LT(gradient(p, 0, x).norm(), 1e-12);
}

TEST(ObjectiveTest, IdentityDataGivesMuEqualsL) {
  const int d = 3;
  std::vector<AgentData> agents(2, AgentData{Eigen::MatrixXd::Identity(d, d), Eigen::VectorXd::Ones(d)});
  const auto c = smoothness_constants(make_problem(agents, 0.0));
  EXPECT_NEAR(c.mu, 2.0, 1e-14);
  EXPECT_NEAR(c.L, 2.0, 1e-14);
}

TEST(ObjectiveTest, DiagonalDataConstants) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
  a.diagonal() << 1.0, 2.0;
  const auto c = smoothness_constants(make_problem({AgentData{a, Eigen::VectorXd::Zero(2)}}, 0.0));
  EXPECT_NEAR(c.mu, 2.0, 1e-14);
  EXPECT_NEAR(c.L, 8.0, 1e-14);
}

TEST(ObjectiveTest, GeneratedRidgeBoundsMu) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto p = generate_problem(6, 10, 6, 1e-3, seed);
    EXPECT_GE(p.mu, 2e-3 * (1 - 1e-9));
    EXPECT_EQ(p.agents.front().a.rows(), 6);
    EXPECT_EQ(p.agents.front().a.cols(), 10);
  }
}

TEST(ObjectiveTest, OptimumSatisfiesStationarity) {
  const auto p = generate_problem(6, 10, 6, 1e-3, 9);
  Eigen::VectorXd total = Eigen::VectorXd::Zero(p.d);
  for (int i = 0; i < p.n; ++i) total += gradient(p, i, p.x_star);
  EXPECT_LE(total.norm(), 1e-10);
}

TEST(ObjectiveTest, RejectsUnderdeterminedWithoutRidge) {
  EXPECT_THROW(generate_problem(6, 10, 6, 0.0, 1), InvalidArgument);
  EXPECT_NO_THROW(generate_problem(6, 10, 12, 0.0, 1));
  EXPECT_THROW(generate_problem(0, 10, 12, 0.0, 1), InvalidArgument);
}

TEST(ObjectiveTest, RejectsNonFiniteOrBadIndex) {
  const auto p = generate_problem(2, 3, 4, 0.0, 1);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
  x(1) = std::nan("");
  EXPECT_THROW(gradient(p, 0, x), InvalidArgument);
  EXPECT_THROW(gradient(p, 2, Eigen::VectorXd::Zero(3)), InvalidArgument);
  EXPECT_THROW(solve_shifted_optimum(p, x), InvalidArgument);
}

TEST(ObjectiveTest, GradientMatchesCentralDifference) {
  const auto p = generate_problem(3, 5, 8, 1e-3, 4);
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 100; ++trial) {
    const int agent = trial % p.n;
    const Eigen::VectorXd x = random_vector(p.d, gen);
    const Eigen::VectorXd g = gradient(p, agent, x);
    Eigen::VectorXd fd(p.d);
    const double h = 1e-5;
    for (int j = 0; j < p.d; ++j) {
      Eigen::VectorXd xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      fd(j) = (cost(p, agent, xp) - cost(p, agent, xm)) / (2 * h);
    }
    ASSERT_LE((g - fd).norm(), 1e-6 * (1 + g.norm())) << trial;
  }
}

TEST(ObjectiveTest, AssumptionOneInequalities) {
  const auto p = generate_problem(6, 10, 6, 1e-3, 5);
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const int i = trial % p.n;
    const Eigen::VectorXd x = random_vector(p.d, gen), y = random_vector(p.d, gen);
    const Eigen::VectorXd dg = gradient(p, i, x) - gradient(p, i, y);
    const double dist = (x - y).norm();
    ASSERT_LE(dg.norm(), p.L * dist * (1 + 1e-12));
    // Strong convexity: (grad x - grad y)^T (x - y) >= mu ||x - y||^2.
    ASSERT_GE(dg.dot(x - y), p.mu * dist * dist * (1 - 1e-9));
  }
}

TEST(ObjectiveTest, ShiftedSolveResidualAndLinearity) {
  const auto p = generate_problem(6, 10, 6, 1e-3, 6);
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd r1 = random_vector(p.d, gen), r2 = random_vector(p.d, gen);
    const Eigen::VectorXd x1 = solve_shifted_optimum(p, r1);
    Eigen::VectorXd total = Eigen::VectorXd::Zero(p.d);
    for (int i = 0; i < p.n; ++i) total += gradient(p, i, x1);
    EXPECT_LE((total - r1).norm(), 1e-9);
    const Eigen::VectorXd lhs = solve_shifted_optimum(p, r1 + r2);
    const Eigen::VectorXd rhs = x1 + solve_shifted_optimum(p, r2) - p.x_star;
    EXPECT_LE((lhs - rhs).norm(), 1e-9);
  }
  EXPECT_LE((solve_shifted_optimum(p, Eigen::VectorXd::Zero(p.d)) - p.x_star).norm(), 1e-14);
}

TEST(ObjectiveTest, GeneratorIsDeterministic) {
  const auto a = generate_problem(6, 10, 6, 1e-3, 77);
  const auto b = generate_problem(6, 10, 6, 1e-3, 77);
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(a.agents[i].a, b.agents[i].a);
    EXPECT_EQ(a.agents[i].b, b.agents[i].b);
  }
  EXPECT_EQ(a.x_star, b.x_star);
  const auto c = generate_problem(6, 10, 6, 1e-3, 78);
  EXPECT_NE(a.agents[0].a, c.agents[0].a);
}

TEST(ObjectiveTest, NormalizedSmoothnessHasUnitL) {
  const auto raw = generate_problem(6, 10, 6, 1e-3, 1);
  const auto p = generate_problem(6, 10, 6, 1e-3, 1, GeneratorOptions{1.0, true});
  EXPECT_NEAR(p.L, 1.0, 1e-12);
  EXPECT_NEAR(p.mu, raw.mu / raw.L, 1e-12);
  EXPECT_LE((p.x_star - raw.x_star).norm(), 1e-8 * (1 + raw.x_star.norm()));
}

TEST(ObjectiveTest, CsvRoundTrip) {
  const auto p = generate_problem(3, 4, 5, 1e-3, 12);
  const auto path = (std::filesystem::temp_directory_path() / "cpgt_problem_roundtrip.csv").string();
  write_problem_csv(p, path);
  const auto q = read_problem_csv(path, p.ridge, p.cost_scale);
  ASSERT_EQ(q.n, p.n);
  for (int i = 0; i < p.n; ++i) {
    EXPECT_EQ(q.agents[i].a, p.agents[i].a);
    EXPECT_EQ(q.agents[i].b, p.agents[i].b);
  }
  EXPECT_EQ(q.x_star, p.x_star);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace cpgt
