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

#include "cpgt/algorithm.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "cpgt/graph.hpp"
#include "cpgt/noise.hpp"
#include "cpgt/objective.hpp"

namespace cpgt {
namespace {

AlgorithmParams params_for(int n, double alpha, double gamma, CompressorSpec c, NoiseSchedule s,
                           std::int64_t horizon) {
  AlgorithmParams p;
  p.alpha = alpha;
  p.gamma = gamma;
  p.compressor = c;
  p.schedule = homogeneous_schedule(n, s);
  p.horizon = horizon;
  return p;
}

NoiseSchedule no_noise() { return {0.0, 0.0, 0.5, std::nullopt}; }

ProblemInstance unit_problem(std::uint64_t seed = 1) {
  return generate_problem(6, 10, 6, 1e-3, seed, GeneratorOptions{1.0, true});
}

// Two agents, d = 2, A_i = I, b_1 = (1, 2), b_2 = (3, -1); W = [[.5, .5], [.5, .5]].
class TwoAgentStep : public ::testing::Test {
 protected:
  void SetUp() override {
    problem = make_problem({AgentData{Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(1, 2)},
                            AgentData{Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(3, -1)}},
                           0.0);
    w = build_mixing_matrix({{0, 1}}, 2, WeightRule::kUniform);
    params = params_for(2, 0.1, 0.5, CompressorSpec::top_k(1), no_noise(), 10);
    x0.resize(2, 2);
    x0 << 0, 0, 1, 1;
    noise.eta_x.resize(2, 2);
    noise.eta_y.resize(2, 2);
    noise.eta_x << 0.1, -0.2, 0.0, 0.3;
    noise.eta_y << 0.5, 0.0, -0.25, 0.1;
  }
  ProblemInstance problem;
  MixingMatrix w;
  AlgorithmParams params;
  Eigen::MatrixXd x0;
  NoiseDraw noise;
};

TEST_F(TwoAgentStep, HandComputedTopOneStep) {
  NetworkState s = init_state(problem, w, x0);
  Eigen::Matrix2d y0;
  y0 << -2, -4, -4, 4;
  EXPECT_EQ(s.y, Eigen::MatrixXd(y0));
  const StepInfo info = advance_with(s, problem, w, params, noise,
                                     [](const Eigen::VectorXd& v, int, NoiseChannel) { return top_k(v, 1); });
  Eigen::Matrix2d xc, yc, x1, y1;
  xc << 0, -0.2, 0, 1.3;
  yc << 0, -4, -4.25, 0;
  x1 << 0.3, 0.575, 1.4, 0.525;
  y1 << -1.9625, -1.85, -2.3875, 2.15;
  EXPECT_LT((s.xc - xc).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((s.yc - yc).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((s.x - x1).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((s.y - y1).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(info.sigma_x, std::sqrt(1.01), 1e-15);
  EXPECT_EQ(s.k, 1);
  EXPECT_LT(conservation_residual(s), 1e-15);
}

TEST(AlgorithmTest, InitState) {
  const auto p = unit_problem();
  const auto w = graph_preset("paper-fig1");
  const Eigen::MatrixXd x0 = Eigen::MatrixXd::Ones(6, 1) * p.x_star.transpose();
  const NetworkState s = init_state(p, w, x0);
  EXPECT_EQ(s.k, 0);
  EXPECT_EQ(s.xc, Eigen::MatrixXd::Zero(6, 10));
  EXPECT_EQ(s.yc, Eigen::MatrixXd::Zero(6, 10));
  for (int i = 0; i < 6; ++i) EXPECT_LT((s.y.row(i).transpose() - gradient(p, i, p.x_star)).norm(), 1e-15);
  EXPECT_LT(s.y.colwise().sum().norm(), 1e-10);
  EXPECT_EQ(conservation_residual(s), 0.0);
  EXPECT_THROW(init_state(p, w, Eigen::MatrixXd::Zero(5, 10)), InvalidArgument);
  EXPECT_THROW(init_state(p, graph_preset("paper-fig1"), Eigen::MatrixXd::Zero(6, 9)), InvalidArgument);
}

TEST(AlgorithmTest, RandomStartIsUniformAndSeeded) {
  Rng a(3), b(3);
  const Eigen::MatrixXd x = random_uniform_start(6, 10, a);
  EXPECT_EQ(x, random_uniform_start(6, 10, b));
  EXPECT_GE(x.minCoeff(), 0.0);
  EXPECT_LT(x.maxCoeff(), 1.0);
}

TEST(AlgorithmTest, NoiselessIdentityIsGradientTracking) {
  const auto p = unit_problem();
  const auto w = graph_preset("paper-fig1");
  const auto params = params_for(6, 0.05, 1.0, CompressorSpec::identity(), no_noise(), 5);
  TrialStreams streams(9);
  NetworkState s = init_state(p, w, streams.init);
  for (int k = 0; k < 5; ++k) {
    const Eigen::MatrixXd expected = w.weights * s.x - 0.05 * s.y;
    advance(s, p, w, params, streams);
    ASSERT_LT((s.x - expected).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(AlgorithmTest, SingleAgentIsGradientDescent) {
  const auto p = generate_problem(1, 4, 8, 0.0, 2);
  const auto w = build_mixing_matrix({}, 1);
  const auto params = params_for(1, 0.01, 1.0, CompressorSpec::identity(), no_noise(), 20);
  NetworkState s = init_state(p, w, Eigen::MatrixXd::Ones(1, 4));
  TrialStreams streams(1);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd x = s.x.row(0).transpose();
    const Eigen::VectorXd expected = x - 0.01 * gradient(p, 0, x);
    advance(s, p, w, params, streams);
    ASSERT_LT((s.x.row(0).transpose() - expected).norm(), 1e-14);
  }
}

// x(k+1) = W_g (x + eta_x) + g (W - I) sigma_x - alpha y, evaluated from the
// recorded messages, against the component form used by advance().
TEST(AlgorithmTest, MatrixFormMatchesComponentForm) {
  const auto p = unit_problem(2);
  const auto w = graph_preset("paper-fig1");
  for (const auto& spec : {CompressorSpec::top_k(2), CompressorSpec::biased_bbit(2), CompressorSpec::identity()}) {
    const auto params = params_for(6, 0.1, 0.2, spec, NoiseSchedule{1.0, 1.0, 0.9, std::nullopt}, 50);
    TrialStreams streams(4);
    NetworkState s = init_state(p, w, streams.init);
    const Eigen::MatrixXd wg = lazy_mix(w, params.gamma);
    const Eigen::MatrixXd lap = w.weights - Eigen::MatrixXd::Identity(6, 6);
    for (int k = 0; k < 50; ++k) {
      const NoiseDraw noise = draw_noise(params.schedule, p.d, s.k, streams.noise);
      const NetworkState before = s;
      advance_with(s, p, w, params, noise, [&](const Eigen::VectorXd& v, int, NoiseChannel) {
        return compress(params.compressor, v, streams.compressor);
      });
      const Eigen::MatrixXd xa = before.x + noise.eta_x;
      const Eigen::MatrixXd ya = before.y + noise.eta_y;
      const Eigen::MatrixXd sigma_x = s.xc - xa;
      const Eigen::MatrixXd sigma_y = s.yc - ya;
      const Eigen::MatrixXd x_matrix = wg * xa + params.gamma * lap * sigma_x - params.alpha * before.y;
      const Eigen::MatrixXd y_matrix =
          wg * ya + params.gamma * lap * sigma_y + stacked_gradient(p, x_matrix) - before.grad;
      const double scale = 1.0 + s.x.cwiseAbs().maxCoeff();
      ASSERT_LT((s.x - x_matrix).cwiseAbs().maxCoeff(), 1e-12 * scale) << to_string(spec) << " k=" << k;
      ASSERT_LT((s.y - y_matrix).cwiseAbs().maxCoeff(), 1e-12 * (1.0 + s.y.cwiseAbs().maxCoeff()));
    }
  }
}

TEST(AlgorithmTest, DiaDspMatchesUncompressedBaseline) {
  const auto p = unit_problem(3);
  const auto w = graph_preset("paper-fig1");
  const auto params =
      params_for(6, 0.15, 1.0, CompressorSpec::identity(), NoiseSchedule{1.0, 1.0, 0.9, 100}, 300);
  const RunResult r = run(p, w, params, 17);
  // Independent baseline driven by the same noise stream.
  TrialStreams streams(17);
  Eigen::MatrixXd x = random_uniform_start(6, 10, streams.init);
  Eigen::MatrixXd y = stacked_gradient(p, x);
  for (std::int64_t k = 0; k < 300; ++k) {
    const NoiseDraw nd = draw_noise(params.schedule, 10, k, streams.noise);
    const Eigen::MatrixXd xa = x + nd.eta_x, ya = y + nd.eta_y;
    const Eigen::MatrixXd xn = w.weights * xa - 0.15 * y;
    y = w.weights * ya + stacked_gradient(p, xn) - stacked_gradient(p, x);
    x = xn;
    const double tol = 1e-12 * (1.0 + x.cwiseAbs().maxCoeff());
    ASSERT_LT((r.iterates[static_cast<std::size_t>(k)] - x).cwiseAbs().maxCoeff(), tol) << k;
  }
}

TEST(AlgorithmTest, ZeroHorizon) {
  const auto p = unit_problem();
  const auto w = graph_preset("paper-fig1");
  const auto params = params_for(6, 0.1, 0.05, CompressorSpec::top_k(2), no_noise(), 0);
  const RunResult r = run(p, w, params, 1);
  EXPECT_TRUE(r.records.empty());
  EXPECT_EQ(r.final_state.x, r.initial.x);
  EXPECT_EQ(r.final_state.k, 0);
}

TEST(AlgorithmTest, StepBeyondHorizonRejected) {
  const auto p = unit_problem();
  const auto w = graph_preset("paper-fig1");
  const auto params = params_for(6, 0.1, 0.05, CompressorSpec::top_k(2), no_noise(), 1);
  TrialStreams streams(1);
  NetworkState s = init_state(p, w, streams.init);
  s = step(s, p, w, params, streams);
  EXPECT_EQ(s.k, 1);
  EXPECT_THROW(step(s, p, w, params, streams), InvalidArgument);
}

TEST(AlgorithmTest, RunIsBitDeterministic) {
  const auto p = unit_problem();
  const auto w = graph_preset("paper-fig1");
  const auto params =
      params_for(6, 0.1, 0.2, CompressorSpec::biased_bbit(2), NoiseSchedule{1.0, 1.0, 0.9, std::nullopt}, 200);
  const RunResult a = run(p, w, params, 5), b = run(p, w, params, 5), c = run(p, w, params, 6);
  EXPECT_EQ(a.final_state.x, b.final_state.x);
  EXPECT_EQ(a.final_state.y, b.final_state.y);
  EXPECT_EQ(a.final_state.noise_acc.checksum, b.final_state.noise_acc.checksum);
  EXPECT_NE(a.final_state.noise_acc.checksum, c.final_state.noise_acc.checksum);
}

TEST(AlgorithmTest, ConservationHoldsEveryIteration) {
  const auto p = unit_problem();
  const auto w = graph_preset("paper-fig1");
  for (const auto& spec : {CompressorSpec::top_k(2), CompressorSpec::biased_bbit(2), CompressorSpec::identity()}) {
    const auto params = params_for(6, 0.1, 0.05, spec, NoiseSchedule{5.0, 5.0, 0.95, std::nullopt}, 500);
    const RunResult r = run(p, w, params, 3);
    EXPECT_LE(r.initial_conservation, 1e-12);
    for (const auto& rec : r.records) ASSERT_LE(rec.conservation, 1e-8) << to_string(spec) << " k=" << rec.k;
  }
}

TEST(AlgorithmTest, TruncatedNoiseConvergesToShiftedOptimum) {
  const auto p = unit_problem();
  const auto w = graph_preset("paper-fig1");
  const auto params = params_for(6, 0.1, 0.05, CompressorSpec::top_k(2), NoiseSchedule{1.0, 1.0, 0.9, 200}, 5000);
  const RunResult r = run(p, w, params, 8, std::nullopt, false);
  const Eigen::VectorXd x_inf = solve_shifted_optimum(p, -r.final_state.noise_acc.total());
  EXPECT_LE((r.final_state.x.rowwise() - x_inf.transpose()).norm(), 1e-6);
  EXPECT_TRUE(r.iterates.empty());
}

TEST(AlgorithmTest, DivergenceReportsIteration) {
  const auto p = unit_problem();
  const auto w = graph_preset("paper-fig1");
  const auto params = params_for(6, 50.0, 1.0, CompressorSpec::identity(), no_noise(), 10000);
  try {
    run(p, w, params, 1);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GT(e.iteration(), 0);
    EXPECT_LT(e.iteration(), 10000);
    EXPECT_NE(std::string(e.what()).find("k="), std::string::npos);
  }
}

TEST(AlgorithmTest, ParamValidation) {
  auto params = params_for(6, 0.1, 0.05, CompressorSpec::top_k(2), no_noise(), 10);
  EXPECT_NO_THROW(params.validate(6));
  EXPECT_THROW(params.validate(5), InvalidArgument);
  params.gamma = 1.5;
  EXPECT_THROW(params.validate(6), InvalidArgument);
  params.gamma = 0.5;
  params.alpha = -1;
  EXPECT_THROW(params.validate(6), InvalidArgument);
}

}  // namespace
}  // namespace cpgt
