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
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cpgt/compressor.hpp"
#include "cpgt/error.hpp"
#include "cpgt/graph.hpp"
#include "cpgt/noise.hpp"
#include "cpgt/objective.hpp"
#include "cpgt/random.hpp"

namespace cpgt {

/// Values that drive one CPGT run. DiaDSP is the identity compressor with
/// gamma = 1.
struct AlgorithmParams {
  double alpha = 0.1;
  double gamma = 1.0;
  CompressorSpec compressor;
  std::vector<NoiseSchedule> schedule;  // one entry per agent
  std::int64_t horizon = 0;

  void validate(int n) const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidArgument("alpha must be finite and > 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in (0,1]");
    if (static_cast<int>(schedule.size()) != n)
      throw InvalidArgument("noise schedule has " + std::to_string(schedule.size()) + " agents, expected " +
                            std::to_string(n));
    for (const auto& s : schedule) s.validate();
    if (horizon < 0) throw InvalidArgument("horizon must be >= 0");
  }
};

/// Synchronous network state. xc and yc hold one copy of each sender's
/// compressed reference, since every receiver applies the same broadcast
/// message to an identical replica.
struct NetworkState {
  std::int64_t k = 0;
  Eigen::MatrixXd x;     // n x d local estimates
  Eigen::MatrixXd y;     // n x d gradient trackers
  Eigen::MatrixXd xc;    // n x d references x^c(k-1)
  Eigen::MatrixXd yc;    // n x d references y^c(k-1)
  Eigen::MatrixXd grad;  // n x d, grad f_i(x_i(k))
  NoiseAccumulator noise_acc;
};

/// The three independent random streams of one trial.
struct TrialStreams {
  Rng noise;
  Rng compressor;
  Rng init;

  explicit TrialStreams(std::uint64_t trial_seed)
      : noise(derive_seed(trial_seed, static_cast<std::uint64_t>(Stream::kNoise))),
        compressor(derive_seed(trial_seed, static_cast<std::uint64_t>(Stream::kCompressor))),
        init(derive_seed(trial_seed, static_cast<std::uint64_t>(Stream::kInit))) {}
};

inline std::uint64_t trial_seed(std::uint64_t master_seed, std::int64_t trial) {
  return derive_seed(master_seed, 0x747269616cULL, static_cast<std::uint64_t>(trial));
}

/// x_i(0) uniform on [0,1]^d, row by row.
inline Eigen::MatrixXd random_uniform_start(int n, int d, Rng& rng) {
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = rng.uniform();
  return x;
}

inline NetworkState init_state(const ProblemInstance& problem, const MixingMatrix& w, const Eigen::MatrixXd& x0) {
  if (w.n != problem.n) throw InvalidArgument("mixing matrix has " + std::to_string(w.n) + " agents, problem has " +
                                              std::to_string(problem.n));
  if (x0.rows() != problem.n || x0.cols() != problem.d)
    throw InvalidArgument("x0 must be " + std::to_string(problem.n) + "x" + std::to_string(problem.d));
  if (!x0.allFinite()) throw InvalidArgument("x0 is not finite");
  NetworkState s;
  s.k = 0;
  s.x = x0;
  s.grad = stacked_gradient(problem, x0);
  s.y = s.grad;
  s.xc = Eigen::MatrixXd::Zero(problem.n, problem.d);
  s.yc = Eigen::MatrixXd::Zero(problem.n, problem.d);
  s.noise_acc = NoiseAccumulator(problem.n, problem.d);
  return s;
}

inline NetworkState init_state(const ProblemInstance& problem, const MixingMatrix& w, Rng& init_rng) {
  return init_state(problem, w, random_uniform_start(problem.n, problem.d, init_rng));
}

/// Norms of the compression errors sigma = x^c(k) - x^a(k) seen in one step.
struct StepInfo {
  double sigma_x = 0.0;
  double sigma_y = 0.0;
};

inline constexpr double kDivergenceBound = 1e12;

/// One iteration with the noise supplied by the caller. \p compress_row maps
/// (innovation, agent, channel) to its compressed message.
///
/// Order: add noise, compress innovations and update references, x update,
/// gradient at x(k+1), y update, accumulate eta_y.
template <typename CompressRow>
StepInfo advance_with(NetworkState& s, const ProblemInstance& problem, const MixingMatrix& w,
                      const AlgorithmParams& params, const NoiseDraw& noise, CompressRow&& compress_row) {
  const int n = problem.n;
  const Eigen::MatrixXd xa = s.x + noise.eta_x;
  const Eigen::MatrixXd ya = s.y + noise.eta_y;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd innovation = (xa.row(i) - s.xc.row(i)).transpose();
    s.xc.row(i) += compress_row(innovation, i, NoiseChannel::kState).transpose();
  }
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd innovation = (ya.row(i) - s.yc.row(i)).transpose();
    s.yc.row(i) += compress_row(innovation, i, NoiseChannel::kTracker).transpose();
  }
  StepInfo info{(s.xc - xa).norm(), (s.yc - ya).norm()};

  const Eigen::MatrixXd laplacian = w.weights - Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd x_next = xa + params.gamma * (laplacian * s.xc) - params.alpha * s.y;
  if (!x_next.allFinite() || x_next.norm() > kDivergenceBound)
    throw DivergenceError(s.k + 1, "state norm left the finite box");
  Eigen::MatrixXd grad_next = stacked_gradient(problem, x_next);
  s.y = ya + params.gamma * (laplacian * s.yc) + grad_next - s.grad;
  if (!s.y.allFinite()) throw DivergenceError(s.k + 1, "tracker is not finite");
  s.x = std::move(x_next);
  s.grad = std::move(grad_next);
  s.noise_acc.absorb(noise.eta_x, noise.eta_y);
  ++s.k;
  return info;
}

/// One iteration drawing noise and compressor randomness from the streams.
inline StepInfo advance(NetworkState& s, const ProblemInstance& problem, const MixingMatrix& w,
                        const AlgorithmParams& params, TrialStreams& streams) {
  if (s.k >= params.horizon)
    throw InvalidArgument("step called at k=" + std::to_string(s.k) + " beyond horizon");
  const NoiseDraw noise = draw_noise(params.schedule, problem.d, s.k, streams.noise);
  return advance_with(s, problem, w, params, noise, [&](const Eigen::VectorXd& v, int, NoiseChannel) {
    return compress(params.compressor, v, streams.compressor);
  });
}

/// Value-semantics wrapper around advance().
inline NetworkState step(NetworkState s, const ProblemInstance& problem, const MixingMatrix& w,
                         const AlgorithmParams& params, TrialStreams& streams) {
  advance(s, problem, w, params, streams);
  return s;
}

/// Relative residual of 1^T y = 1^T grad f(x) + 1^T sum_t eta_y(t).
inline double conservation_residual(const NetworkState& s) {
  const Eigen::VectorXd grad_sum = s.grad.colwise().sum().transpose();
  const Eigen::VectorXd noise_sum = s.noise_acc.total();
  const Eigen::VectorXd lhs = s.y.colwise().sum().transpose();
  return (lhs - grad_sum - noise_sum).norm() / (1.0 + grad_sum.norm() + noise_sum.norm());
}

inline double consensus_error(const Eigen::MatrixXd& m) {
  return (m.rowwise() - m.colwise().mean()).norm();
}

/// Per-iteration metrics that do not depend on the (end-of-run) fixed point.
struct IterateRecord {
  std::int64_t k = 0;
  double consensus_err = 0.0;
  double tracker_err = 0.0;
  double sigma_x = 0.0;
  double sigma_y = 0.0;
  double conservation = 0.0;
};

struct RunResult {
  NetworkState initial;
  NetworkState final_state;
  std::vector<IterateRecord> records;
  std::vector<Eigen::MatrixXd> iterates;  // x(k) for k = 1..K when kept
  double initial_conservation = 0.0;
};

/// Iterates advance() to the horizon. Records describe x(k), k = 1..K.
inline RunResult run(const ProblemInstance& problem, const MixingMatrix& w, const AlgorithmParams& params,
                     std::uint64_t seed, const std::optional<Eigen::MatrixXd>& x0 = std::nullopt,
                     bool keep_iterates = true) {
  params.validate(problem.n);
  TrialStreams streams(seed);
  RunResult out;
  out.initial = x0 ? init_state(problem, w, *x0) : init_state(problem, w, streams.init);
  out.initial_conservation = conservation_residual(out.initial);
  NetworkState s = out.initial;
  out.records.reserve(static_cast<std::size_t>(params.horizon));
  if (keep_iterates) out.iterates.reserve(static_cast<std::size_t>(params.horizon));
  while (s.k < params.horizon) {
    const StepInfo info = advance(s, problem, w, params, streams);
    out.records.push_back({s.k, consensus_error(s.x), consensus_error(s.y), info.sigma_x, info.sigma_y,
                           conservation_residual(s)});
    if (keep_iterates) out.iterates.push_back(s.x);
  }
  out.final_state = std::move(s);
  return out;
}

}  // namespace cpgt
