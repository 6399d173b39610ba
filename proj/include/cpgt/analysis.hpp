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
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "cpgt/error.hpp"
#include "cpgt/objective.hpp"

namespace cpgt {

/// Scalars the five-dimensional error recursion depends on.
struct ConvergenceParams {
  double alpha = 0.0;
  double gamma = 1.0;
  double mu = 1.0;
  double L = 1.0;
  double phi = 0.0;
  double rho_w = 0.0;
  double lambda_wi = 0.0;
  int n = 1;
  double q_bar = 0.5;      // max_i q_i
  double d_eta_bar = 0.0;  // max_i max(d_eta_x_i, d_eta_y_i)
};

/// E[Theta(k+1)] <= G E[Theta(k)] + vartheta q_bar^k d_eta_bar, with
/// Theta = [consensus error, mean-iterate gap, tracker error,
///          state compression error, tracker compression error].
struct ConvergenceSystem {
  Eigen::Matrix<double, 5, 5> G;
  Eigen::Matrix<double, 5, 1> vartheta;
  double q_bar = 0.0;
  double d_eta_bar = 0.0;
  double lambda_hat = 0.0;
  ConvergenceParams params;
};

inline ConvergenceSystem build_system(const ConvergenceParams& p) {
  if (!(p.mu > 0.0) || !(p.L >= p.mu))
    throw InvalidArgument("need 0 < mu <= L (mu=" + std::to_string(p.mu) + ", L=" + std::to_string(p.L) + ")");
  if (!(p.alpha > 0.0) || !(p.alpha < 1.0 / (p.mu + p.L)))
    throw InvalidArgument("violated alpha < 1/(mu+L): alpha=" + std::to_string(p.alpha) +
                          ", 1/(mu+L)=" + std::to_string(1.0 / (p.mu + p.L)));
  if (!(p.gamma > 0.0 && p.gamma <= 1.0)) throw InvalidArgument("violated gamma in (0,1]");
  if (!(p.phi >= 0.0 && p.phi < 1.0)) throw InvalidArgument("violated phi in [0,1)");
  if (!(p.rho_w >= 0.0 && p.rho_w < 1.0)) throw InvalidArgument("violated rho_w in [0,1)");
  if (!(p.lambda_wi >= 0.0)) throw InvalidArgument("violated lambda_wi >= 0");
  if (!(p.q_bar > 0.0 && p.q_bar < 1.0)) throw InvalidArgument("violated q_bar in (0,1)");
  if (p.n < 1) throw InvalidArgument("violated n >= 1");

  const double a = p.alpha, L = p.L, mu = p.mu;
  const double lh = 1.0 - p.gamma * (1.0 - p.rho_w);
  const double gl = p.gamma * p.lambda_wi;
  const double sp = std::sqrt(p.phi);

  ConvergenceSystem s;
  s.params = p;
  s.lambda_hat = lh;
  s.q_bar = p.q_bar;
  s.d_eta_bar = p.d_eta_bar;
  // clang-format off
  s.G << lh,                0.0,              a,               gl,               0.0,
         a * L,             1.0 - a * mu,     0.0,             0.0,              0.0,
         L * (gl + a * L),  a * L * L,        a * L + lh,      L * gl,           gl,
         sp * (gl + a * L), sp * a * L,       sp * a,          sp * (gl + 1.0),  0.0,
         sp * L * (gl + a * L), sp * a * L * L, sp * (a * L + gl), sp * L * gl,  sp * (gl + 1.0);
  // clang-format on
  const double tail = 1.0 - p.q_bar;
  const double n2 = static_cast<double>(p.n) * static_cast<double>(p.n);
  s.vartheta << lh, (tail + a) / tail, (L + 1.0) * lh + a * L / tail, sp * (lh + 1.0) + sp * a / tail,
      sp * L * lh + sp + sp * a * L / tail + sp * lh;
  s.vartheta *= n2;
  return s;
}

/// Largest eigenvalue magnitude from a dense general eigensolve.
inline double spectral_radius(const Eigen::MatrixXd& g) {
  if (g.rows() != g.cols() || g.rows() == 0) throw InvalidArgument("spectral_radius needs a square matrix");
  Eigen::EigenSolver<Eigen::MatrixXd> es(g, false);
  if (es.info() != Eigen::Success) throw InvalidArgument("eigensolver failed to converge");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Perron root of a nonnegative matrix by power iteration on G + I, which is
/// primitive on every irreducible block, so the iteration cannot cycle.
inline double power_iteration_radius(const Eigen::MatrixXd& g, int max_iterations = 200000, double tol = 1e-14) {
  if ((g.array() < 0.0).any()) throw InvalidArgument("power_iteration_radius needs a nonnegative matrix");
  const auto n = g.rows();
  const Eigen::MatrixXd shifted = g + Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
  double estimate = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::VectorXd w = shifted * v;
    const double next = w.norm();
    w /= next;
    const bool done = std::abs(next - estimate) <= tol * next && (w - v).norm() <= 1e-12;
    v = std::move(w);
    estimate = next;
    if (done) break;
  }
  return std::max(0.0, estimate - 1.0);
}

inline double spectral_radius(const ConvergenceSystem& s) { return spectral_radius(Eigen::MatrixXd(s.G)); }

struct ZetaCheck {
  bool pass = false;
  double rate = 0.0;  // 1 - (m/2) alpha mu
  Eigen::Matrix<double, 5, 1> zeta;   // [z1, z2, L z3, z4, L z5]
  Eigen::Matrix<double, 5, 1> slack;  // rate * zeta - G zeta
};

/// zeta_1 = 1, zeta_2 = 2L/(m mu), zeta_3 = (2 lambda_wi - 2 rho_w + 2)/(1 - rho_w),
/// zeta_4 = zeta_5 = (1 - rho_w)/(2 lambda_wi).
inline std::array<double, 5> default_zetas(const ConvergenceParams& p, double m) {
  const double z4 = (1.0 - p.rho_w) / (2.0 * p.lambda_wi);
  return {1.0, 2.0 * p.L / (m * p.mu), (2.0 * p.lambda_wi - 2.0 * p.rho_w + 2.0) / (1.0 - p.rho_w), z4, z4};
}

/// Element-wise test of G zeta <= (1 - m alpha mu / 2) zeta. A pass bounds
/// the spectral radius of G by the same rate.
inline ZetaCheck lemma2_zeta_check(const ConvergenceSystem& s, double m, const std::array<double, 5>& zetas) {
  if (!(m > 0.0 && m < 1.0)) throw InvalidArgument("m must lie in (0,1)");
  for (double z : zetas)
    if (!(z > 0.0)) throw InvalidArgument("zeta entries must be positive");
  ZetaCheck out;
  const double L = s.params.L;
  out.zeta << zetas[0], zetas[1], L * zetas[2], zetas[3], L * zetas[4];
  out.rate = 1.0 - 0.5 * m * s.params.alpha * s.params.mu;
  out.slack = out.rate * out.zeta - s.G * out.zeta;
  out.pass = (out.slack.array() >= 0.0).all();
  return out;
}

struct StepSizeBounds {
  double gamma_max = 0.0;
  double alpha_max = 0.0;  // evaluated at gamma = gamma_max
  double kappa = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
};

/// Step-size bound for a given gamma:
/// min{m mu (1-rho_w)^2 / s2, lambda_wi (1 - q_bar)/2} * gamma / L.
inline double alpha_step_bound(const ConvergenceParams& p, double m, double gamma) {
  const double one_minus_rho = 1.0 - p.rho_w;
  const double s2 = (6.0 * m * p.mu + 2.0 * m * m * p.mu + 4.0 * p.L) * one_minus_rho +
                    2.0 * m * p.mu * p.lambda_wi * (2.0 + m);
  return std::min(m * p.mu * one_minus_rho * one_minus_rho / s2, p.lambda_wi * (1.0 - p.q_bar) / 2.0) * gamma / p.L;
}

/// Parameter region on which the default zetas certify linear convergence.
inline StepSizeBounds theorem1_bounds(const ConvergenceParams& p, double m) {
  if (!(m > 0.0 && m < 1.0)) throw InvalidArgument("m must lie in (0,1)");
  if (!(p.phi >= 0.0 && p.phi < 1.0)) throw InvalidArgument("phi must lie in [0,1)");
  if (!(p.mu > 0.0) || !(p.L >= p.mu)) throw InvalidArgument("need 0 < mu <= L");
  if (!(p.lambda_wi > 0.0)) throw InvalidArgument("lambda_wi must be > 0 (graph with at least one edge)");
  StepSizeBounds b;
  const double one_minus_rho = 1.0 - p.rho_w;
  const double sp = std::sqrt(p.phi);
  b.kappa = (1.0 - sp) / p.lambda_wi;
  b.s1 = 4.0 * p.lambda_wi * p.lambda_wi * m * p.mu + one_minus_rho * one_minus_rho * m * p.mu +
         (6.0 * m * p.mu + 2.0 * p.L) * p.lambda_wi * one_minus_rho;
  b.s2 = (6.0 * m * p.mu + 2.0 * m * m * p.mu + 4.0 * p.L) * one_minus_rho +
         2.0 * m * p.mu * p.lambda_wi * (2.0 + m);
  const double compression_term = sp == 0.0 ? std::numeric_limits<double>::infinity()
                                            : b.kappa * one_minus_rho * one_minus_rho * m * p.mu / (4.0 * sp * b.s1);
  b.gamma_max = std::min({compression_term, b.kappa * p.L / (m * p.mu), 1.0});
  b.alpha_max = alpha_step_bound(p, m, b.gamma_max);
  return b;
}

struct PrivacyBudget {
  double epsilon = 0.0;
  double tau = 0.0;
  double q_floor = 0.0;
  double delta = 0.0;
};

/// Lower end of the admissible decay interval: (aL + sqrt(a^2 L^2 + 4 a L)) / 2.
inline double privacy_q_floor(double alpha, double L) {
  const double al = alpha * L;
  return (al + std::sqrt(al * al + 4.0 * al)) / 2.0;
}

/// epsilon = tau q^2 delta / (q^2 - alpha L - q alpha L), tau = alpha/d_x + 1/d_y.
inline PrivacyBudget privacy_epsilon(double alpha, double L, double q, double delta, double d_eta_x, double d_eta_y) {
  if (!(alpha > 0.0) || !(L > 0.0)) throw InvalidArgument("privacy: alpha and L must be > 0");
  if (!(alpha < 1.0 / (2.0 * L)))
    throw InvalidArgument("privacy: violated alpha < 1/(2L) (alpha=" + std::to_string(alpha) +
                          ", 1/(2L)=" + std::to_string(1.0 / (2.0 * L)) + ")");
  const double q_floor = privacy_q_floor(alpha, L);
  if (!(q > q_floor && q < 1.0))
    throw InvalidArgument("privacy: violated q in (q_floor, 1) (q=" + std::to_string(q) +
                          ", q_floor=" + std::to_string(q_floor) + ")");
  if (!(delta >= 0.0)) throw InvalidArgument("privacy: delta must be >= 0");
  if (!(d_eta_x > 0.0) || !(d_eta_y > 0.0)) throw InvalidArgument("privacy: noise bases must be > 0");
  PrivacyBudget out;
  out.tau = alpha / d_eta_x + 1.0 / d_eta_y;
  out.q_floor = q_floor;
  out.delta = delta;
  out.epsilon = out.tau * q * q * delta / (q * q - alpha * L - q * alpha * L);
  return out;
}

/// sup_x ||grad f^(1)_i0(x) - grad f^(2)_i0(x)|| for instances that differ in
/// at most one agent. Finite only when the differing agents share A (and the
/// ridge and scale), in which case the gradient gap is the constant
/// 2 s A^T (b2 - b1). Returns +inf otherwise.
inline double adjacency_distance(const ProblemInstance& a, const ProblemInstance& b) {
  if (a.n != b.n || a.d != b.d) throw InvalidArgument("adjacency: instances have different shapes");
  if (a.ridge != b.ridge || a.cost_scale != b.cost_scale) {
    // Every agent's cost changes, and the gradient gap grows with x.
    if (a.n > 1) throw InvalidArgument("adjacency: ridge or cost scale differs, so every agent differs");
    return std::numeric_limits<double>::infinity();
  }
  int differing = -1;
  int count = 0;
  for (int i = 0; i < a.n; ++i) {
    const auto& x = a.agents[static_cast<std::size_t>(i)];
    const auto& y = b.agents[static_cast<std::size_t>(i)];
    const bool same = x.a.rows() == y.a.rows() && x.a == y.a && x.b == y.b;
    if (!same) {
      differing = i;
      ++count;
    }
  }
  if (count == 0) return 0.0;
  if (count > 1) throw InvalidArgument("adjacency: instances differ in " + std::to_string(count) + " agents");
  const auto& x = a.agents[static_cast<std::size_t>(differing)];
  const auto& y = b.agents[static_cast<std::size_t>(differing)];
  if (x.a.rows() != y.a.rows() || x.a != y.a) return std::numeric_limits<double>::infinity();
  return (2.0 * a.cost_scale * x.a.transpose() * (y.b - x.b)).norm();
}

}  // namespace cpgt
