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
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "cpgt/error.hpp"
#include "cpgt/random.hpp"

namespace cpgt {

enum class NoiseChannel { kState, kTracker };

/// Decaying Laplace scales d_x q^k and d_y q^k for one agent, optionally
/// hard-zeroed from iteration truncation_k on. A base of 0 disables the
/// channel.
struct NoiseSchedule {
  double d_eta_x = 0.0;
  double d_eta_y = 0.0;
  double q = 0.5;
  std::optional<std::int64_t> truncation_k;

  void validate() const {
    if (!(d_eta_x >= 0.0) || !(d_eta_y >= 0.0) || !std::isfinite(d_eta_x) || !std::isfinite(d_eta_y))
      throw InvalidArgument("noise bases d_eta_x, d_eta_y must be finite and >= 0");
    if (!(q > 0.0 && q < 1.0)) throw InvalidArgument("noise decay q must lie in (0,1), got " + std::to_string(q));
    if (truncation_k && *truncation_k < 0) throw InvalidArgument("truncation_k must be >= 0");
  }

  double base(NoiseChannel c) const { return c == NoiseChannel::kState ? d_eta_x : d_eta_y; }
  bool truncated_at(std::int64_t k) const { return truncation_k && k >= *truncation_k; }
};

inline std::vector<NoiseSchedule> homogeneous_schedule(int n, const NoiseSchedule& s) {
  s.validate();
  return std::vector<NoiseSchedule>(static_cast<std::size_t>(n), s);
}

/// Laplace scale at iteration k: base * q^k, or 0 once truncated.
inline double scale_at(const NoiseSchedule& s, NoiseChannel c, std::int64_t k) {
  if (k < 0) throw InvalidArgument("scale_at: k must be >= 0");
  if (s.truncated_at(k)) return 0.0;
  return s.base(c) * std::pow(s.q, static_cast<double>(k));
}

/// Upper bound on E sum_{t>=k} |eta(t)| per coordinate: base q^k / (1 - q).
/// With truncation the sum stops at truncation_k.
inline double tail_bound(const NoiseSchedule& s, NoiseChannel c, std::int64_t k) {
  if (k < 0) throw InvalidArgument("tail_bound: k must be >= 0");
  if (s.truncated_at(k)) return 0.0;
  const double qk = std::pow(s.q, static_cast<double>(k));
  double bound = s.base(c) * qk / (1.0 - s.q);
  if (s.truncation_k) bound *= 1.0 - std::pow(s.q, static_cast<double>(*s.truncation_k - k));
  return bound;
}

inline Eigen::VectorXd sample_laplace(double scale, int d, Rng& rng) {
  if (!(scale >= 0.0)) throw InvalidArgument("sample_laplace: scale must be >= 0");
  Eigen::VectorXd out(d);
  if (scale == 0.0) {
    out.setZero();
    return out;
  }
  for (int j = 0; j < d; ++j) out(j) = rng.laplace(scale);
  return out;
}

/// Running sum of every eta_y drawn so far, plus a checksum over both
/// channels so coupled runs can prove they saw the same noise.
struct NoiseAccumulator {
  Eigen::MatrixXd eta_y_sum;  // n x d, row i = agent i
  std::int64_t steps = 0;
  std::uint64_t checksum = 0xcbf29ce484222325ULL;

  NoiseAccumulator() = default;
  NoiseAccumulator(int n, int d) : eta_y_sum(Eigen::MatrixXd::Zero(n, d)) {}

  void absorb(const Eigen::MatrixXd& eta_x, const Eigen::MatrixXd& eta_y) {
    eta_y_sum += eta_y;
    ++steps;
    mix(eta_x);
    mix(eta_y);
  }

  /// sum over agents and time of eta_y.
  Eigen::VectorXd total() const { return eta_y_sum.colwise().sum().transpose(); }

 private:
  void mix(const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      std::uint64_t bits;
      const double v = m.data()[i];
      std::memcpy(&bits, &v, sizeof bits);
      for (int byte = 0; byte < 8; ++byte) {
        checksum ^= (bits >> (8 * byte)) & 0xffU;
        checksum *= 0x100000001b3ULL;
      }
    }
  }
};

struct NoiseDraw {
  Eigen::MatrixXd eta_x;
  Eigen::MatrixXd eta_y;
};

/// Draws eta_x(k), eta_y(k) for all agents. Per agent the state channel is
/// drawn before the tracker channel; zero-scale channels consume nothing.
inline NoiseDraw draw_noise(const std::vector<NoiseSchedule>& schedule, int d, std::int64_t k, Rng& rng) {
  const auto n = static_cast<int>(schedule.size());
  NoiseDraw out{Eigen::MatrixXd(n, d), Eigen::MatrixXd(n, d)};
  for (int i = 0; i < n; ++i) {
    const auto& s = schedule[static_cast<std::size_t>(i)];
    out.eta_x.row(i) = sample_laplace(scale_at(s, NoiseChannel::kState, k), d, rng).transpose();
    out.eta_y.row(i) = sample_laplace(scale_at(s, NoiseChannel::kTracker, k), d, rng).transpose();
  }
  return out;
}

}  // namespace cpgt
