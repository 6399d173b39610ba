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
#include <charconv>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cpgt/error.hpp"
#include "cpgt/random.hpp"

namespace cpgt {

enum class CompressorKind { kIdentity, kTopK, kBiasedBbit };

/// One of Identity, TopK(k) or BiasedBbit(b). The contraction parameter phi
/// is exact for Identity (0) and TopK (1 - k/d); for BiasedBbit it has to be
/// estimated and attached via `with_phi`.
struct CompressorSpec {
  CompressorKind kind = CompressorKind::kIdentity;
  int k = 0;  // TopK
  int b = 0;  // BiasedBbit
  std::optional<double> phi_estimate;

  static CompressorSpec identity() { return {}; }
  static CompressorSpec top_k(int k) {
    if (k < 1) throw InvalidArgument("topk needs k >= 1");
    return {CompressorKind::kTopK, k, 0, std::nullopt};
  }
  static CompressorSpec biased_bbit(int b) {
    if (b < 1) throw InvalidArgument("bbit needs b >= 1");
    return {CompressorKind::kBiasedBbit, 0, b, std::nullopt};
  }

  CompressorSpec with_phi(double phi) const {
    CompressorSpec s = *this;
    s.phi_estimate = phi;
    return s;
  }

  friend bool operator==(const CompressorSpec& a, const CompressorSpec& b) {
    return a.kind == b.kind && a.k == b.k && a.b == b.b;
  }
};

namespace detail {

inline int parse_int_field(std::string_view text, std::string_view key, std::string_view full) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || text.substr(0, eq) != key)
    throw InvalidArgument("compressor '" + std::string(full) + "': expected " + std::string(key) + "=<int>");
  const auto digits = text.substr(eq + 1);
  int value = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc{} || ptr != digits.data() + digits.size())
    throw InvalidArgument("compressor '" + std::string(full) + "': bad integer '" + std::string(digits) + "'");
  return value;
}

}  // namespace detail

/// Parses "identity", "topk:k=2", "bbit:b=2".
inline CompressorSpec parse_compressor(std::string_view text) {
  if (text == "identity") return CompressorSpec::identity();
  const auto colon = text.find(':');
  const auto head = text.substr(0, colon);
  const auto tail = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
  if (head == "topk") return CompressorSpec::top_k(detail::parse_int_field(tail, "k", text));
  if (head == "bbit") return CompressorSpec::biased_bbit(detail::parse_int_field(tail, "b", text));
  throw InvalidArgument("unknown compressor '" + std::string(text) + "'");
}

inline std::string to_string(const CompressorSpec& s) {
  switch (s.kind) {
    case CompressorKind::kIdentity: return "identity";
    case CompressorKind::kTopK: return "topk:k=" + std::to_string(s.k);
    case CompressorKind::kBiasedBbit: return "bbit:b=" + std::to_string(s.b);
  }
  return "?";
}

/// xi = 1 + min{d / 2^{2(b-1)}, sqrt(d) / 2^{b-1}}.
inline double bbit_xi(int b, int d) {
  const double levels = std::ldexp(1.0, b - 1);
  return 1.0 + std::min(static_cast<double>(d) / (levels * levels), std::sqrt(static_cast<double>(d)) / levels);
}

/// Contraction parameter phi consumed by the analysis.
inline double declared_phi(const CompressorSpec& s, int d) {
  switch (s.kind) {
    case CompressorKind::kIdentity: return 0.0;
    case CompressorKind::kTopK:
      if (s.k > d) throw InvalidArgument("topk: k > d");
      return 1.0 - static_cast<double>(s.k) / static_cast<double>(d);
    case CompressorKind::kBiasedBbit:
      if (!s.phi_estimate) throw InvalidArgument("bbit: phi must be estimated first (estimate_contraction)");
      return *s.phi_estimate;
  }
  return 0.0;
}

inline Eigen::VectorXd top_k(const Eigen::VectorXd& v, int k) {
  const auto d = static_cast<int>(v.size());
  if (k > d) throw InvalidArgument("topk: k=" + std::to_string(k) + " exceeds dimension " + std::to_string(d));
  std::vector<int> idx(static_cast<std::size_t>(d));
  std::iota(idx.begin(), idx.end(), 0);
  // Larger magnitude first; ties go to the lower index.
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    const double ma = std::abs(v(a)), mb = std::abs(v(b));
    return ma > mb || (ma == mb && a < b);
  });
  Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
  for (int j = 0; j < k; ++j) out(idx[static_cast<std::size_t>(j)]) = v(idx[static_cast<std::size_t>(j)]);
  return out;
}

/// Dithered b-bit quantizer with an explicit dither vector u in [0,1)^d.
inline Eigen::VectorXd biased_bbit(const Eigen::VectorXd& v, int b, const Eigen::VectorXd& u) {
  const auto d = static_cast<int>(v.size());
  if (u.size() != v.size()) throw InvalidArgument("bbit: dither has wrong dimension");
  const double norm = v.norm();
  if (norm == 0.0) return Eigen::VectorXd::Zero(d);
  const double levels = std::ldexp(1.0, b - 1);
  const double prefactor = norm / bbit_xi(b, d) / levels;
  Eigen::VectorXd out(d);
  for (int i = 0; i < d; ++i) {
    const double level = std::floor(levels * std::abs(v(i)) / norm + u(i));
    const double sign = v(i) > 0.0 ? 1.0 : (v(i) < 0.0 ? -1.0 : 0.0);
    out(i) = prefactor * sign * level;
  }
  return out;
}

/// Same, drawing one uniform per coordinate from `rng` for non-zero inputs;
/// C(0) = 0 draws nothing.
inline Eigen::VectorXd biased_bbit(const Eigen::VectorXd& v, int b, Rng& rng) {
  if (v.norm() == 0.0) return Eigen::VectorXd::Zero(v.size());
  Eigen::VectorXd u(v.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = rng.uniform();
  return biased_bbit(v, b, u);
}

inline Eigen::VectorXd compress(const CompressorSpec& s, const Eigen::VectorXd& v, Rng& rng) {
  if (!v.allFinite()) throw InvalidArgument("compress: input is not finite");
  switch (s.kind) {
    case CompressorKind::kIdentity: return v;
    case CompressorKind::kTopK: return top_k(v, s.k);
    case CompressorKind::kBiasedBbit:
      if (s.b < 1) throw InvalidArgument("bbit needs b >= 1");
      return biased_bbit(v, s.b, rng);
  }
  return v;
}

struct ContractionEstimate {
  /// Max over directions of the mean of ||C(x) - x||^2 (unit ||x||).
  double phi_hat = 0.0;
  /// Standard error of the mean at the maximizing direction.
  double std_error = 0.0;
  int directions = 0;
  int samples = 0;
};

/// Monte-Carlo contraction estimate. The direction set is the all-equal
/// magnitude direction, e_1, and Gaussian random unit vectors.
inline ContractionEstimate estimate_contraction(const CompressorSpec& s, int d, int samples, Rng& rng,
                                                int directions = 32) {
  if (samples < 1000) throw InvalidArgument("estimate_contraction needs samples >= 1000");
  if (d < 1 || directions < 2) throw InvalidArgument("estimate_contraction needs d >= 1 and directions >= 2");
  ContractionEstimate best;
  best.directions = directions;
  best.samples = samples;
  best.phi_hat = -1.0;
  for (int dir = 0; dir < directions; ++dir) {
    Eigen::VectorXd x(d);
    if (dir == 0) {
      x.setConstant(1.0);
    } else if (dir == 1) {
      x.setZero();
      x(0) = 1.0;
    } else {
      for (int j = 0; j < d; ++j) x(j) = rng.normal();
    }
    x.normalize();
    double sum = 0.0, sum_sq = 0.0;
    for (int t = 0; t < samples; ++t) {
      const double e = (compress(s, x, rng) - x).squaredNorm();
      sum += e;
      sum_sq += e * e;
    }
    const double mean = sum / samples;
    const double var = std::max(0.0, sum_sq / samples - mean * mean) * samples / std::max(1, samples - 1);
    if (mean > best.phi_hat) {
      best.phi_hat = mean;
      best.std_error = std::sqrt(var / samples);
    }
  }
  return best;
}

}  // namespace cpgt
