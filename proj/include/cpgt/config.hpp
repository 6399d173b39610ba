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

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "cpgt/algorithm.hpp"
#include "cpgt/compressor.hpp"
#include "cpgt/error.hpp"
#include "cpgt/graph.hpp"
#include "cpgt/noise.hpp"
#include "cpgt/objective.hpp"
#include "json.hpp"

namespace cpgt {

using Json = nlohmann::ordered_json;

struct GraphConfig {
  std::string preset = "paper-fig1";  // empty when an explicit edge list is given
  int n = 0;
  EdgeList edges;
  WeightRule rule = WeightRule::kMetropolis;
};

struct ProblemConfig {
  int d = 10;
  int m_per_agent = 6;
  double ridge = 1e-3;
  std::uint64_t seed = 1;
  double cost_scale = 1.0;
  bool normalize_smoothness = true;
};

struct NoiseConfig {
  double d_eta_x = 1.0;
  double d_eta_y = 1.0;
  double q = 0.9;
  std::optional<std::int64_t> truncation_k = 200;
};

/// Everything needed to reproduce a run bit-exactly.
struct RunConfig {
  std::string name = "run";
  std::uint64_t seed = 1;
  int trials = 20;
  std::int64_t horizon = 3000;
  GraphConfig graph;
  ProblemConfig problem;
  double alpha = 0.1;
  double gamma = 0.05;
  std::string compressor = "topk:k=2";
  double m = 0.5;
  NoiseConfig noise;
  double delta = 1.0;
  std::vector<double> sweep_q = {0.18, 0.26, 0.34, 0.42, 0.5, 0.58, 0.66, 0.74, 0.82, 0.9};
  double sweep_d_eta = 5.0;
};

namespace detail {

inline void reject_unknown(const Json& obj, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  const std::set<std::string_view> keys(allowed);
  for (const auto& [key, _] : obj.items())
    if (!keys.count(key)) throw ConfigError(std::string(where) + "." + key + ": unknown field");
}

template <typename T>
void read_field(const Json& obj, std::string_view where, const char* key, T& out) {
  if (!obj.contains(key)) return;
  const Json& v = obj.at(key);
  const std::string path = std::string(where) + "." + key;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path + ": expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
          throw ConfigError(path + ": expected a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path + ": expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path + ": expected a string");
    }
    out = v.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace detail

inline RunConfig parse_config(const Json& j) {
  using detail::read_field;
  RunConfig c;
  detail::reject_unknown(j, "config",
                         {"name", "seed", "trials", "horizon", "graph", "problem", "algorithm", "noise", "privacy", "sweep"});
  read_field(j, "config", "name", c.name);
  read_field(j, "config", "seed", c.seed);
  read_field(j, "config", "trials", c.trials);
  read_field(j, "config", "horizon", c.horizon);
  if (c.trials < 1) throw ConfigError("config.trials: must be >= 1");
  if (c.horizon < 0) throw ConfigError("config.horizon: must be >= 0");

  if (j.contains("graph")) {
    const Json& g = j.at("graph");
    detail::reject_unknown(g, "graph", {"preset", "n", "edges", "weights"});
    std::string weights = to_string(c.graph.rule);
    read_field(g, "graph", "weights", weights);
    try {
      c.graph.rule = parse_weight_rule(weights);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("graph.weights: ") + e.what());
    }
    if (g.contains("edges")) {
      c.graph.preset.clear();
      read_field(g, "graph", "n", c.graph.n);
      if (!g.contains("n")) throw ConfigError("graph.n: required with an explicit edge list");
      if (g.contains("preset")) throw ConfigError("graph.preset: cannot be combined with graph.edges");
      const Json& e = g.at("edges");
      if (!e.is_array()) throw ConfigError("graph.edges: expected an array of [i, j] pairs");
      for (std::size_t k = 0; k < e.size(); ++k) {
        const Json& pair = e[k];
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() || !pair[1].is_number_integer())
          throw ConfigError("graph.edges[" + std::to_string(k) + "]: expected [i, j] integers");
        c.graph.edges.emplace_back(pair[0].get<int>(), pair[1].get<int>());
      }
    } else {
      read_field(g, "graph", "preset", c.graph.preset);
      if (g.contains("n")) throw ConfigError("graph.n: only valid together with graph.edges");
    }
  }

  if (j.contains("problem")) {
    const Json& p = j.at("problem");
    detail::reject_unknown(p, "problem", {"d", "m_per_agent", "ridge", "seed", "cost_scale", "normalize_smoothness"});
    read_field(p, "problem", "d", c.problem.d);
    read_field(p, "problem", "m_per_agent", c.problem.m_per_agent);
    read_field(p, "problem", "ridge", c.problem.ridge);
    read_field(p, "problem", "seed", c.problem.seed);
    read_field(p, "problem", "cost_scale", c.problem.cost_scale);
    read_field(p, "problem", "normalize_smoothness", c.problem.normalize_smoothness);
  }

  if (j.contains("algorithm")) {
    const Json& a = j.at("algorithm");
    detail::reject_unknown(a, "algorithm", {"alpha", "gamma", "compressor", "m"});
    read_field(a, "algorithm", "alpha", c.alpha);
    read_field(a, "algorithm", "gamma", c.gamma);
    read_field(a, "algorithm", "compressor", c.compressor);
    read_field(a, "algorithm", "m", c.m);
    try {
      parse_compressor(c.compressor);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("algorithm.compressor: ") + e.what());
    }
    if (!(c.alpha > 0.0)) throw ConfigError("algorithm.alpha: must be > 0");
    if (!(c.gamma > 0.0 && c.gamma <= 1.0)) throw ConfigError("algorithm.gamma: must lie in (0,1]");
    if (!(c.m > 0.0 && c.m < 1.0)) throw ConfigError("algorithm.m: must lie in (0,1)");
  }

  if (j.contains("noise")) {
    const Json& n = j.at("noise");
    detail::reject_unknown(n, "noise", {"d_eta_x", "d_eta_y", "q", "truncation_k"});
    read_field(n, "noise", "d_eta_x", c.noise.d_eta_x);
    read_field(n, "noise", "d_eta_y", c.noise.d_eta_y);
    read_field(n, "noise", "q", c.noise.q);
    if (n.contains("truncation_k")) {
      if (n.at("truncation_k").is_null()) {
        c.noise.truncation_k.reset();
      } else {
        std::int64_t t = 0;
        read_field(n, "noise", "truncation_k", t);
        c.noise.truncation_k = t;
      }
    }
    NoiseSchedule s{c.noise.d_eta_x, c.noise.d_eta_y, c.noise.q, c.noise.truncation_k};
    try {
      s.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("noise: ") + e.what());
    }
  }

  if (j.contains("privacy")) {
    detail::reject_unknown(j.at("privacy"), "privacy", {"delta"});
    read_field(j.at("privacy"), "privacy", "delta", c.delta);
  }
  if (j.contains("sweep")) {
    const Json& s = j.at("sweep");
    detail::reject_unknown(s, "sweep", {"q_values", "d_eta"});
    if (s.contains("q_values")) {
      if (!s.at("q_values").is_array()) throw ConfigError("sweep.q_values: expected an array of numbers");
      c.sweep_q.clear();
      for (const auto& q : s.at("q_values")) {
        if (!q.is_number()) throw ConfigError("sweep.q_values: expected an array of numbers");
        c.sweep_q.push_back(q.get<double>());
      }
    }
    read_field(s, "sweep", "d_eta", c.sweep_d_eta);
  }
  return c;
}

inline Json to_json(const RunConfig& c) {
  Json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["trials"] = c.trials;
  j["horizon"] = c.horizon;
  Json g;
  if (c.graph.preset.empty()) {
    g["n"] = c.graph.n;
    Json edges = Json::array();
    for (const auto& [a, b] : c.graph.edges) edges.push_back({a, b});
    g["edges"] = edges;
  } else {
    g["preset"] = c.graph.preset;
  }
  g["weights"] = to_string(c.graph.rule);
  j["graph"] = g;
  j["problem"] = {{"d", c.problem.d},
                  {"m_per_agent", c.problem.m_per_agent},
                  {"ridge", c.problem.ridge},
                  {"seed", c.problem.seed},
                  {"cost_scale", c.problem.cost_scale},
                  {"normalize_smoothness", c.problem.normalize_smoothness}};
  j["algorithm"] = {{"alpha", c.alpha}, {"gamma", c.gamma}, {"compressor", c.compressor}, {"m", c.m}};
  Json noise = {{"d_eta_x", c.noise.d_eta_x}, {"d_eta_y", c.noise.d_eta_y}, {"q", c.noise.q}};
  noise["truncation_k"] = c.noise.truncation_k ? Json(*c.noise.truncation_k) : Json(nullptr);
  j["noise"] = noise;
  j["privacy"] = {{"delta", c.delta}};
  j["sweep"] = {{"q_values", c.sweep_q}, {"d_eta", c.sweep_d_eta}};
  return j;
}

/// Sets a dotted path ("noise.q") to a value. The value text is parsed as
/// JSON when possible and kept as a string otherwise.
inline void apply_override(Json& j, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw ConfigError("override '" + std::string(assignment) + "': expected path=value");
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  Json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + path + "': empty path component");
    if (!node->is_object()) throw ConfigError("override '" + path + "': '" + key + "' is not inside an object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

inline Json load_config_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path + ": not valid JSON");
  return j;
}

inline MixingMatrix build_graph(const GraphConfig& g) {
  if (!g.preset.empty()) return graph_preset(g.preset, g.rule);
  return build_mixing_matrix(g.edges, g.n, g.rule);
}

inline ProblemInstance build_problem(const ProblemConfig& p, int n) {
  return generate_problem(n, p.d, p.m_per_agent, p.ridge, p.seed,
                          GeneratorOptions{p.cost_scale, p.normalize_smoothness});
}

inline AlgorithmParams algorithm_params(const RunConfig& c, int n) {
  AlgorithmParams a;
  a.alpha = c.alpha;
  a.gamma = c.gamma;
  a.compressor = parse_compressor(c.compressor);
  a.schedule = homogeneous_schedule(n, NoiseSchedule{c.noise.d_eta_x, c.noise.d_eta_y, c.noise.q, c.noise.truncation_k});
  a.horizon = c.horizon;
  return a;
}

/// A named parameter row: compressor, gamma, alpha.
struct Preset {
  std::string name;
  std::string compressor;
  double gamma;
  double alpha;
};

inline std::vector<Preset> table1_presets() {
  return {{"CPGT-C1", "topk:k=2", 0.05, 0.1},
          {"CPGT-C2-1", "bbit:b=2", 0.2, 0.1},
          {"CPGT-C2-2", "bbit:b=2", 0.05, 0.15},
          {"DiaDSP", "identity", 1.0, 0.15}};
}

inline RunConfig apply_preset(RunConfig c, const Preset& p) {
  c.name = p.name;
  c.compressor = p.compressor;
  c.gamma = p.gamma;
  c.alpha = p.alpha;
  return c;
}

/// Reference-scale noise and trial counts (T = 1000, d_eta = 100, q = 0.99, untruncated).
inline RunConfig paper_scale(RunConfig c) {
  c.trials = 1000;
  c.horizon = 6000;
  c.noise.d_eta_x = 100.0;
  c.noise.d_eta_y = 100.0;
  c.noise.q = 0.99;
  c.noise.truncation_k.reset();
  return c;
}

}  // namespace cpgt
