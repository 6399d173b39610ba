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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cpgt/analysis.hpp"
#include "cpgt/compressor.hpp"
#include "cpgt/config.hpp"
#include "cpgt/error.hpp"
#include "cpgt/graph.hpp"
#include "cpgt/harness.hpp"
#include "cpgt/objective.hpp"
#include "cpgt/random.hpp"

namespace cpgt {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDiverged = 3;

struct CliOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<std::int64_t> horizon;
  std::string output_dir = "results";
  std::string preset;
  bool paper_scale = false;
  unsigned threads = 0;
  // compressor-test
  std::string compressor;
  int dimension = 0;
  int samples = 10000;
};

namespace detail {

// File config, then --paper-scale, then --set overrides (last wins), then
// the --seed / --trials / --horizon shorthands.
inline RunConfig resolve_config(const CliOptions& o) {
  Json j = o.config_path.empty() ? Json::object() : load_config_json(o.config_path);
  if (o.paper_scale) j = to_json(paper_scale(parse_config(j)));
  for (const auto& s : o.overrides) apply_override(j, s);
  RunConfig c = parse_config(j);
  if (o.seed) c.seed = *o.seed;
  if (o.trials) {
    if (*o.trials < 1) throw ConfigError("--trials: must be >= 1");
    c.trials = *o.trials;
  }
  if (o.horizon) {
    if (*o.horizon < 0) throw ConfigError("--horizon: must be >= 0");
    c.horizon = *o.horizon;
  }
  return c;
}

inline std::vector<Preset> resolve_presets(const std::string& name) {
  if (name.empty() || name == "paper-table1") return table1_presets();
  for (const auto& p : table1_presets())
    if (p.name == name) return {p};
  throw ConfigError("--preset: unknown preset '" + name + "' (expected paper-table1 or a single preset name)");
}

inline Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

inline std::filesystem::path output_path(const CliOptions& o, const std::string& file) {
  std::filesystem::create_directories(o.output_dir);
  return std::filesystem::path(o.output_dir) / file;
}

struct Resolved {
  RunConfig config;
  MixingMatrix graph;
  ProblemInstance problem;
};

inline Resolved resolve_all(const CliOptions& o) {
  Resolved r{resolve_config(o), {}, {}};
  try {
    r.graph = build_graph(r.config.graph);
    r.problem = build_problem(r.config.problem, r.graph.n);
    algorithm_params(r.config, r.graph.n).validate(r.graph.n);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return r;
}

/// phi for the analysis: exact for identity / TopK, Monte-Carlo for b-bit.
inline double analysis_phi(const CompressorSpec& spec, int d, std::uint64_t seed) {
  if (spec.kind != CompressorKind::kBiasedBbit || spec.phi_estimate) return declared_phi(spec, d);
  Rng rng(derive_seed(seed, 0x706869ULL));
  const ContractionEstimate e = estimate_contraction(spec, d, 10000, rng);
  return e.phi_hat;
}

inline int cmd_run(const CliOptions& o, std::ostream& out) {
  Resolved r = resolve_all(o);
  if (!o.preset.empty()) {
    const auto presets = resolve_presets(o.preset);
    if (presets.size() != 1) throw ConfigError("--preset: run takes a single named preset");
    r.config = apply_preset(r.config, presets.front());
  }
  const Trace t = run_trials(r.config, r.problem, r.graph, o.threads);
  const std::string stem = artifact_stem(r.config.name, r.config.seed);
  write_trace_csv(output_path(o, stem + ".csv").string(), t.mean);
  Json report = trace_summary_json(t);
  write_json(output_path(o, stem + "_report.json").string(), report);
  Json summary = {{"command", "run"},
                  {"name", t.name},
                  {"seed", r.config.seed},
                  {"trials_completed", t.trials.size()},
                  {"diverged_seeds", t.diverged_seeds},
                  {"final_mean_residual", report["final_mean_residual"]},
                  {"fit", report["fit"]},
                  {"csv", stem + ".csv"},
                  {"config", t.config}};
  out << summary.dump(2) << '\n';
  return t.diverged_seeds.empty() ? kExitOk : kExitDiverged;
}

inline int cmd_compare(const CliOptions& o, std::ostream& out) {
  const Resolved r = resolve_all(o);
  const Comparison c = compare_presets(r.problem, r.graph, r.config, resolve_presets(o.preset), o.threads);
  Json rows = Json::array();
  bool diverged = false;
  for (const auto& oc : c.outcomes) {
    const std::string stem = artifact_stem(oc.preset.name, r.config.seed);
    write_trace_csv(output_path(o, stem + ".csv").string(), oc.trace.mean);
    diverged = diverged || !oc.trace.diverged_seeds.empty();
    rows.push_back({{"preset", oc.preset.name},
                    {"compressor", oc.preset.compressor},
                    {"gamma", oc.preset.gamma},
                    {"alpha", oc.preset.alpha},
                    {"final_mean_residual", oc.final_mean_residual},
                    {"fit", fit_json(oc.fit)},
                    {"trials_completed", oc.trace.trials.size()},
                    {"diverged_seeds", oc.trace.diverged_seeds},
                    {"csv", stem + ".csv"}});
  }
  Json report = {{"command", "compare"},
                 {"seed", r.config.seed},
                 {"noise_coupled", c.noise_coupled},
                 {"x_inf_max_spread", c.x_inf_max_spread},
                 {"presets", rows},
                 {"config", to_json(r.config)}};
  write_json(output_path(o, artifact_stem("compare", r.config.seed) + "_report.json").string(), report);
  out << report.dump(2) << '\n';
  return diverged ? kExitDiverged : kExitOk;
}

inline int cmd_sweep(const CliOptions& o, std::ostream& out) {
  Resolved r = resolve_all(o);
  r.config.noise.d_eta_x = r.config.sweep_d_eta;
  r.config.noise.d_eta_y = r.config.sweep_d_eta;
  const SweepReport s = accuracy_sweep(r.problem, r.graph, r.config, r.config.sweep_q, resolve_presets(o.preset),
                                       o.threads);
  Json report = sweep_json(s);
  report["command"] = "sweep";
  report["seed"] = r.config.seed;
  report["config"] = to_json(r.config);
  write_json(output_path(o, artifact_stem("sweep", r.config.seed) + "_report.json").string(), report);
  out << report.dump(2) << '\n';
  std::size_t diverged = 0;
  for (const auto& row : s.rows) diverged += row.diverged;
  return diverged == 0 ? kExitOk : kExitDiverged;
}

inline int cmd_check(const CliOptions& o, std::ostream& out) {
  Resolved r = resolve_all(o);
  if (!o.preset.empty()) {
    const auto presets = resolve_presets(o.preset);
    if (presets.size() != 1) throw ConfigError("--preset: check takes a single named preset");
    r.config = apply_preset(r.config, presets.front());
  }
  const RunConfig& c = r.config;
  const CompressorSpec spec = parse_compressor(c.compressor);
  ConvergenceParams p;
  p.alpha = c.alpha;
  p.gamma = c.gamma;
  p.mu = r.problem.mu;
  p.L = r.problem.L;
  p.phi = analysis_phi(spec, r.problem.d, c.seed);
  p.rho_w = r.graph.rho_w;
  p.lambda_wi = r.graph.lambda_wi;
  p.n = r.graph.n;
  p.q_bar = c.noise.q;
  p.d_eta_bar = std::max(c.noise.d_eta_x, c.noise.d_eta_y);

  Json report = {{"command", "check"},
                 {"parameters",
                  {{"alpha", p.alpha},
                   {"gamma", p.gamma},
                   {"mu", p.mu},
                   {"L", p.L},
                   {"phi", p.phi},
                   {"rho_w", p.rho_w},
                   {"lambda_wi", p.lambda_wi},
                   {"n", p.n},
                   {"q_bar", p.q_bar},
                   {"d_eta_bar", p.d_eta_bar},
                   {"m", c.m}}}};

  Json bounds;
  try {
    const StepSizeBounds b = theorem1_bounds(p, c.m);
    const double alpha_at_gamma = alpha_step_bound(p, c.m, std::min(p.gamma, b.gamma_max));
    bounds = {{"gamma_max", b.gamma_max},
              {"alpha_max", b.alpha_max},
              {"alpha_max_at_gamma", alpha_at_gamma},
              {"kappa", b.kappa},
              {"s1", b.s1},
              {"s2", b.s2},
              {"gamma_exceeds_bound", p.gamma > b.gamma_max},
              {"alpha_exceeds_bound", p.alpha > alpha_at_gamma},
              {"certified", p.gamma <= b.gamma_max && p.alpha <= alpha_at_gamma}};
  } catch (const InvalidArgument& e) {
    bounds = {{"error", e.what()}};
  }
  report["theorem1_bounds"] = bounds;

  try {
    const ConvergenceSystem s = build_system(p);
    const ZetaCheck z = lemma2_zeta_check(s, c.m, default_zetas(p, c.m));
    report["G"] = matrix_json(s.G);
    report["vartheta"] = vector_json(s.vartheta);
    report["lambda_hat"] = s.lambda_hat;
    report["spectral_radius"] = spectral_radius(s);
    report["power_iteration_radius"] = power_iteration_radius(s.G);
    report["zeta_check"] = {{"pass", z.pass},
                            {"rate", z.rate},
                            {"zeta", vector_json(z.zeta)},
                            {"slack", vector_json(z.slack)}};
  } catch (const InvalidArgument& e) {
    report["system_error"] = e.what();
  }

  try {
    const PrivacyBudget pb = privacy_epsilon(p.alpha, p.L, c.noise.q, c.delta, c.noise.d_eta_x, c.noise.d_eta_y);
    report["privacy"] = {{"epsilon", pb.epsilon}, {"tau", pb.tau}, {"q_floor", pb.q_floor}, {"delta", pb.delta}};
  } catch (const InvalidArgument& e) {
    report["privacy"] = {{"error", e.what()}, {"q_floor", privacy_q_floor(p.alpha, p.L)}};
  }
  report["config"] = to_json(c);
  out << report.dump(2) << '\n';
  write_json(output_path(o, artifact_stem(c.name, c.seed) + "_check.json").string(), report);
  return kExitOk;
}

inline int cmd_compressor_test(const CliOptions& o, std::ostream& out) {
  const RunConfig c = resolve_config(o);
  const std::string text = o.compressor.empty() ? c.compressor : o.compressor;
  const int d = o.dimension > 0 ? o.dimension : c.problem.d;
  CompressorSpec spec;
  try {
    spec = parse_compressor(text);
    if (spec.kind == CompressorKind::kTopK && spec.k > d)
      throw InvalidArgument("top-k needs k <= d (k=" + std::to_string(spec.k) + ", d=" + std::to_string(d) + ")");
    if (o.samples < 1000) throw InvalidArgument("--samples must be >= 1000");
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  Rng rng(derive_seed(c.seed, static_cast<std::uint64_t>(Stream::kCompressor)));
  const ContractionEstimate e = estimate_contraction(spec, d, o.samples, rng);
  Json report = {{"command", "compressor-test"},
                 {"compressor", to_string(spec)},
                 {"d", d},
                 {"seed", c.seed},
                 {"phi_hat", e.phi_hat},
                 {"std_error", e.std_error},
                 {"upper_3se", e.phi_hat + 3.0 * e.std_error},
                 {"contractive", e.phi_hat + 3.0 * e.std_error < 1.0},
                 {"directions", e.directions},
                 {"samples", e.samples}};
  if (spec.kind != CompressorKind::kBiasedBbit) report["declared_phi"] = declared_phi(spec, d);
  if (spec.kind == CompressorKind::kBiasedBbit) report["xi"] = bbit_xi(spec.b, d);
  out << report.dump(2) << '\n';
  return kExitOk;
}

inline int cmd_graph_info(const CliOptions& o, std::ostream& out) {
  const RunConfig c = resolve_config(o);
  MixingMatrix w;
  try {
    w = build_graph(c.graph);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  Json edges = Json::array();
  for (const auto& [a, b] : w.edges) edges.push_back({a, b});
  Json report = {{"command", "graph-info"},
                 {"n", w.n},
                 {"edges", edges},
                 {"weights_rule", to_string(c.graph.rule)},
                 {"rho_w", w.rho_w},
                 {"lambda_wi", w.lambda_wi},
                 {"weights", matrix_json(w.weights)}};
  out << report.dump(2) << '\n';
  return kExitOk;
}

}  // namespace detail

/// Entry point shared by the `cpgt` binary and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compressed, differentially private gradient tracking experiments", "cpgt"};
  app.require_subcommand(1);
  CliOptions o;

  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--set", o.overrides, "Dotted-path override, e.g. noise.q=0.9 (repeatable, last wins)");
    sub->add_option("--seed", o.seed, "Master seed");
    sub->add_option("--output-dir", o.output_dir, "Directory for CSV/JSON artifacts");
  };
  auto add_experiment = [&o](CLI::App* sub) {
    sub->add_option("--trials", o.trials, "Monte-Carlo trial count T");
    sub->add_option("--horizon", o.horizon, "Iterations K per trial");
    sub->add_option("--threads", o.threads, "Worker threads (0 = hardware concurrency)");
    sub->add_flag("--paper-scale", o.paper_scale, "T=1000, K=6000, d_eta=100, q=0.99, untruncated noise");
  };

  CLI::App* run = app.add_subcommand("run", "Monte-Carlo run of one configuration");
  add_common(run);
  add_experiment(run);
  run->add_option("--preset", o.preset, "Preset name (CPGT-C1, CPGT-C2-1, CPGT-C2-2, DiaDSP)");

  CLI::App* sweep = app.add_subcommand("sweep", "Accuracy versus noise decay q");
  add_common(sweep);
  add_experiment(sweep);
  sweep->add_option("--preset", o.preset, "paper-table1 (default) or a single row name");

  CLI::App* compare = app.add_subcommand("compare", "Coupled-noise comparison of presets");
  add_common(compare);
  add_experiment(compare);
  compare->add_option("--preset", o.preset, "paper-table1 (default) or a single row name");

  CLI::App* check = app.add_subcommand("check", "Convergence and privacy analysis report");
  add_common(check);
  check->add_option("--preset", o.preset, "Preset name");

  CLI::App* ctest = app.add_subcommand("compressor-test", "Monte-Carlo contraction estimate");
  add_common(ctest);
  ctest->add_option("--compressor", o.compressor, "identity | topk:k=K | bbit:b=B");
  ctest->add_option("-d,--dimension", o.dimension, "Vector dimension (default problem.d)");
  ctest->add_option("--samples", o.samples, "Samples per direction (>= 1000)");

  CLI::App* ginfo = app.add_subcommand("graph-info", "Mixing matrix and spectral scalars");
  add_common(ginfo);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (run->parsed()) return detail::cmd_run(o, out);
    if (sweep->parsed()) return detail::cmd_sweep(o, out);
    if (compare->parsed()) return detail::cmd_compare(o, out);
    if (check->parsed()) return detail::cmd_check(o, out);
    if (ctest->parsed()) return detail::cmd_compressor_test(o, out);
    if (ginfo->parsed()) return detail::cmd_graph_info(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace cpgt
