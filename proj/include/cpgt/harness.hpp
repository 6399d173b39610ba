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
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cpgt/algorithm.hpp"
#include "cpgt/config.hpp"
#include "cpgt/error.hpp"
#include "cpgt/graph.hpp"
#include "cpgt/noise.hpp"
#include "cpgt/objective.hpp"

namespace cpgt {

/// One CSV row: metrics of x(k) against the trial's own fixed point.
struct TraceRecord {
  std::int64_t k = 0;
  double residual = 0.0;       // ||x(k) - 1 x_inf^T||_F
  double consensus_err = 0.0;  // ||x - xbar||_F
  double tracker_err = 0.0;    // ||y - ybar||_F
  double sigma_x = 0.0;
  double sigma_y = 0.0;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct TrialTrace {
  std::int64_t trial = 0;
  std::uint64_t seed = 0;
  std::vector<TraceRecord> records;
  Eigen::MatrixXd final_x;
  Eigen::VectorXd noise_total;  // sum over agents and time of eta_y
  Eigen::VectorXd x_inf;
  std::uint64_t noise_checksum = 0;
  double max_conservation = 0.0;  // over k = 0..K
  // Bound on E|.| per coordinate of the untracked part of the noise sum
  // (zero for schedules truncated before the horizon).
  double x_inf_tail_bound = 0.0;
};

struct Trace {
  std::string name;
  std::vector<TraceRecord> mean;  // arithmetic mean over successful trials
  std::vector<TrialTrace> trials;
  std::vector<std::uint64_t> diverged_seeds;
  std::vector<std::int64_t> diverged_at;
  Json config;
};

inline unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

/// x-independent fixed point of one realization:
/// sum_i grad f_i(x_inf) = -(sum_i sum_k eta_y_i(k)).
inline Eigen::VectorXd fixed_point(const ProblemInstance& problem, const NoiseAccumulator& acc) {
  return solve_shifted_optimum(problem, -acc.total());
}

inline double stacked_distance(const Eigen::MatrixXd& x, const Eigen::VectorXd& v) {
  return (x.rowwise() - v.transpose()).norm();
}

inline TrialTrace run_trial(const ProblemInstance& problem, const MixingMatrix& w, const AlgorithmParams& params,
                            std::uint64_t master_seed, std::int64_t trial) {
  TrialTrace t;
  t.trial = trial;
  t.seed = trial_seed(master_seed, trial);
  RunResult r = run(problem, w, params, t.seed);
  t.noise_total = r.final_state.noise_acc.total();
  t.x_inf = fixed_point(problem, r.final_state.noise_acc);
  t.noise_checksum = r.final_state.noise_acc.checksum;
  t.final_x = r.final_state.x;
  t.max_conservation = r.initial_conservation;
  t.records.reserve(r.records.size());
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    const auto& rec = r.records[i];
    t.records.push_back({rec.k, stacked_distance(r.iterates[i], t.x_inf), rec.consensus_err, rec.tracker_err,
                         rec.sigma_x, rec.sigma_y});
    t.max_conservation = std::max(t.max_conservation, rec.conservation);
  }
  for (const auto& s : params.schedule)
    t.x_inf_tail_bound += tail_bound(s, NoiseChannel::kTracker, params.horizon);
  return t;
}

inline std::vector<TraceRecord> mean_records(const std::vector<TrialTrace>& trials) {
  if (trials.empty()) return {};
  const std::size_t len = trials.front().records.size();
  std::vector<TraceRecord> mean(len);
  for (std::size_t k = 0; k < len; ++k) {
    TraceRecord m;
    m.k = trials.front().records[k].k;
    for (const auto& t : trials) {
      const auto& r = t.records[k];
      m.residual += r.residual;
      m.consensus_err += r.consensus_err;
      m.tracker_err += r.tracker_err;
      m.sigma_x += r.sigma_x;
      m.sigma_y += r.sigma_y;
    }
    const double count = static_cast<double>(trials.size());
    m.residual /= count;
    m.consensus_err /= count;
    m.tracker_err /= count;
    m.sigma_x /= count;
    m.sigma_y /= count;
    mean[k] = m;
  }
  return mean;
}

/// Runs T seeded trials in parallel; results are stored and reduced in
/// trial-index order, so the thread count never changes the output.
inline Trace run_trials(const ProblemInstance& problem, const MixingMatrix& w, const AlgorithmParams& params,
                        std::uint64_t master_seed, int trials, unsigned threads = 0) {
  if (trials < 1) throw InvalidArgument("run_trials needs T >= 1");
  params.validate(problem.n);
  std::vector<std::optional<TrialTrace>> slots(static_cast<std::size_t>(trials));
  std::vector<std::int64_t> failed_at(static_cast<std::size_t>(trials), -1);
  std::vector<std::string> errors(static_cast<std::size_t>(trials));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int t = next++; t < trials; t = next++) {
      try {
        slots[static_cast<std::size_t>(t)] = run_trial(problem, w, params, master_seed, t);
      } catch (const DivergenceError& e) {
        failed_at[static_cast<std::size_t>(t)] = e.iteration();
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(t)] = e.what();
      }
    }
  };
  const unsigned pool = std::min<unsigned>(threads == 0 ? default_threads() : threads, static_cast<unsigned>(trials));
  if (pool <= 1) {
    worker();
  } else {
    std::vector<std::jthread> workers;
    for (unsigned i = 0; i < pool; ++i) workers.emplace_back(worker);
  }
  Trace out;
  for (int t = 0; t < trials; ++t) {
    const auto i = static_cast<std::size_t>(t);
    if (!errors[i].empty()) throw InvalidArgument("trial " + std::to_string(t) + ": " + errors[i]);
    if (slots[i]) {
      out.trials.push_back(std::move(*slots[i]));
    } else {
      out.diverged_seeds.push_back(trial_seed(master_seed, t));
      out.diverged_at.push_back(failed_at[i]);
    }
  }
  out.mean = mean_records(out.trials);
  return out;
}

inline Trace run_trials(const RunConfig& c, const ProblemInstance& problem, const MixingMatrix& w,
                        unsigned threads = 0) {
  Trace t = run_trials(problem, w, algorithm_params(c, problem.n), c.seed, c.trials, threads);
  t.name = c.name;
  t.config = to_json(c);
  return t;
}

struct LogLinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
  std::int64_t first_k = 0;
  std::int64_t last_k = 0;
};

/// Least-squares fit of log(residual) against k over the iterations whose
/// residual exceeds 10x the final residual.
inline LogLinearFit fit_log_residual(const std::vector<TraceRecord>& series) {
  LogLinearFit fit;
  if (series.size() < 2) return fit;
  const double floor = 10.0 * series.back().residual;
  std::vector<double> xs, ys;
  for (const auto& r : series) {
    if (r.residual > floor && r.residual > 0.0 && std::isfinite(r.residual)) {
      xs.push_back(static_cast<double>(r.k));
      ys.push_back(std::log(r.residual));
    }
  }
  fit.points = xs.size();
  if (xs.size() < 2) return fit;
  fit.first_k = static_cast<std::int64_t>(xs.front());
  fit.last_k = static_cast<std::int64_t>(xs.back());
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (fit.intercept + fit.slope * xs[i]);
    ss_res += e * e;
  }
  fit.r_squared = syy > 0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

struct PresetOutcome {
  Preset preset;
  Trace trace;
  LogLinearFit fit;
  double final_mean_residual = 0.0;
};

struct Comparison {
  std::vector<PresetOutcome> outcomes;
  bool noise_coupled = true;     // identical noise checksums across presets, trial by trial
  double x_inf_max_spread = 0.0;  // max over trials of max-min distance between presets' x_inf
};

/// Runs every preset on the same master seed, hence the same noise streams.
inline Comparison compare_presets(const ProblemInstance& problem, const MixingMatrix& w, const RunConfig& base,
                                  const std::vector<Preset>& presets, unsigned threads = 0) {
  Comparison out;
  for (const auto& p : presets) {
    PresetOutcome o;
    o.preset = p;
    o.trace = run_trials(apply_preset(base, p), problem, w, threads);
    o.fit = fit_log_residual(o.trace.mean);
    o.final_mean_residual = o.trace.mean.empty() ? 0.0 : o.trace.mean.back().residual;
    out.outcomes.push_back(std::move(o));
  }
  if (out.outcomes.empty()) return out;
  const auto& ref = out.outcomes.front().trace.trials;
  for (const auto& o : out.outcomes) {
    if (o.trace.trials.size() != ref.size()) {
      out.noise_coupled = false;
      continue;
    }
    for (std::size_t t = 0; t < ref.size(); ++t) {
      if (o.trace.trials[t].noise_checksum != ref[t].noise_checksum) out.noise_coupled = false;
      out.x_inf_max_spread = std::max(out.x_inf_max_spread, (o.trace.trials[t].x_inf - ref[t].x_inf).norm());
    }
  }
  return out;
}

struct SweepRow {
  double q = 0.0;
  double accuracy = 0.0;  // mean over trials of ||1 (x_inf - x*)^T||_F
  std::vector<std::string> presets;
  std::vector<double> preset_accuracy;        // mean ||1 x_inf^T - 1 x*^T||_F per preset
  std::vector<double> preset_final_accuracy;  // mean ||x(K) - 1 x*^T||_F per preset
  double spread = 0.0;                        // max-min of preset_accuracy
  double final_spread = 0.0;                  // max-min of preset_final_accuracy
  std::size_t diverged = 0;
  Json config;
};

struct SweepReport {
  std::vector<SweepRow> rows;
};

inline SweepReport accuracy_sweep(const ProblemInstance& problem, const MixingMatrix& w, const RunConfig& base,
                                  const std::vector<double>& q_values, const std::vector<Preset>& presets,
                                  unsigned threads = 0) {
  if (presets.empty()) throw InvalidArgument("accuracy_sweep needs at least one preset");
  for (double q : q_values)
    if (!(q > 0.0 && q < 1.0)) throw InvalidArgument("accuracy_sweep: q must lie in (0,1)");
  SweepReport report;
  const double sqrt_n = std::sqrt(static_cast<double>(problem.n));
  for (double q : q_values) {
    SweepRow row;
    row.q = q;
    RunConfig c = base;
    c.noise.q = q;
    row.config = to_json(c);
    for (const auto& p : presets) {
      const Trace t = run_trials(apply_preset(c, p), problem, w, threads);
      row.diverged += t.diverged_seeds.size();
      double acc = 0.0, final_acc = 0.0;
      for (const auto& tr : t.trials) {
        acc += sqrt_n * (tr.x_inf - problem.x_star).norm();
        final_acc += stacked_distance(tr.final_x, problem.x_star);
      }
      const double count = std::max<double>(1.0, static_cast<double>(t.trials.size()));
      row.presets.push_back(p.name);
      row.preset_accuracy.push_back(acc / count);
      row.preset_final_accuracy.push_back(final_acc / count);
    }
    row.accuracy = row.preset_accuracy.front();
    const auto [lo, hi] = std::minmax_element(row.preset_accuracy.begin(), row.preset_accuracy.end());
    row.spread = *hi - *lo;
    const auto [flo, fhi] = std::minmax_element(row.preset_final_accuracy.begin(), row.preset_final_accuracy.end());
    row.final_spread = *fhi - *flo;
    report.rows.push_back(std::move(row));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Persistence

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline constexpr const char* kTraceHeader = "k,residual,consensus_err,tracker_err,sigma_x,sigma_y";

inline void write_trace_csv(const std::string& path, const std::vector<TraceRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open " + path + " for writing");
  out << kTraceHeader << '\n';
  for (const auto& r : records) {
    out << r.k << ',' << format_double(r.residual) << ',' << format_double(r.consensus_err) << ','
        << format_double(r.tracker_err) << ',' << format_double(r.sigma_x) << ',' << format_double(r.sigma_y)
        << '\n';
  }
}

inline std::vector<TraceRecord> read_trace_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) throw InvalidArgument(path + ": unexpected trace header");
  std::vector<TraceRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw InvalidArgument(path + ": malformed trace row '" + line + "'");
    out.push_back({std::stoll(cells[0]), std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3]),
                   std::stod(cells[4]), std::stod(cells[5])});
  }
  return out;
}

inline Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Json fit_json(const LogLinearFit& f) {
  return {{"slope", f.slope},     {"intercept", f.intercept}, {"r_squared", f.r_squared},
          {"points", f.points},   {"first_k", f.first_k},     {"last_k", f.last_k}};
}

inline Json trace_summary_json(const Trace& t) {
  Json j;
  j["name"] = t.name;
  j["config"] = t.config;
  j["trials_completed"] = t.trials.size();
  j["diverged_seeds"] = t.diverged_seeds;
  j["diverged_at"] = t.diverged_at;
  j["final_mean_residual"] = t.mean.empty() ? 0.0 : t.mean.back().residual;
  j["fit"] = fit_json(fit_log_residual(t.mean));
  Json per_trial = Json::array();
  for (const auto& tr : t.trials) {
    per_trial.push_back({{"trial", tr.trial},
                         {"seed", tr.seed},
                         {"noise_checksum", tr.noise_checksum},
                         {"max_conservation_residual", tr.max_conservation},
                         {"x_inf_tail_bound", tr.x_inf_tail_bound},
                         {"final_residual", tr.records.empty() ? 0.0 : tr.records.back().residual},
                         {"x_inf", vector_json(tr.x_inf)}});
  }
  j["trials"] = per_trial;
  return j;
}

inline Json sweep_json(const SweepReport& s) {
  Json rows = Json::array();
  for (const auto& r : s.rows) {
    rows.push_back({{"q", r.q},
                    {"accuracy", r.accuracy},
                    {"presets", r.presets},
                    {"preset_accuracy", r.preset_accuracy},
                    {"preset_final_accuracy", r.preset_final_accuracy},
                    {"spread", r.spread},
                    {"final_spread", r.final_spread},
                    {"diverged", r.diverged},
                    {"config", r.config}});
  }
  return {{"rows", rows}};
}

inline void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

inline std::string artifact_stem(const std::string& name, std::uint64_t seed) {
  return name + "_seed" + std::to_string(seed);
}

}  // namespace cpgt
