#pragma once

// Sweeps over controller variants, demand levels, sample counts and seeds.
// Every (level, seed) pair shares one route set so variants are compared on
// identical traffic.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "tuseract/scenarios.hpp"
#include "tuseract/simulator.hpp"

namespace tuseract {

/// Deterministic stand-in for the solver time limit: a search of this many
/// nodes per second of allowance. Wall-clock limits would make runs depend
/// on machine load.
inline constexpr double kNodesPerSecond = 4000.0;

inline std::int64_t node_budget(double time_limit) {
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(time_limit * kNodesPerSecond)));
}

struct Variant {
  Algorithm algorithm = Algorithm::tuseract;
  bool coordinated = false;
};

inline Variant parse_variant(const std::string& name) {
  if (name == "UTuS") return {Algorithm::tuseract, false};
  if (name == "CTuS") return {Algorithm::tuseract, true};
  if (name == "USUR") return {Algorithm::baseline, false};
  if (name == "CSUR") return {Algorithm::baseline, true};
  throw ConfigError("unknown controller '" + name + "' (expected UTuS, CTuS, USUR or CSUR)");
}

struct SweepSpec {
  Scenario scenario;
  std::vector<std::string> controllers{"UTuS", "USUR"};
  std::vector<double> levels;  // empty: the scenario's levels
  std::vector<std::size_t> sample_counts{10};
  bool guided_search = false;
  std::vector<std::uint64_t> seeds{1};
  double solver_time_limit = 5.0;
  SimConfig sim;
};

inline void validate_sweep(const SweepSpec& spec) {
  validate_scenario(spec.scenario);
  if (spec.controllers.empty()) throw ConfigError("no controllers selected");
  for (const auto& c : spec.controllers) parse_variant(c);
  if (spec.seeds.empty()) throw ConfigError("no seeds selected");
  if (spec.sample_counts.empty()) throw ConfigError("no sample counts selected");
  for (auto s : spec.sample_counts)
    if (s < 1) throw ConfigError("sample counts must be >= 1");
  if (!(spec.solver_time_limit > 0.0)) throw ConfigError("solver time limit must be positive");
  for (double l : spec.levels)
    if (!(l > 0.0)) throw ConfigError("demand levels must be positive");
  auto unique = [](auto v) {
    std::sort(v.begin(), v.end());
    return std::adjacent_find(v.begin(), v.end()) == v.end();
  };
  if (!unique(spec.controllers)) throw ConfigError("duplicate controller");
  if (!unique(spec.levels)) throw ConfigError("duplicate demand level");
  if (!unique(spec.sample_counts)) throw ConfigError("duplicate sample count");
  if (!unique(spec.seeds)) throw ConfigError("duplicate seed");
  validate_sim_config(spec.sim);
}

inline ControllerParams controller_params(const Scenario& sc, Variant v, std::size_t samples, bool guided,
                                          double time_limit) {
  ControllerParams p;
  p.algorithm = v.algorithm;
  p.coordinated = v.coordinated;
  p.samples = v.algorithm == Algorithm::tuseract ? samples : 1;
  p.guided_search = guided && v.algorithm == Algorithm::tuseract;
  p.limits = SolveLimits{time_limit, node_budget(time_limit), false};
  p.horizon_cycles = sc.defaults.horizon_cycles;
  p.horizon_extension = sc.defaults.horizon_extension;
  p.merge_threshold = sc.defaults.merge_threshold;
  return p;
}

struct CellResult {
  std::string controller;
  bool guided = false;
  std::size_t samples = 1;  // 0 for baseline cells
  double level = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  RunMetrics metrics;

  std::string id() const {
    std::ostringstream os;
    os << controller << (guided ? "_gs" : "") << "_S" << samples << "_L" << level << "_seed" << seed;
    return os.str();
  }
};

struct SummaryRow {
  std::string controller;
  bool guided = false;
  std::size_t samples = 0;
  double level = 0.0;
  std::size_t cells = 0;
  std::size_t failed = 0;
  double delay_mean = 0.0;
  double delay_sd = 0.0;
  std::optional<double> change_mean;  // percent vs the matching baseline
  std::optional<double> change_sd;
};

struct SweepResult {
  std::vector<CellResult> cells;
  std::vector<SummaryRow> summary;
};

/// Mean and sample standard deviation (0 for fewer than two values).
inline std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

inline double percent_change(double value, double reference) {
  return reference == 0.0 ? 0.0 : 100.0 * (value - reference) / reference;
}

/// TuS rows are paired per seed with the baseline of the same coordination
/// mode, level and seed.
inline std::vector<SummaryRow> summarize(const std::vector<CellResult>& cells) {
  std::map<std::tuple<bool, double, std::uint64_t>, double> baseline;
  for (const auto& c : cells)
    if (!c.failed && parse_variant(c.controller).algorithm == Algorithm::baseline)
      baseline[{parse_variant(c.controller).coordinated, c.level, c.seed}] = c.metrics.mean_delay;

  std::vector<SummaryRow> rows;
  std::map<std::tuple<std::string, bool, std::size_t, double>, std::size_t> index;
  std::vector<std::vector<double>> delays, changes;
  for (const auto& c : cells) {
    auto key = std::make_tuple(c.controller, c.guided, c.samples, c.level);
    auto [it, fresh] = index.try_emplace(key, rows.size());
    if (fresh) {
      rows.push_back({c.controller, c.guided, c.samples, c.level});
      delays.emplace_back();
      changes.emplace_back();
    }
    SummaryRow& row = rows[it->second];
    ++row.cells;
    if (c.failed) {
      ++row.failed;
      continue;
    }
    delays[it->second].push_back(c.metrics.mean_delay);
    const Variant v = parse_variant(c.controller);
    if (v.algorithm == Algorithm::tuseract) {
      auto b = baseline.find({v.coordinated, c.level, c.seed});
      if (b != baseline.end()) changes[it->second].push_back(percent_change(c.metrics.mean_delay, b->second));
    }
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::tie(rows[r].delay_mean, rows[r].delay_sd) = mean_sd(delays[r]);
    if (!changes[r].empty()) {
      auto [m, sd] = mean_sd(changes[r]);
      rows[r].change_mean = m;
      rows[r].change_sd = sd;
    }
  }
  return rows;
}

/// Mean delays are written with round-trip precision so the summary can be
/// recomputed from this file alone.
inline void write_cells_csv(std::ostream& os, const std::vector<CellResult>& cells) {
  os << "controller,guided,samples,level,seed,status,vehicles_in,vehicles_out,mean_delay,solves,optimal,feasible,"
        "nodes,messages\n";
  const auto precision = os.precision(17);
  for (const auto& c : cells) {
    const auto& m = c.metrics;
    os << c.controller << ',' << (c.guided ? 1 : 0) << ',' << c.samples << ',' << c.level << ',' << c.seed << ','
       << (c.failed ? "failed" : "ok") << ',' << m.vehicles_in << ',' << m.vehicles_out << ',' << m.mean_delay << ','
       << m.solves << ',' << m.solves_optimal << ',' << m.solves_feasible << ',' << m.nodes << ',' << m.messages
       << '\n';
  }
  os.precision(precision);
}

/// The percentage columns appear only when some row has a baseline pair.
inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  const bool paired = std::any_of(rows.begin(), rows.end(), [](const SummaryRow& r) { return r.change_mean.has_value(); });
  os << "controller,guided,samples,level,cells,failed,mean_delay,sd_delay";
  if (paired) os << ",pct_change_mean,pct_change_sd";
  os << '\n' << std::fixed;
  for (const auto& r : rows) {
    os << r.controller << ',' << (r.guided ? 1 : 0) << ',' << r.samples << ',' << std::defaultfloat << r.level << std::fixed
       << ',' << r.cells << ',' << r.failed << ',' << std::setprecision(6) << r.delay_mean << ',' << r.delay_sd;
    if (paired) {
      if (r.change_mean) os << ',' << *r.change_mean << ',' << *r.change_sd;
      else os << ",,";
    }
    os << '\n';
  }
  os << std::defaultfloat;
}

inline nlohmann::json sweep_metadata(const SweepSpec& spec, const std::vector<double>& levels) {
  nlohmann::json j;
  j["schema_version"] = kScenarioSchemaVersion;
  j["scenario"] = spec.scenario.name;
  const auto& d = spec.scenario.defaults;
  j["defaults"] = {{"g_min", d.g_min},
                   {"g_max", d.g_max},
                   {"intergreen", d.intergreen},
                   {"horizon_cycles", d.horizon_cycles},
                   {"horizon_extension", d.horizon_extension},
                   {"merge_threshold", d.merge_threshold}};
  j["controllers"] = spec.controllers;
  j["levels"] = levels;
  j["sample_counts"] = spec.sample_counts;
  j["guided_search"] = spec.guided_search;
  j["seeds"] = spec.seeds;
  j["solver_time_limit"] = spec.solver_time_limit;
  j["node_budget"] = node_budget(spec.solver_time_limit);
  j["generation_duration"] = spec.scenario.demand.generation_duration;
  j["sim"] = {{"tick", spec.sim.tick},
              {"speed", spec.sim.speed},
              {"vehicle_length", spec.sim.vehicle_length},
              {"queue_gap", spec.sim.queue_gap},
              {"startup_lost_time", spec.sim.startup_lost_time},
              {"saturation_headway_per_lane", spec.sim.saturation_headway_per_lane},
              {"reveal_queued_turns", spec.sim.reveal_queued_turns}};
  return j;
}

namespace experiment_detail {

inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp);
    os << content;
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace experiment_detail

struct SweepHooks {
  Observers observers;  // attached to every episode
  std::function<void(const CellResult&)> on_cell;
};

/// Runs every cell. A failing episode is recorded in its cell and the sweep
/// continues. When `out_dir` is set, per-cell vehicle CSVs, cells.csv,
/// summary.csv, metadata.json and run.log are written there.
inline SweepResult run_sweep(const SweepSpec& spec, const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                             const SweepHooks& hooks = {}) {
  validate_sweep(spec);
  namespace fs = std::filesystem;
  const std::vector<double> levels = spec.levels.empty() ? spec.scenario.demand_levels : spec.levels;
  if (out_dir) fs::create_directories(*out_dir / "cells");
  std::ostringstream log;
  log << "scenario " << spec.scenario.name << '\n';

  SweepResult result;
  for (double level : levels)
    for (std::uint64_t seed : spec.seeds) {
      std::vector<SimVehicle> routes;
      std::string route_error;
      try {
        routes = generate_routes(spec.scenario.topology, spec.scenario.demand, level, seed);
      } catch (const std::exception& e) {
        route_error = e.what();
      }
      SimConfig sim = spec.sim;
      sim.seed = derive_seed(seed, {static_cast<std::uint64_t>(std::llround(level))});
      for (const auto& name : spec.controllers) {
        const Variant v = parse_variant(name);
        const std::vector<std::size_t> counts =
            v.algorithm == Algorithm::tuseract ? spec.sample_counts : std::vector<std::size_t>{0};
        for (std::size_t samples : counts) {
          CellResult cell;
          cell.controller = name;
          cell.guided = spec.guided_search && v.algorithm == Algorithm::tuseract;
          cell.samples = samples;
          cell.level = level;
          cell.seed = seed;
          const auto t0 = std::chrono::steady_clock::now();
          if (!route_error.empty()) {
            cell.failed = true;
            cell.error = route_error;
          } else {
            try {
              const auto params = controller_params(spec.scenario, v, samples, spec.guided_search,
                                                     spec.solver_time_limit);
              cell.metrics = run_episode(spec.scenario.topology, routes, params, sim, hooks.observers);
              if (!cell.metrics.completed) {
                cell.failed = true;
                cell.error = cell.metrics.diagnostics;
              }
            } catch (const std::exception& e) {
              cell.failed = true;
              cell.error = e.what();
            }
          }
          const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          log << cell.id() << ' ' << (cell.failed ? "FAILED " + cell.error : "ok") << " mean_delay "
              << cell.metrics.mean_delay << " wall " << wall << "s\n";
          if (out_dir) {
            std::ostringstream csv;
            write_vehicle_csv(csv, cell.metrics);
            experiment_detail::write_atomically(*out_dir / "cells" / (cell.id() + ".csv"), csv.str());
          }
          if (hooks.on_cell) hooks.on_cell(cell);
          result.cells.push_back(std::move(cell));
        }
      }
    }
  result.summary = summarize(result.cells);
  if (out_dir) {
    std::ostringstream cells, summary;
    write_cells_csv(cells, result.cells);
    write_summary_csv(summary, result.summary);
    experiment_detail::write_atomically(*out_dir / "cells.csv", cells.str());
    experiment_detail::write_atomically(*out_dir / "summary.csv", summary.str());
    experiment_detail::write_atomically(*out_dir / "metadata.json", sweep_metadata(spec, levels).dump(2) + "\n");
    experiment_detail::write_atomically(*out_dir / "run.log", log.str());
  }
  return result;
}

}  // namespace tuseract
