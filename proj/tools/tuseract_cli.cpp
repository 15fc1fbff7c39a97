#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "tuseract/experiment.hpp"
#include "tuseract/scenarios.hpp"

namespace fs = std::filesystem;
using namespace tuseract;

namespace {

// A built-in name or a path to a scenario file.
Scenario load_scenario(const std::string& what) {
  for (const auto& n : scenario_names())
    if (n == what) return build_scenario(n);
  std::ifstream is(what);
  if (!is) throw ConfigError("'" + what + "' is neither a built-in scenario nor a readable file");
  return read_scenario(is);
}

// "1-20", "3,5,8" or a mix such as "1-3,10".
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    try {
      const auto dash = part.find('-');
      if (dash == std::string::npos) {
        out.push_back(std::stoull(part));
      } else {
        const auto lo = std::stoull(part.substr(0, dash));
        const auto hi = std::stoull(part.substr(dash + 1));
        if (hi < lo) throw ConfigError("empty seed range " + part);
        for (auto s = lo; s <= hi; ++s) out.push_back(s);
      }
    } catch (const std::logic_error&) {
      throw ConfigError("bad seed list '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("no seeds in '" + text + "'");
  return out;
}

struct Common {
  std::string scenario = "isolated";
  std::vector<std::string> controllers{"UTuS"};
  std::vector<double> levels;
  std::vector<std::size_t> samples{10};
  std::string seeds = "1";
  bool guided = false;
  double time_limit = 5.0;
  double tick = 0.5;
  bool hide_queued_turns = false;
  std::string out;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--scenario", c.scenario, "built-in name (isolated, arterial_1x5, grid_5x5) or scenario file");
  app->add_option("--controller", c.controllers, "UTuS, CTuS, USUR or CSUR")->delimiter(',');
  app->add_option("--level", c.levels, "demand level in vehicles per hour")->delimiter(',');
  app->add_option("--samples", c.samples, "sample counts for TuS controllers")->delimiter(',');
  app->add_option("--seeds", c.seeds, "seed list, e.g. 1-20 or 1,4,9");
  app->add_flag("--guided-search", c.guided, "warm-start each solve from the previous plan");
  app->add_option("--time-limit", c.time_limit, "solver allowance per solve in seconds");
  app->add_option("--tick", c.tick, "simulation step in seconds");
  app->add_flag("--hide-queued-turns", c.hide_queued_turns, "do not reveal the movement of queued vehicles");
  app->add_option("--out", c.out, "output directory")->required();
}

SweepSpec make_spec(const Common& c) {
  SweepSpec spec;
  spec.scenario = load_scenario(c.scenario);
  spec.controllers = c.controllers;
  spec.levels = c.levels;
  spec.sample_counts = c.samples;
  spec.guided_search = c.guided;
  spec.seeds = parse_seeds(c.seeds);
  spec.solver_time_limit = c.time_limit;
  spec.sim.tick = c.tick;
  spec.sim.reveal_queued_turns = !c.hide_queued_turns;
  return spec;
}

void print_summary(const std::vector<SummaryRow>& rows) {
  write_summary_csv(std::cout, rows);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Schedule-driven signal control under turn uncertainty"};
  app.require_subcommand(1);

  std::string scenario_name = "isolated";
  std::string scenario_out;
  auto* scenario = app.add_subcommand("scenario", "write a built-in scenario file");
  scenario->add_option("--scenario", scenario_name, "isolated, arterial_1x5 or grid_5x5");
  scenario->add_option("--out", scenario_out, "file to write (stdout if omitted)");

  Common run_opts;
  bool trace = false;
  auto* run = app.add_subcommand("run", "simulate a single episode");
  add_common(run, run_opts);
  run->add_flag("--trace", trace, "also write the per-tick signal state");

  Common sweep_opts;
  sweep_opts.controllers = {"UTuS", "USUR"};
  auto* sweep = app.add_subcommand("sweep", "run the controller x level x samples x seed matrix");
  add_common(sweep, sweep_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*scenario) {
      const Scenario s = build_scenario(scenario_name);
      if (scenario_out.empty()) {
        write_scenario(std::cout, s);
      } else {
        std::ofstream os(scenario_out);
        if (!os) throw ConfigError("cannot write " + scenario_out);
        write_scenario(os, s);
      }
      return 0;
    }

    if (*run) {
      SweepSpec spec = make_spec(run_opts);
      if (spec.controllers.size() != 1) throw ConfigError("run takes exactly one controller");
      if (spec.sample_counts.size() != 1) throw ConfigError("run takes exactly one sample count");
      if (spec.seeds.size() != 1) throw ConfigError("run takes exactly one seed");
      if (spec.levels.size() > 1) throw ConfigError("run takes exactly one level");
      validate_sweep(spec);
      const double level = spec.levels.empty() ? spec.scenario.demand_levels.front() : spec.levels.front();
      const auto routes = generate_routes(spec.scenario.topology, spec.scenario.demand, level, spec.seeds.front());
      SimConfig sim = spec.sim;
      sim.seed = derive_seed(spec.seeds.front(), {static_cast<std::uint64_t>(std::llround(level))});
      sim.record_trace = trace;
      const auto params = controller_params(spec.scenario, parse_variant(spec.controllers.front()),
                                            spec.sample_counts.front(), spec.guided_search, spec.solver_time_limit);
      const RunMetrics m = run_episode(spec.scenario.topology, routes, params, sim);

      const fs::path out(run_opts.out);
      fs::create_directories(out);
      std::ofstream(out / "vehicles.csv") << [&] {
        std::ostringstream os;
        write_vehicle_csv(os, m);
        return os.str();
      }();
      if (trace) {
        std::ofstream ts(out / "signals.csv");
        write_signal_trace(ts, m, sim.tick);
      }
      std::ostringstream log;
      log << "scenario " << spec.scenario.name << "\ncontroller " << variant_name(params)
          << (params.guided_search ? "+gs" : "") << "\nsamples " << params.samples << "\nlevel " << level
          << "\nseed " << spec.seeds.front() << "\nvehicles_in " << m.vehicles_in << "\nvehicles_out "
          << m.vehicles_out << "\nmean_delay " << m.mean_delay << "\nsolves " << m.solves << " (optimal "
          << m.solves_optimal << ", feasible " << m.solves_feasible << ", infeasible " << m.solves_infeasible
          << ")\nnodes " << m.nodes << "\nsolve_wall_seconds " << m.solve_wall_seconds << "\nmessages "
          << m.messages << '\n';
      if (!m.completed) log << "FAILED " << m.diagnostics << '\n';
      std::ofstream(out / "run.log") << log.str();
      std::cout << log.str();
      return m.completed ? 0 : 2;
    }

    if (*sweep) {
      const SweepSpec spec = make_spec(sweep_opts);
      SweepHooks hooks;
      hooks.on_cell = [](const CellResult& c) {
        std::cerr << c.id() << (c.failed ? " FAILED: " + c.error : " mean_delay " + std::to_string(c.metrics.mean_delay))
                  << '\n';
      };
      const SweepResult r = run_sweep(spec, fs::path(sweep_opts.out), hooks);
      print_summary(r.summary);
      for (const auto& c : r.cells)
        if (c.failed) return 2;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
