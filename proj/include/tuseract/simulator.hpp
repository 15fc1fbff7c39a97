#pragma once

// Deterministic mesoscopic simulator. Vehicles travel at constant speed,
// join a spatial queue at the back of the stop-line queue, and cross at the
// saturation headway while their movement is green. A vehicle only crosses
// when the next road has spare spatial capacity.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tuseract/coordination.hpp"
#include "tuseract/random.hpp"
#include "tuseract/sampler.hpp"
#include "tuseract/scheduler.hpp"
#include "tuseract/traffic_model.hpp"

namespace tuseract {

/// Piecewise-constant entry shares. Each entry road maps to (from_time, share)
/// breakpoints sorted by time; a share holds until the next breakpoint.
struct DemandProfile {
  std::map<RoadId, std::vector<std::pair<double, double>>> entry_shares;
  double generation_duration = 900.0;

  double share(const RoadId& road, double t) const {
    auto it = entry_shares.find(road);
    if (it == entry_shares.end()) return 0.0;
    double s = 0.0;
    for (const auto& [from, value] : it->second) {
      if (from > t) break;
      s = value;
    }
    return s;
  }

  /// Every source road gets the same constant share.
  static DemandProfile uniform(const NetworkTopology& topology, double duration = 900.0) {
    DemandProfile d;
    d.generation_duration = duration;
    const auto sources = topology.source_roads();
    for (const auto& r : sources) d.entry_shares[r] = {{0.0, 1.0 / static_cast<double>(sources.size())}};
    return d;
  }
};

inline void validate_demand(const DemandProfile& demand) {
  if (!(demand.generation_duration > 0.0)) throw ConfigError("generation_duration must be positive");
  std::vector<double> times{0.0};
  for (const auto& [road, series] : demand.entry_shares)
    for (const auto& [from, share] : series) {
      if (share < 0.0) throw ConfigError("negative share on " + road);
      times.push_back(from);
    }
  for (double t : times) {
    if (t < 0.0 || t >= demand.generation_duration) continue;
    double sum = 0.0;
    for (const auto& [road, series] : demand.entry_shares) sum += demand.share(road, t);
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("entry shares at t=" + std::to_string(t) + " sum to " + std::to_string(sum));
  }
}

struct SimVehicle {
  VehicleId id = 0;
  std::vector<RoadId> route;
  double spawn_time = 0.0;
};

struct SimConfig {
  double tick = 0.5;
  double speed = 10.0;
  double vehicle_length = 5.0;
  double queue_gap = 2.0;
  double startup_lost_time = 3.5;
  double saturation_headway_per_lane = 2.5;
  std::uint64_t seed = 1;
  double stall_limit = 1800.0;  // simulated seconds without an exit before aborting
  bool record_trace = false;
  bool reveal_queued_turns = true;  // queued vehicles report their movement
};

inline void validate_sim_config(const SimConfig& c) {
  if (!(c.tick > 0.0) || !(c.speed > 0.0) || !(c.vehicle_length > 0.0) || !(c.queue_gap >= 0.0) ||
      !(c.startup_lost_time >= 0.0) || !(c.saturation_headway_per_lane > 0.0) || !(c.stall_limit > 0.0))
    throw ConfigError("simulator parameters must be positive");
  const double per_second = 1.0 / c.tick;
  if (std::abs(per_second - std::round(per_second)) > 1e-9)
    throw ConfigError("tick must divide one second");
}

/// Poisson arrivals per source road at rate level * share(t); routes follow
/// the static turn proportions until a sink is reached. Ids follow spawn order.
inline std::vector<SimVehicle> generate_routes(const NetworkTopology& topology, const DemandProfile& demand,
                                               double level, std::uint64_t seed) {
  if (!(level > 0.0)) throw std::invalid_argument("demand level must be positive");
  validate_demand(demand);
  std::vector<SimVehicle> out;
  const auto sources = topology.source_roads();
  for (std::size_t si = 0; si < sources.size(); ++si) {
    const RoadId& src = sources[si];
    Rng rng(derive_seed(seed, {si}));
    auto it = demand.entry_shares.find(src);
    if (it == demand.entry_shares.end()) continue;
    const auto& series = it->second;
    for (std::size_t p = 0; p < series.size(); ++p) {
      const double from = std::max(0.0, series[p].first);
      const double to = std::min(demand.generation_duration,
                                 p + 1 < series.size() ? series[p + 1].first : demand.generation_duration);
      const double rate = level * series[p].second / 3600.0;
      if (!(rate > 0.0) || from >= to) continue;
      for (double t = from + exponential(rng, rate); t < to; t += exponential(rng, rate)) {
        SimVehicle v;
        v.spawn_time = t;
        v.route.push_back(src);
        while (true) {
          const Road& r = topology.road(v.route.back());
          const IntersectionConfig* ic = topology.find_intersection(r.to);
          if (!ic) break;
          if (v.route.size() > topology.roads.size()) throw ConfigError("route from " + src + " does not reach a sink");
          const auto row = ic->turn_row(r.id);
          const double u = uniform01(rng);
          double acc = 0.0;
          RoadId pick;
          for (const auto& [exit, prob] : row) {
            if (!(prob > 0.0)) continue;
            acc += prob;
            pick = exit;
            if (u < acc) break;
          }
          if (pick.empty()) throw ConfigError("no turn out of " + r.id);
          v.route.push_back(pick);
        }
        out.push_back(std::move(v));
      }
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const SimVehicle& a, const SimVehicle& b) { return a.spawn_time < b.spawn_time; });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].id = static_cast<VehicleId>(i);
  return out;
}

enum class Algorithm { tuseract, baseline };

struct ControllerParams {
  Algorithm algorithm = Algorithm::tuseract;
  bool coordinated = false;
  std::size_t samples = 10;
  bool guided_search = false;
  SolveLimits limits{5.0, 20000, false};
  std::size_t horizon_cycles = 3;
  double horizon_extension = 20.0;
  double merge_threshold = 3.0;
  Seconds resolution = 1;
};

/// Short variant name: UTuS, CTuS, USUR or CSUR.
inline std::string variant_name(const ControllerParams& p) {
  return std::string(p.coordinated ? "C" : "U") + (p.algorithm == Algorithm::tuseract ? "TuS" : "SUR");
}

struct VehicleRecord {
  VehicleId id = 0;
  double spawn = 0.0;
  double exit = 0.0;
  double delay = 0.0;
};

struct RunMetrics {
  std::vector<VehicleRecord> vehicles;
  double mean_delay = 0.0;
  std::size_t vehicles_in = 0;
  std::size_t vehicles_out = 0;
  bool completed = true;
  std::string diagnostics;
  double end_time = 0.0;
  std::size_t solves = 0;
  std::size_t solves_optimal = 0;
  std::size_t solves_feasible = 0;
  std::size_t solves_infeasible = 0;
  std::int64_t nodes = 0;
  double solve_wall_seconds = 0.0;
  std::size_t messages = 0;
  // Per tick, per intersection: green phase or -1 during inter-green.
  std::vector<std::vector<int>> signal_trace;
};

struct SolveRecord {
  std::size_t intersection = 0;
  Seconds now = 0;
  const ScheduleProblem* problem = nullptr;
  const Solution* solution = nullptr;
  const std::optional<SignalTimingPlan>* warm_start = nullptr;
};

struct Observers {
  std::function<void(const SolveRecord&)> on_solve;
  std::function<void(double, const std::vector<OutflowMessage>&)> on_messages;
};

namespace detail {

struct RoadRt {
  double length = 0.0;
  int lanes = 1;
  int capacity = 1;
  int node = -1;  // intersection at the downstream end, -1 for sinks
  bool sink = false;
  int occupancy = 0;
  int queued = 0;
  double ready = -std::numeric_limits<double>::infinity();
  std::deque<int> moving;  // ordered by entry time
  std::deque<int> origin;  // spawned vehicles waiting for space (source roads)
  std::vector<int> next;   // per movement: downstream road
  std::vector<std::size_t> phase;
  std::vector<std::deque<int>> queues;
  double headway = 2.5;

  std::size_t movement(int to) const {
    for (std::size_t m = 0; m < next.size(); ++m)
      if (next[m] == to) return m;
    throw std::logic_error("route uses a turn with no movement");
  }
};

struct VehRt {
  std::vector<int> route;
  std::size_t leg = 0;
  double spawn = 0.0;
  double entered = 0.0;
  double join = 0.0;  // earliest stop-line crossing at free flow
  bool queued = false;
  bool exited = false;
  double exit = 0.0;
  double free_flow = 0.0;
};

struct SignalRt {
  std::size_t phase = 0;
  bool green = true;
  Seconds green_start = 0;
  Seconds intergreen_end = 0;
  std::optional<SignalTimingPlan> last_plan;
  Seconds last_solve = 0;
};

class World {
 public:
  World(const NetworkTopology& topology, const std::vector<SimVehicle>& vehicles, const SimConfig& cfg)
      : topo_(topology), cfg_(cfg) {
    std::map<RoadId, int> index;
    for (std::size_t r = 0; r < topology.roads.size(); ++r) index[topology.roads[r].id] = static_cast<int>(r);
    const double spacing = cfg.vehicle_length + cfg.queue_gap;
    for (const auto& road : topology.roads) {
      RoadRt rt;
      rt.length = road.length;
      rt.lanes = road.lanes;
      rt.capacity = std::max(1, static_cast<int>(std::floor(road.length * road.lanes / spacing + 1e-9)));
      auto node = topology.intersection_index(road.to);
      rt.sink = !node;
      rt.node = node ? static_cast<int>(*node) : -1;
      rt.headway = cfg.saturation_headway_per_lane / road.lanes;
      if (node) {
        const auto& ic = topology.intersections[*node];
        for (const auto& [turn, p] : ic.turn_probabilities) {
          if (turn.entry != road.id) continue;
          rt.next.push_back(index.at(turn.exit));
          rt.phase.push_back(ic.phase_model.phase_for_turn(turn));
        }
        rt.queues.resize(rt.next.size());
      }
      roads_.push_back(std::move(rt));
    }
    for (const auto& v : vehicles) {
      VehRt rt;
      rt.spawn = v.spawn_time;
      for (std::size_t i = 0; i < v.route.size(); ++i) {
        auto it = index.find(v.route[i]);
        if (it == index.end()) throw ConfigError("route uses unknown road " + v.route[i]);
        if (i > 0 && topology.roads[rt.route.back()].to != topology.roads[it->second].from)
          throw ConfigError("route of vehicle " + std::to_string(v.id) + " is not connected");
        rt.route.push_back(it->second);
      }
      if (rt.route.empty()) throw ConfigError("empty route");
      for (int r : rt.route)
        if (!roads_[r].sink) rt.free_flow += roads_[r].length / cfg.speed;
      ids_.push_back(v.id);
      vehs_.push_back(std::move(rt));
    }
    signals_.resize(topology.intersections.size());
    spawn_order_.resize(vehs_.size());
    for (std::size_t i = 0; i < vehs_.size(); ++i) spawn_order_[i] = static_cast<int>(i);
    std::stable_sort(spawn_order_.begin(), spawn_order_.end(),
                     [&](int a, int b) { return vehs_[a].spawn < vehs_[b].spawn; });
  }

  std::vector<RoadRt>& roads() { return roads_; }
  std::vector<SignalRt>& signals() { return signals_; }
  const std::vector<VehRt>& vehicles() const { return vehs_; }
  VehicleId id_of(int v) const { return ids_[v]; }
  std::size_t exited() const { return exited_; }
  double last_exit() const { return last_exit_; }

  bool is_green(std::size_t node, std::size_t phase) const {
    return signals_[node].green && signals_[node].phase == phase;
  }

  /// Starts a green at `t`: queued vehicles on roads served by the phase wait
  /// for the startup lost time.
  void green_onset(std::size_t node, double t) {
    const std::size_t phase = signals_[node].phase;
    for (auto& r : roads_) {
      if (r.node != static_cast<int>(node)) continue;
      if (std::find(r.phase.begin(), r.phase.end(), phase) != r.phase.end())
        r.ready = std::max(r.ready, t + cfg_.startup_lost_time);
    }
  }

  void step(double t, double dt) {
    const double end = t + dt;
    spawn(t, end);
    move(t, end);
    discharge(t, end);
  }

  /// Vehicles on the entry roads of `node`: moving ones at their free-flow
  /// arrival with unknown turn, queued ones at `now` in their movement's queue.
  std::vector<DetectedVehicle> detect(std::size_t node, Seconds now) const {
    std::vector<DetectedVehicle> out;
    const double tnow = static_cast<double>(now);
    for (std::size_t r = 0; r < roads_.size(); ++r) {
      const RoadRt& rd = roads_[r];
      if (rd.node != static_cast<int>(node)) continue;
      const RoadId& id = topo_.roads[r].id;
      for (int v : rd.moving) {
        const double eta = std::max(tnow, vehs_[v].entered + rd.length / cfg_.speed);
        out.push_back({ids_[v], id, eta, 1.0});
      }
      for (std::size_t m = 0; m < rd.queues.size(); ++m)
        for (int v : rd.queues[m])
          out.push_back({ids_[v], id, tnow, 1.0,
                         cfg_.reveal_queued_turns ? std::optional<RoadId>(topo_.roads[rd.next[m]].id)
                                                  : std::nullopt});
    }
    return out;
  }

 private:
  void enter(int v, int road, double t) {
    VehRt& veh = vehs_[v];
    RoadRt& rd = roads_[road];
    veh.entered = t;
    veh.queued = false;
    ++rd.occupancy;
    auto pos = rd.moving.end();
    while (pos != rd.moving.begin() && vehs_[*std::prev(pos)].entered > t) --pos;
    rd.moving.insert(pos, v);
  }

  void spawn(double t, double end) {
    while (next_spawn_ < spawn_order_.size() && vehs_[spawn_order_[next_spawn_]].spawn < end) {
      const int v = spawn_order_[next_spawn_++];
      roads_[vehs_[v].route.front()].origin.push_back(v);
    }
    for (auto& rd : roads_) {
      while (!rd.origin.empty() && rd.occupancy < rd.capacity) {
        const int v = rd.origin.front();
        rd.origin.pop_front();
        enter(v, static_cast<int>(&rd - roads_.data()), std::max(vehs_[v].spawn, t));
      }
    }
  }

  void move(double t, double end) {
    const double spacing = cfg_.vehicle_length + cfg_.queue_gap;
    for (auto& rd : roads_) {
      if (rd.sink) continue;
      while (!rd.moving.empty()) {
        const int v = rd.moving.front();
        VehRt& veh = vehs_[v];
        const double back =
            std::max(0.0, rd.length - std::ceil(static_cast<double>(rd.queued) / rd.lanes) * spacing);
        const double reach = veh.entered + back / cfg_.speed;
        if (reach >= end) break;
        rd.moving.pop_front();
        veh.queued = true;
        veh.join = veh.entered + rd.length / cfg_.speed;
        ++rd.queued;
        rd.queues[rd.movement(veh.route[veh.leg + 1])].push_back(v);
      }
    }
  }

  void discharge(double t, double end) {
    for (std::size_t r = 0; r < roads_.size(); ++r) {
      RoadRt& rd = roads_[r];
      if (rd.sink || rd.queued == 0) continue;
      std::vector<bool> blocked(rd.next.size(), false);
      while (true) {
        std::size_t best = rd.next.size();
        double best_time = end;
        for (std::size_t m = 0; m < rd.next.size(); ++m) {
          if (blocked[m] || rd.queues[m].empty() || !is_green(rd.node, rd.phase[m])) continue;
          const double c = std::max({rd.ready, vehs_[rd.queues[m].front()].join, t});
          if (c < best_time) {
            best_time = c;
            best = m;
          }
        }
        if (best == rd.next.size()) break;
        const int to = rd.next[best];
        RoadRt& down = roads_[to];
        if (!down.sink && down.occupancy >= down.capacity) {
          blocked[best] = true;
          continue;
        }
        const int v = rd.queues[best].front();
        rd.queues[best].pop_front();
        --rd.queued;
        --rd.occupancy;
        rd.ready = best_time + rd.headway;
        VehRt& veh = vehs_[v];
        ++veh.leg;
        if (down.sink) {
          veh.exited = true;
          veh.exit = best_time;
          veh.queued = false;
          ++exited_;
          last_exit_ = std::max(last_exit_, best_time);
        } else {
          enter(v, to, best_time);
        }
      }
    }
  }

  const NetworkTopology& topo_;
  SimConfig cfg_;
  std::vector<RoadRt> roads_;
  std::vector<VehRt> vehs_;
  std::vector<VehicleId> ids_;
  std::vector<SignalRt> signals_;
  std::vector<int> spawn_order_;
  std::size_t next_spawn_ = 0;
  std::size_t exited_ = 0;
  double last_exit_ = 0.0;
};

}  // namespace detail

/// Runs until every vehicle has left the network. Controllers decide every
/// `resolution` seconds; planning does not consume simulated time.
inline RunMetrics run_episode(const NetworkTopology& topology, const std::vector<SimVehicle>& vehicles,
                              const ControllerParams& params, const SimConfig& cfg, const Observers& observers = {}) {
  validate_sim_config(cfg);
  if (params.algorithm == Algorithm::tuseract && params.samples < 1)
    throw ConfigError("sample count must be >= 1");
  if (params.resolution < 1) throw ConfigError("resolution must be >= 1");

  detail::World world(topology, vehicles, cfg);
  const std::size_t n = topology.intersections.size();
  const std::size_t sample_count = params.algorithm == Algorithm::tuseract ? params.samples : 1;
  std::vector<ClusteringParams> clustering;
  for (const auto& ic : topology.intersections)
    clustering.push_back(
        clustering_params_for(topology, ic, cfg.saturation_headway_per_lane, params.merge_threshold));

  std::vector<std::map<RoadId, double>> local_horizon(n);
  for (const auto& road : topology.roads)
    if (auto i = topology.intersection_index(road.to)) local_horizon[*i][road.id] = road.length / cfg.speed;

  // inbox[i][sender]: the sender's most recent outflow to i.
  std::vector<std::map<std::size_t, std::vector<OutflowMessage>>> inbox(n);

  RunMetrics metrics;
  metrics.vehicles_in = vehicles.size();

  for (std::size_t i = 0; i < n; ++i) world.green_onset(i, 0.0);

  const auto ticks_per_second = static_cast<std::int64_t>(std::llround(1.0 / cfg.tick));
  for (std::int64_t k = 0; world.exited() < vehicles.size(); ++k) {
    const double t = static_cast<double>(k) * cfg.tick;
    if (t - world.last_exit() > cfg.stall_limit) {
      metrics.completed = false;
      metrics.diagnostics = "no vehicle exited between t=" + std::to_string(world.last_exit()) + " and t=" +
                            std::to_string(t) + "; " + std::to_string(vehicles.size() - world.exited()) +
                            " vehicles remain";
      break;
    }
    if (k % (ticks_per_second * params.resolution) == 0) {
      const Seconds now = k / ticks_per_second;
      std::vector<std::vector<OutflowMessage>> outbox(n);
      std::vector<bool> published(n, false);
      for (std::size_t i = 0; i < n; ++i) {
        const IntersectionConfig& ic = topology.intersections[i];
        const PhaseModel& pm = ic.phase_model;
        auto& sig = world.signals()[i];
        if (!sig.green) {
          if (now < sig.intergreen_end) continue;
          sig.phase = (sig.phase + 1) % pm.size();
          sig.green = true;
          sig.green_start = now;
          world.green_onset(i, static_cast<double>(now));
        }
        const InitialConditions init{sig.phase, now - sig.green_start};
        const auto local = world.detect(i, now);
        std::vector<std::vector<DetectedVehicle>> lists;
        if (params.coordinated) {
          std::vector<OutflowMessage> received;
          for (const auto& [sender, msgs] : inbox[i]) received.insert(received.end(), msgs.begin(), msgs.end());
          lists = merge_nonlocal(local, received, now, params.horizon_extension, local_horizon[i], sample_count);
        } else {
          lists.assign(sample_count, local);
        }

        ScheduleProblem problem;
        problem.phase_model = pm;
        problem.initial = init;
        problem.now = now;
        problem.horizon_cycles = params.horizon_cycles;
        if (params.algorithm == Algorithm::tuseract) {
          problem.samples = draw_sample_set(lists, ic, derive_seed(cfg.seed, {i, static_cast<std::uint64_t>(now)}),
                                            clustering[i])
                                .samples;
        } else {
          problem.samples = {expected_inflow(lists.front(), ic, clustering[i])};
        }

        std::optional<SignalTimingPlan> warm;
        if (params.guided_search && sig.last_plan)
          warm = guided_search_shift(*sig.last_plan, pm, now - sig.last_solve, init, now);
        const Solution sol = solve(problem, params.limits, warm);
        ++metrics.solves;
        metrics.nodes += sol.stats.nodes;
        metrics.solve_wall_seconds += sol.stats.wall_seconds;
        switch (sol.status) {
          case SolveStatus::optimal: ++metrics.solves_optimal; break;
          case SolveStatus::feasible: ++metrics.solves_feasible; break;
          case SolveStatus::infeasible: ++metrics.solves_infeasible; break;
        }
        if (observers.on_solve) observers.on_solve({i, now, &problem, &sol, &warm});

        bool terminate;
        if (sol.status == SolveStatus::infeasible) {
          terminate = init.elapsed_green >= pm[sig.phase].g_min;
        } else {
          terminate = std::holds_alternative<Terminate>(decide_action(sol, now, params.resolution));
          sig.last_plan = sol.plan;
          sig.last_solve = now;
        }
        if (params.coordinated && sol.status != SolveStatus::infeasible) {
          outbox[i] = project_outflows(ic.id, sol, problem.samples, topology, cfg.speed, now);
          published[i] = true;
        }
        if (terminate) {
          sig.green = false;
          sig.intergreen_end = now + pm[sig.phase].intergreen;
        }
      }
      if (params.coordinated) {
        std::vector<OutflowMessage> all;
        for (std::size_t i = 0; i < n; ++i) {
          if (!published[i]) continue;
          for (std::size_t j = 0; j < n; ++j) inbox[j].erase(i);
          for (const auto& m : outbox[i]) {
            inbox[*topology.intersection_index(m.to)][i].push_back(m);
            all.push_back(m);
          }
        }
        metrics.messages += all.size();
        if (observers.on_messages) observers.on_messages(static_cast<double>(now), all);
      }
    }
    if (cfg.record_trace) {
      std::vector<int> row(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& sig = world.signals()[i];
        row[i] = sig.green ? static_cast<int>(sig.phase) : -1;
      }
      metrics.signal_trace.push_back(std::move(row));
    }
    world.step(t, cfg.tick);
    metrics.end_time = t + cfg.tick;
  }

  double total = 0.0;
  const auto& vs = world.vehicles();
  for (std::size_t v = 0; v < vs.size(); ++v) {
    if (!vs[v].exited) continue;
    const double delay = vs[v].exit - vs[v].spawn - vs[v].free_flow;
    metrics.vehicles.push_back({world.id_of(static_cast<int>(v)), vs[v].spawn, vs[v].exit, delay});
    total += delay;
  }
  metrics.vehicles_out = metrics.vehicles.size();
  metrics.mean_delay = metrics.vehicles.empty() ? 0.0 : total / static_cast<double>(metrics.vehicles.size());
  if (metrics.completed) metrics.end_time = std::max(metrics.end_time, world.last_exit());
  return metrics;
}

/// Per-vehicle rows and a trailing summary row. Contains no wall-clock data,
/// so identical runs produce identical bytes.
inline void write_vehicle_csv(std::ostream& os, const RunMetrics& m) {
  os << "id,spawn,exit,delay\n" << std::fixed << std::setprecision(3);
  for (const auto& v : m.vehicles) os << v.id << ',' << v.spawn << ',' << v.exit << ',' << v.delay << '\n';
  os << "summary," << m.vehicles_in << ',' << m.vehicles_out << ',' << std::setprecision(6) << m.mean_delay << '\n';
  os << std::defaultfloat;
}

inline void write_signal_trace(std::ostream& os, const RunMetrics& m, double tick) {
  os << std::fixed << std::setprecision(1);
  for (std::size_t k = 0; k < m.signal_trace.size(); ++k) {
    os << static_cast<double>(k) * tick;
    for (int s : m.signal_trace[k]) os << ',' << s;
    os << '\n';
  }
  os << std::defaultfloat;
}

}  // namespace tuseract
