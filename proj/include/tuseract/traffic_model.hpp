#pragma once

// Domain types shared by the sampler, scheduler, coordination layer and
// simulator, plus structural validation of network configurations.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace tuseract {

using RoadId = std::string;
using NodeId = std::string;
using VehicleId = std::int64_t;

/// Integer controller time, in seconds.
using Seconds = std::int64_t;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TurnMovement {
  RoadId entry;
  RoadId exit;

  auto operator<=>(const TurnMovement&) const = default;
};

inline std::string to_string(const TurnMovement& turn) {
  return turn.entry + "->" + turn.exit;
}

struct Phase {
  std::vector<TurnMovement> turns;
  Seconds g_min = 5;
  Seconds g_max = 55;
  Seconds intergreen = 5;
};

/// Ordered cycle of phases. Phase k+1 follows phase k; the last wraps to 0.
struct PhaseModel {
  std::vector<Phase> phases;

  std::size_t size() const { return phases.size(); }
  const Phase& operator[](std::size_t k) const { return phases[k]; }

  /// Index of the phase serving `turn`; throws if the turn is not permitted.
  std::size_t phase_for_turn(const TurnMovement& turn) const {
    for (std::size_t k = 0; k < phases.size(); ++k) {
      const auto& turns = phases[k].turns;
      if (std::find(turns.begin(), turns.end(), turn) != turns.end()) return k;
    }
    throw std::invalid_argument("turn " + to_string(turn) +
                                " is not permitted by the phase model");
  }

  std::optional<std::size_t> find_phase(const TurnMovement& turn) const {
    for (std::size_t k = 0; k < phases.size(); ++k) {
      const auto& turns = phases[k].turns;
      if (std::find(turns.begin(), turns.end(), turn) != turns.end()) return k;
    }
    return std::nullopt;
  }
};

struct Road {
  RoadId id;
  double length = 0.0;  // meters
  int lanes = 1;
  NodeId from;
  NodeId to;
};

struct IntersectionConfig {
  NodeId id;
  PhaseModel phase_model;
  std::map<TurnMovement, double> turn_probabilities;
  std::vector<RoadId> entry_roads;
  std::vector<RoadId> exit_roads;

  /// Turn rows leaving `entry`, ordered by exit road id.
  std::vector<std::pair<RoadId, double>> turn_row(const RoadId& entry) const {
    std::vector<std::pair<RoadId, double>> row;
    for (auto it = turn_probabilities.lower_bound(TurnMovement{entry, ""});
         it != turn_probabilities.end() && it->first.entry == entry; ++it) {
      row.emplace_back(it->first.exit, it->second);
    }
    return row;
  }
};

struct NetworkTopology {
  std::vector<IntersectionConfig> intersections;
  std::vector<Road> roads;

  const Road* find_road(const RoadId& id) const {
    for (const auto& r : roads)
      if (r.id == id) return &r;
    return nullptr;
  }

  const Road& road(const RoadId& id) const {
    if (const Road* r = find_road(id)) return *r;
    throw std::out_of_range("unknown road " + id);
  }

  const IntersectionConfig* find_intersection(const NodeId& id) const {
    for (const auto& i : intersections)
      if (i.id == id) return &i;
    return nullptr;
  }

  std::optional<std::size_t> intersection_index(const NodeId& id) const {
    for (std::size_t i = 0; i < intersections.size(); ++i)
      if (intersections[i].id == id) return i;
    return std::nullopt;
  }

  bool is_intersection(const NodeId& id) const { return find_intersection(id) != nullptr; }

  /// A road is a sink when it does not end at an intersection.
  bool is_sink(const RoadId& id) const { return !is_intersection(road(id).to); }
  bool is_source(const RoadId& id) const { return !is_intersection(road(id).from); }

  std::vector<RoadId> source_roads() const {
    std::vector<RoadId> out;
    for (const auto& r : roads)
      if (!is_intersection(r.from) && is_intersection(r.to)) out.push_back(r.id);
    return out;
  }

  /// Intersections reachable over one road leaving `id` (N_i restricted to
  /// downstream links).
  std::vector<NodeId> neighbors(const NodeId& id) const {
    std::set<NodeId> out;
    for (const auto& r : roads) {
      if (r.from == id && is_intersection(r.to)) out.insert(r.to);
      if (r.to == id && is_intersection(r.from)) out.insert(r.from);
    }
    return {out.begin(), out.end()};
  }
};

struct InitialConditions {
  std::size_t current_phase = 0;
  Seconds elapsed_green = 0;
};

struct ClusterMember {
  VehicleId vehicle = 0;
  double arrival = 0.0;
  RoadId entry_road;
  RoadId exit_road;
  double weight = 1.0;
};

/// A platoon scheduled as one divisible job. `count` is a weight sum, so it
/// may be fractional for expected-inflow clusters.
struct Cluster {
  double count = 0.0;
  double arrival = 0.0;
  double length = 0.0;
  std::vector<ClusterMember> composition;
};

struct InflowSample {
  std::vector<std::vector<Cluster>> per_phase;

  bool operator==(const InflowSample& other) const;
};

inline bool operator==(const ClusterMember& a, const ClusterMember& b) {
  return a.vehicle == b.vehicle && a.arrival == b.arrival && a.entry_road == b.entry_road &&
         a.exit_road == b.exit_road && a.weight == b.weight;
}

inline bool operator==(const Cluster& a, const Cluster& b) {
  return a.count == b.count && a.arrival == b.arrival && a.length == b.length &&
         a.composition == b.composition;
}

inline bool InflowSample::operator==(const InflowSample& other) const {
  return per_phase == other.per_phase;
}

/// One green interval of the timing plan. `cycle` counts from the cycle that
/// begins with the current phase.
struct PhaseInterval {
  std::size_t phase = 0;
  std::size_t cycle = 0;
  Seconds start = 0;
  Seconds end = 0;

  Seconds length() const { return end - start; }
  bool operator==(const PhaseInterval&) const = default;
};

/// Green intervals in chronological order. The first interval belongs to the
/// phase that currently has right-of-way.
struct SignalTimingPlan {
  std::vector<PhaseInterval> intervals;
  std::size_t horizon_cycles = 0;

  bool operator==(const SignalTimingPlan&) const = default;

  const PhaseInterval* find(std::size_t phase, std::size_t cycle) const {
    for (const auto& iv : intervals)
      if (iv.phase == phase && iv.cycle == cycle) return &iv;
    return nullptr;
  }

  std::vector<Seconds> lengths() const {
    std::vector<Seconds> out;
    out.reserve(intervals.size());
    for (const auto& iv : intervals) out.push_back(iv.length());
    return out;
  }
};

/// Builds the chained plan whose intervals have the given lengths, starting
/// the current phase at `now - elapsed_green`.
inline SignalTimingPlan make_plan(const PhaseModel& pm, const InitialConditions& init, Seconds now,
                                  std::size_t horizon_cycles, const std::vector<Seconds>& lengths) {
  const std::size_t p = pm.size();
  if (lengths.size() != p * horizon_cycles)
    throw std::invalid_argument("make_plan: expected one length per (phase, cycle)");
  SignalTimingPlan plan;
  plan.horizon_cycles = horizon_cycles;
  Seconds t = now - init.elapsed_green;
  for (std::size_t j = 0; j < lengths.size(); ++j) {
    const std::size_t k = (init.current_phase + j) % p;
    plan.intervals.push_back({k, j / p, t, t + lengths[j]});
    t += lengths[j] + pm[k].intergreen;
  }
  return plan;
}

/// End of the planning horizon: the close of the last interval's inter-green.
inline Seconds horizon_end(const SignalTimingPlan& plan, const PhaseModel& pm) {
  if (plan.intervals.empty()) return 0;
  const auto& last = plan.intervals.back();
  return last.end + pm[last.phase].intergreen;
}

struct Extend {
  Seconds seconds = 1;
  bool operator==(const Extend&) const = default;
};
struct Terminate {
  bool operator==(const Terminate&) const = default;
};
using DecisionAction = std::variant<Extend, Terminate>;

struct Violation {
  std::string entity;
  std::string rule;

  bool operator==(const Violation&) const = default;
};

inline std::ostream& operator<<(std::ostream& os, const Violation& v) {
  return os << v.entity << ": " << v.rule;
}

/// Structural checks on a network. An empty result means every invariant of
/// the topology, phase models and turn tables holds.
inline std::vector<Violation> validate_network(const NetworkTopology& topology) {
  std::vector<Violation> out;
  auto fail = [&](std::string entity, std::string rule) {
    out.push_back({std::move(entity), std::move(rule)});
  };

  std::set<RoadId> road_ids;
  for (const auto& r : topology.roads) {
    if (!road_ids.insert(r.id).second) fail("road " + r.id, "duplicate road id");
    if (!(r.length > 0.0)) fail("road " + r.id, "length must be positive");
    if (r.lanes < 1) fail("road " + r.id, "lane count must be at least 1");
  }

  std::set<NodeId> ids;
  for (const auto& ic : topology.intersections) {
    const std::string who = "intersection " + ic.id;
    if (!ids.insert(ic.id).second) fail(who, "duplicate intersection id");
    if (ic.phase_model.phases.empty()) fail(who, "phase model has no phases");

    auto incident_entry = [&](const RoadId& id) {
      const Road* r = topology.find_road(id);
      return r != nullptr && r->to == ic.id;
    };
    auto incident_exit = [&](const RoadId& id) {
      const Road* r = topology.find_road(id);
      return r != nullptr && r->from == ic.id;
    };
    for (const auto& e : ic.entry_roads)
      if (!incident_entry(e)) fail(who, "entry road " + e + " does not end here");
    for (const auto& f : ic.exit_roads)
      if (!incident_exit(f)) fail(who, "exit road " + f + " does not start here");

    std::set<TurnMovement> permitted;
    for (const auto& [turn, p] : ic.turn_probabilities) {
      permitted.insert(turn);
      if (turn.entry == turn.exit) fail(who, "turn " + to_string(turn) + " has entry == exit");
      if (!incident_entry(turn.entry) || !incident_exit(turn.exit))
        fail(who, "turn " + to_string(turn) + " uses a road not incident to the intersection");
      if (p < 0.0 || p > 1.0) fail(who, "turn " + to_string(turn) + " probability outside [0,1]");
    }

    std::map<TurnMovement, std::size_t> owner;
    for (std::size_t k = 0; k < ic.phase_model.size(); ++k) {
      const auto& ph = ic.phase_model[k];
      const std::string pw = who + " phase " + std::to_string(k);
      if (ph.g_min <= 0 || ph.g_min > ph.g_max) fail(pw, "green bounds need 0 < g_min <= g_max");
      if (ph.intergreen < 0) fail(pw, "inter-green must be non-negative");
      for (const auto& t : ph.turns) {
        auto [it, fresh] = owner.emplace(t, k);
        if (!fresh)
          fail(pw, "turn " + to_string(t) + " also belongs to phase " + std::to_string(it->second));
        if (!permitted.count(t)) fail(pw, "turn " + to_string(t) + " is not a permitted turn");
      }
    }
    for (const auto& t : permitted)
      if (!owner.count(t)) fail(who, "permitted turn " + to_string(t) + " is not served by any phase");

    std::map<RoadId, double> row_sum;
    for (const auto& [turn, p] : ic.turn_probabilities) row_sum[turn.entry] += p;
    for (const auto& e : ic.entry_roads) {
      const double s = row_sum.count(e) ? row_sum[e] : 0.0;
      if (std::abs(s - 1.0) > 1e-9) {
        std::ostringstream msg;
        msg << "turn probabilities from entry road " << e << " sum to " << s;
        fail(who, msg.str());
      }
    }
  }

  // Every intersection exit is a sink or the entry of exactly one neighbor.
  for (const auto& ic : topology.intersections) {
    for (const auto& f : ic.exit_roads) {
      const Road* r = topology.find_road(f);
      if (r == nullptr) continue;
      int entries = 0;
      for (const auto& other : topology.intersections)
        entries += static_cast<int>(std::count(other.entry_roads.begin(), other.entry_roads.end(), f));
      if (topology.is_intersection(r->to) ? entries != 1 : entries != 0)
        fail("road " + f, "exit road must be a sink or the entry road of exactly one neighbor");
    }
  }
  return out;
}

inline std::size_t phase_for_turn(const PhaseModel& pm, const TurnMovement& turn) {
  return pm.phase_for_turn(turn);
}

/// Checks the timing-plan invariants: green bounds, in-cycle and cross-cycle
/// chaining through inter-greens, and the initial conditions at `now`.
inline std::vector<Violation> check_plan(const SignalTimingPlan& plan, const PhaseModel& pm,
                                         const InitialConditions& init, Seconds now) {
  std::vector<Violation> out;
  const std::size_t p = pm.size();
  auto fail = [&](std::size_t j, std::string rule) {
    out.push_back({"interval " + std::to_string(j), std::move(rule)});
  };
  if (plan.intervals.size() != p * plan.horizon_cycles) {
    out.push_back({"plan", "expected " + std::to_string(p * plan.horizon_cycles) + " intervals"});
    return out;
  }
  for (std::size_t j = 0; j < plan.intervals.size(); ++j) {
    const auto& iv = plan.intervals[j];
    const std::size_t k = (init.current_phase + j) % p;
    if (iv.phase != k) fail(j, "phase out of order");
    if (iv.cycle != j / p) fail(j, "cycle out of order");
    const auto& ph = pm[iv.phase < p ? iv.phase : 0];
    if (iv.length() < ph.g_min || iv.length() > ph.g_max) fail(j, "green length outside [g_min, g_max]");
    if (j > 0) {
      const auto& prev = plan.intervals[j - 1];
      if (iv.start != prev.end + pm[prev.phase < p ? prev.phase : 0].intergreen)
        fail(j, "start does not follow previous end plus inter-green");
    }
  }
  if (!plan.intervals.empty()) {
    const auto& first = plan.intervals.front();
    if (first.start != now - init.elapsed_green) fail(0, "current phase start != now - elapsed green");
    if (first.end < now) fail(0, "current phase ends before now");
  }
  return out;
}

}  // namespace tuseract
