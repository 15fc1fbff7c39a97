#pragma once

// Built-in networks and their JSON form.

#include <array>
#include <cstdio>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <string>
#include <vector>

#include "tuseract/simulator.hpp"
#include "tuseract/traffic_model.hpp"

namespace tuseract {

struct ScenarioDefaults {
  Seconds g_min = 5;
  Seconds g_max = 55;
  Seconds intergreen = 5;
  std::size_t horizon_cycles = 3;
  double horizon_extension = 20.0;
  double merge_threshold = 3.0;
};

struct Scenario {
  std::string name;
  NetworkTopology topology;
  DemandProfile demand;
  std::vector<double> demand_levels;
  ScenarioDefaults defaults;
};

namespace scenario_detail {

enum Dir { north = 0, south = 1, east = 2, west = 3 };

// For an approach arriving from direction d: the exit directions reached by
// going through, turning left and turning right.
constexpr std::array<std::array<Dir, 3>, 4> kTurns{{
    {south, east, west},  // from north, heading south
    {north, west, east},  // from south
    {west, south, north},  // from east
    {east, north, south},  // from west
}};

enum class Design {
  four_phase,          // NS through+right, NS left, EW through+right, EW left
  three_phase,         // EW through+right, EW left, NS through+right
  two_phase_through,   // NS, EW; no turns
  two_phase_right,     // NS, EW; through and right
};

struct Split {
  double through = 1.0, left = 0.0, right = 0.0;
};

/// in[d] arrives from direction d; out[d] leaves toward direction d.
inline IntersectionConfig make_intersection(const NodeId& id, const std::array<RoadId, 4>& in,
                                            const std::array<RoadId, 4>& out, Design design, Split four_way,
                                            Split one_turn) {
  IntersectionConfig ic;
  ic.id = id;
  ic.entry_roads.assign(in.begin(), in.end());
  ic.exit_roads.assign(out.begin(), out.end());
  Phase ns_main, ns_left, ew_main, ew_left;
  for (int d = 0; d < 4; ++d) {
    const bool ns = d == north || d == south;
    Split s;
    switch (design) {
      case Design::four_phase: s = four_way; break;
      case Design::three_phase: s = ns ? one_turn : four_way; break;
      case Design::two_phase_through: s = Split{}; break;
      case Design::two_phase_right: s = Split{one_turn.through, 0.0, one_turn.left + one_turn.right}; break;
    }
    const TurnMovement through{in[d], out[kTurns[d][0]]};
    const TurnMovement left{in[d], out[kTurns[d][1]]};
    const TurnMovement right{in[d], out[kTurns[d][2]]};
    Phase& main = ns ? ns_main : ew_main;
    Phase& lt = ns ? ns_left : ew_left;
    ic.turn_probabilities[through] = s.through;
    main.turns.push_back(through);
    if (s.right > 0.0) {
      ic.turn_probabilities[right] = s.right;
      main.turns.push_back(right);
    }
    if (s.left > 0.0) {
      ic.turn_probabilities[left] = s.left;
      lt.turns.push_back(left);
    }
  }
  switch (design) {
    case Design::four_phase: ic.phase_model.phases = {ns_main, ns_left, ew_main, ew_left}; break;
    case Design::three_phase: ic.phase_model.phases = {ew_main, ew_left, ns_main}; break;
    default: ic.phase_model.phases = {ns_main, ew_main}; break;
  }
  return ic;
}

inline void apply_timing(NetworkTopology& net, const ScenarioDefaults& d) {
  for (auto& ic : net.intersections)
    for (auto& p : ic.phase_model.phases) {
      p.g_min = d.g_min;
      p.g_max = d.g_max;
      p.intergreen = d.intergreen;
    }
}

inline Scenario isolated() {
  Scenario s;
  s.name = "isolated";
  auto& net = s.topology;
  const char* names[4] = {"N", "S", "E", "W"};
  std::array<RoadId, 4> in, out;
  for (int d = 0; d < 4; ++d) {
    in[d] = std::string(names[d]) + "_in";
    out[d] = std::string(names[d]) + "_out";
    net.roads.push_back({in[d], 300.0, 2, std::string(names[d]) + "_src", "I"});
    net.roads.push_back({out[d], 300.0, 2, "I", std::string(names[d]) + "_snk"});
  }
  net.intersections.push_back(make_intersection("I", in, out, Design::four_phase, {0.6, 0.2, 0.2}, {0.8, 0.2, 0.0}));
  s.demand_levels = {900, 1350, 1800};
  return s;
}

/// Five intersections A0..A4 west to east; A2 is a three-phase bottleneck
/// where turns are allowed, all others serve through traffic only.
inline Scenario arterial_1x5() {
  Scenario s;
  s.name = "arterial_1x5";
  auto& net = s.topology;
  const double len = 250.0;
  auto node = [](int c) { return "A" + std::to_string(c); };
  std::vector<std::array<RoadId, 4>> in(5), out(5);
  for (int c = 0; c < 5; ++c) {
    const NodeId a = node(c);
    // Side streets.
    for (Dir d : {north, south}) {
      const std::string tag = a + (d == north ? "_N" : "_S");
      in[c][d] = tag + "_in";
      out[c][d] = tag + "_out";
      net.roads.push_back({in[c][d], len, 1, tag + "_src", a});
      net.roads.push_back({out[c][d], len, 1, a, tag + "_snk"});
    }
  }
  // Arterial: eastbound and westbound links plus the two ends.
  for (int c = 0; c <= 5; ++c) {
    const NodeId w = c == 0 ? "W_end" : node(c - 1);
    const NodeId e = c == 5 ? "E_end" : node(c);
    const RoadId eb = "EB" + std::to_string(c), wb = "WB" + std::to_string(c);
    net.roads.push_back({eb, len, 2, w, e});
    net.roads.push_back({wb, len, 2, e, w});
    if (c < 5) {
      in[c][west] = eb;
      out[c][west] = wb;
    }
    if (c > 0) {
      in[c - 1][east] = wb;
      out[c - 1][east] = eb;
    }
  }
  for (int c = 0; c < 5; ++c)
    net.intersections.push_back(make_intersection(node(c), in[c], out[c],
                                                  c == 2 ? Design::three_phase : Design::two_phase_through,
                                                  {0.65, 0.15, 0.2}, {0.8, 0.0, 0.2}));
  s.demand_levels = {900, 1200, 1500};
  return s;
}

/// 5x5 grid G_r_c with 75 m links. The links between columns 1 and 2 are
/// 25 m and the westbound entries on the west boundary are 150 m. The four
/// (r, c) nodes with odd r and c plus the center are four-phase.
inline Scenario grid_5x5() {
  Scenario s;
  s.name = "grid_5x5";
  auto& net = s.topology;
  const int lanes = 2;
  auto node = [](int r, int c) { return "G" + std::to_string(r) + "_" + std::to_string(c); };
  std::vector<std::vector<std::array<RoadId, 4>>> in(5, std::vector<std::array<RoadId, 4>>(5));
  auto out = in;
  // Horizontal links, row r, between column c-1 (or the west boundary) and c.
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c <= 5; ++c) {
      const NodeId w = c == 0 ? "Wb" + std::to_string(r) : node(r, c - 1);
      const NodeId e = c == 5 ? "Eb" + std::to_string(r) : node(r, c);
      double len = 75.0;
      if (c == 2) len = 25.0;
      if (c == 0) len = 150.0;
      const RoadId eb = "H" + std::to_string(r) + "_" + std::to_string(c) + "e";
      const RoadId wb = "H" + std::to_string(r) + "_" + std::to_string(c) + "w";
      net.roads.push_back({eb, len, lanes, w, e});
      net.roads.push_back({wb, len, lanes, e, w});
      if (c < 5) {
        in[r][c][west] = eb;
        out[r][c][west] = wb;
      }
      if (c > 0) {
        in[r][c - 1][east] = wb;
        out[r][c - 1][east] = eb;
      }
    }
  // Vertical links, column c, between row r-1 (or the north boundary) and r.
  for (int c = 0; c < 5; ++c)
    for (int r = 0; r <= 5; ++r) {
      const NodeId n = r == 0 ? "Nb" + std::to_string(c) : node(r - 1, c);
      const NodeId so = r == 5 ? "Sb" + std::to_string(c) : node(r, c);
      const RoadId sb = "V" + std::to_string(c) + "_" + std::to_string(r) + "s";
      const RoadId nb = "V" + std::to_string(c) + "_" + std::to_string(r) + "n";
      net.roads.push_back({sb, 75.0, lanes, n, so});
      net.roads.push_back({nb, 75.0, lanes, so, n});
      if (r < 5) {
        in[r][c][north] = sb;
        out[r][c][north] = nb;
      }
      if (r > 0) {
        in[r - 1][c][south] = nb;
        out[r - 1][c][south] = sb;
      }
    }
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) {
      const bool four = (r % 2 == 1 && c % 2 == 1) || (r == 2 && c == 2);
      net.intersections.push_back(make_intersection(node(r, c), in[r][c], out[r][c],
                                                    four ? Design::four_phase : Design::two_phase_right,
                                                    {0.65, 0.15, 0.2}, {0.8, 0.0, 0.2}));
    }
  s.demand_levels = {4000, 5000, 6000};
  return s;
}

}  // namespace scenario_detail

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"isolated", "arterial_1x5", "grid_5x5"};
  return names;
}

inline Scenario build_scenario(const std::string& name) {
  Scenario s;
  if (name == "isolated") s = scenario_detail::isolated();
  else if (name == "arterial_1x5") s = scenario_detail::arterial_1x5();
  else if (name == "grid_5x5") s = scenario_detail::grid_5x5();
  else throw ConfigError("unknown scenario '" + name + "'");
  scenario_detail::apply_timing(s.topology, s.defaults);
  s.demand = DemandProfile::uniform(s.topology);
  return s;
}

inline void validate_scenario(const Scenario& s) {
  const auto v = validate_network(s.topology);
  if (!v.empty()) {
    std::string msg = "scenario " + s.name + ":";
    for (const auto& x : v) msg += " [" + x.entity + ": " + x.rule + "]";
    throw ConfigError(msg);
  }
  validate_demand(s.demand);
  if (s.demand_levels.empty()) throw ConfigError("scenario " + s.name + " has no demand levels");
  for (double l : s.demand_levels)
    if (!(l > 0.0)) throw ConfigError("demand levels must be positive");
  const auto& d = s.defaults;
  if (d.g_min < 1 || d.g_max < d.g_min || d.intergreen < 0 || d.horizon_cycles < 1 || d.horizon_extension < 0 ||
      !(d.merge_threshold > 0.0))
    throw ConfigError("scenario defaults out of range");
}

// JSON form, schema_version 1.

inline constexpr int kScenarioSchemaVersion = 1;

inline nlohmann::json to_json(const Scenario& s) {
  using nlohmann::json;
  json j;
  j["schema_version"] = kScenarioSchemaVersion;
  j["name"] = s.name;
  j["defaults"] = {{"g_min", s.defaults.g_min},
                   {"g_max", s.defaults.g_max},
                   {"intergreen", s.defaults.intergreen},
                   {"horizon_cycles", s.defaults.horizon_cycles},
                   {"horizon_extension", s.defaults.horizon_extension},
                   {"merge_threshold", s.defaults.merge_threshold}};
  j["demand_levels"] = s.demand_levels;
  json shares = json::object();
  for (const auto& [road, series] : s.demand.entry_shares) {
    json pts = json::array();
    for (const auto& [t, v] : series) pts.push_back({t, v});
    shares[road] = pts;
  }
  j["demand"] = {{"generation_duration", s.demand.generation_duration}, {"entry_shares", shares}};
  json roads = json::array();
  for (const auto& r : s.topology.roads)
    roads.push_back({{"id", r.id}, {"length", r.length}, {"lanes", r.lanes}, {"from", r.from}, {"to", r.to}});
  j["roads"] = roads;
  json nodes = json::array();
  for (const auto& ic : s.topology.intersections) {
    json phases = json::array();
    for (const auto& p : ic.phase_model.phases) {
      json turns = json::array();
      for (const auto& t : p.turns) turns.push_back({t.entry, t.exit});
      phases.push_back({{"turns", turns}, {"g_min", p.g_min}, {"g_max", p.g_max}, {"intergreen", p.intergreen}});
    }
    json probs = json::array();
    for (const auto& [t, p] : ic.turn_probabilities) probs.push_back({t.entry, t.exit, p});
    nodes.push_back({{"id", ic.id},
                     {"entry_roads", ic.entry_roads},
                     {"exit_roads", ic.exit_roads},
                     {"phases", phases},
                     {"turn_probabilities", probs}});
  }
  j["intersections"] = nodes;
  return j;
}

/// Missing `defaults` keys keep their built-in values. Phase timings that are
/// absent take the scenario defaults.
inline Scenario scenario_from_json(const nlohmann::json& j) {
  try {
    if (j.value("schema_version", 0) != kScenarioSchemaVersion)
      throw ConfigError("unsupported schema_version " + std::to_string(j.value("schema_version", 0)));
    Scenario s;
    s.name = j.at("name").get<std::string>();
    if (j.contains("defaults")) {
      const auto& d = j["defaults"];
      s.defaults.g_min = d.value("g_min", s.defaults.g_min);
      s.defaults.g_max = d.value("g_max", s.defaults.g_max);
      s.defaults.intergreen = d.value("intergreen", s.defaults.intergreen);
      s.defaults.horizon_cycles = d.value("horizon_cycles", s.defaults.horizon_cycles);
      s.defaults.horizon_extension = d.value("horizon_extension", s.defaults.horizon_extension);
      s.defaults.merge_threshold = d.value("merge_threshold", s.defaults.merge_threshold);
    }
    s.demand_levels = j.at("demand_levels").get<std::vector<double>>();
    for (const auto& r : j.at("roads"))
      s.topology.roads.push_back({r.at("id").get<std::string>(), r.at("length").get<double>(),
                                  r.value("lanes", 1), r.at("from").get<std::string>(),
                                  r.at("to").get<std::string>()});
    for (const auto& n : j.at("intersections")) {
      IntersectionConfig ic;
      ic.id = n.at("id").get<std::string>();
      ic.entry_roads = n.at("entry_roads").get<std::vector<RoadId>>();
      ic.exit_roads = n.at("exit_roads").get<std::vector<RoadId>>();
      for (const auto& p : n.at("phases")) {
        Phase ph;
        for (const auto& t : p.at("turns")) ph.turns.push_back({t.at(0).get<RoadId>(), t.at(1).get<RoadId>()});
        ph.g_min = p.value("g_min", s.defaults.g_min);
        ph.g_max = p.value("g_max", s.defaults.g_max);
        ph.intergreen = p.value("intergreen", s.defaults.intergreen);
        ic.phase_model.phases.push_back(std::move(ph));
      }
      for (const auto& t : n.at("turn_probabilities"))
        ic.turn_probabilities[{t.at(0).get<RoadId>(), t.at(1).get<RoadId>()}] = t.at(2).get<double>();
      s.topology.intersections.push_back(std::move(ic));
    }
    if (j.contains("demand")) {
      const auto& d = j["demand"];
      s.demand.generation_duration = d.value("generation_duration", 900.0);
      for (const auto& [road, pts] : d.at("entry_shares").items())
        for (const auto& p : pts) s.demand.entry_shares[road].push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    } else {
      s.demand = DemandProfile::uniform(s.topology);
    }
    validate_scenario(s);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed scenario file: ") + e.what());
  }
}

inline void write_scenario(std::ostream& os, const Scenario& s) { os << to_json(s).dump(2) << '\n'; }

inline Scenario read_scenario(std::istream& is) {
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed scenario file: ") + e.what());
  }
  return scenario_from_json(j);
}

}  // namespace tuseract
