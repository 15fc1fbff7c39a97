#pragma once

// Hand-built networks shared by the unit tests. Deliberately independent of
// the scenario builders so the builders can be tested against them.

#include <string>

#include "tuseract/traffic_model.hpp"

namespace tuseract::testing {

/// Four-approach intersection "I": phase 0 serves north/south through and
/// right, phase 1 north/south left, phase 2 east/west through and right,
/// phase 3 east/west left. Turn split 0.6 through, 0.2 left, 0.2 right.
inline NetworkTopology four_phase_intersection(double length = 300.0, int lanes = 2) {
  NetworkTopology net;
  for (const char* d : {"N", "S", "E", "W"}) {
    const std::string dir = d;
    net.roads.push_back({dir + "_in", length, lanes, dir + "_src", "I"});
    net.roads.push_back({dir + "_out", length, lanes, "I", dir + "_snk"});
  }
  IntersectionConfig ic;
  ic.id = "I";
  ic.entry_roads = {"N_in", "S_in", "E_in", "W_in"};
  ic.exit_roads = {"N_out", "S_out", "E_out", "W_out"};
  // entry -> {through, left, right}
  const std::string table[4][4] = {{"N_in", "S_out", "E_out", "W_out"},
                                   {"S_in", "N_out", "W_out", "E_out"},
                                   {"E_in", "W_out", "S_out", "N_out"},
                                   {"W_in", "E_out", "N_out", "S_out"}};
  Phase ns_through, ns_left, ew_through, ew_left;
  for (int i = 0; i < 4; ++i) {
    const auto& row = table[i];
    ic.turn_probabilities[{row[0], row[1]}] = 0.6;
    ic.turn_probabilities[{row[0], row[2]}] = 0.2;
    ic.turn_probabilities[{row[0], row[3]}] = 0.2;
    Phase& through = i < 2 ? ns_through : ew_through;
    Phase& left = i < 2 ? ns_left : ew_left;
    through.turns.push_back({row[0], row[1]});
    through.turns.push_back({row[0], row[3]});
    left.turns.push_back({row[0], row[2]});
  }
  ic.phase_model.phases = {ns_through, ns_left, ew_through, ew_left};
  net.intersections.push_back(ic);
  return net;
}

/// Two-phase intersection with deterministic through movements only.
inline NetworkTopology two_phase_intersection(double length = 300.0, int lanes = 1) {
  NetworkTopology net;
  for (const char* d : {"N", "S", "E", "W"}) {
    const std::string dir = d;
    net.roads.push_back({dir + "_in", length, lanes, dir + "_src", "I"});
    net.roads.push_back({dir + "_out", length, lanes, "I", dir + "_snk"});
  }
  IntersectionConfig ic;
  ic.id = "I";
  ic.entry_roads = {"N_in", "S_in", "E_in", "W_in"};
  ic.exit_roads = {"N_out", "S_out", "E_out", "W_out"};
  ic.turn_probabilities[{"N_in", "S_out"}] = 1.0;
  ic.turn_probabilities[{"S_in", "N_out"}] = 1.0;
  ic.turn_probabilities[{"E_in", "W_out"}] = 1.0;
  ic.turn_probabilities[{"W_in", "E_out"}] = 1.0;
  Phase ns, ew;
  ns.turns = {{"N_in", "S_out"}, {"S_in", "N_out"}};
  ew.turns = {{"E_in", "W_out"}, {"W_in", "E_out"}};
  ic.phase_model.phases = {ns, ew};
  net.intersections.push_back(ic);
  return net;
}

}  // namespace tuseract::testing
