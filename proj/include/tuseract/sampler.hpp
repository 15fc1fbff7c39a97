#pragma once

// Turn sampling and proximity clustering: turns detected vehicles into
// per-phase cluster sequences, either one realization per sample or a single
// expected inflow with fractional weights.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "tuseract/random.hpp"
#include "tuseract/traffic_model.hpp"

namespace tuseract {

struct DetectedVehicle {
  VehicleId id = 0;
  RoadId entry_road;
  double eta = 0.0;     // arrival at the stop line, seconds
  double weight = 1.0;  // fractional for expected-mode copies
  std::optional<RoadId> known_exit;  // set once the movement is observable
};

struct SampleSet {
  std::vector<InflowSample> samples;
  std::uint64_t seed = 0;

  std::size_t size() const { return samples.size(); }
};

struct ClusteringParams {
  double merge_threshold = 3.0;
  double default_headway = 2.5;           // seconds per vehicle
  std::map<RoadId, double> road_headway;  // overrides per entry road

  double headway(const RoadId& road) const {
    auto it = road_headway.find(road);
    return it == road_headway.end() ? default_headway : it->second;
  }
};

/// Saturation headway of each entry road: `per_lane_headway / lanes`.
inline ClusteringParams clustering_params_for(const NetworkTopology& topology,
                                              const IntersectionConfig& cfg,
                                              double per_lane_headway = 2.5,
                                              double merge_threshold = 3.0) {
  ClusteringParams params;
  params.merge_threshold = merge_threshold;
  params.default_headway = per_lane_headway;
  for (const auto& e : cfg.entry_roads)
    params.road_headway[e] = per_lane_headway / topology.road(e).lanes;
  return params;
}

/// Draws one exit road per vehicle from the turn row of its entry road.
/// Vehicles with a known exit keep it and consume no random draw.
inline std::map<VehicleId, RoadId> sample_turns(std::span<const DetectedVehicle> vehicles,
                                                const IntersectionConfig& cfg, Rng& rng) {
  std::map<VehicleId, RoadId> out;
  std::map<RoadId, std::vector<std::pair<RoadId, double>>> rows;
  for (const auto& v : vehicles) {
    if (v.known_exit) {
      out[v.id] = *v.known_exit;
      continue;
    }
    auto it = rows.find(v.entry_road);
    if (it == rows.end()) it = rows.emplace(v.entry_road, cfg.turn_row(v.entry_road)).first;
    const auto& row = it->second;
    if (row.empty())
      throw std::invalid_argument("no turn probabilities for entry road " + v.entry_road +
                                  " at intersection " + cfg.id);
    const double u = uniform01(rng);
    double acc = 0.0;
    // Falls back to the last positive entry so rounding in the row sum
    // never leaves a vehicle unassigned.
    const RoadId* pick = nullptr;
    for (const auto& [exit, p] : row) {
      if (p <= 0.0) continue;
      pick = &exit;
      acc += p;
      if (u < acc) break;
    }
    if (pick == nullptr)
      throw std::invalid_argument("turn row of " + v.entry_road + " has no positive probability");
    out[v.id] = *pick;
  }
  return out;
}

namespace detail {

inline Cluster close_cluster(std::vector<ClusterMember> members, const ClusteringParams& params) {
  Cluster c;
  std::map<RoadId, double> per_road;
  for (const auto& m : members) {
    c.count += m.weight;
    per_road[m.entry_road] += m.weight;
  }
  c.arrival = members.front().arrival;
  double discharge = 0.0;
  for (const auto& [road, w] : per_road) discharge = std::max(discharge, w * params.headway(road));
  c.length = std::max(members.back().arrival - members.front().arrival, discharge);
  c.composition = std::move(members);
  return c;
}

}  // namespace detail

/// Groups members into per-phase clusters. Vehicles are ordered by arrival;
/// a gap larger than the merge threshold opens a new cluster. Cluster length
/// is the larger of the arrival span and the saturation discharge time, where
/// entry roads feeding the same phase discharge in parallel.
inline InflowSample cluster_vehicles(std::vector<ClusterMember> members, const PhaseModel& pm,
                                     const ClusteringParams& params) {
  if (!(params.merge_threshold > 0.0)) throw std::invalid_argument("merge_threshold must be > 0");
  InflowSample sample;
  sample.per_phase.resize(pm.size());
  std::vector<std::vector<ClusterMember>> by_phase(pm.size());
  for (auto& m : members) by_phase[pm.phase_for_turn({m.entry_road, m.exit_road})].push_back(std::move(m));

  for (std::size_t k = 0; k < pm.size(); ++k) {
    auto& list = by_phase[k];
    std::stable_sort(list.begin(), list.end(), [](const ClusterMember& a, const ClusterMember& b) {
      if (a.arrival != b.arrival) return a.arrival < b.arrival;
      return a.vehicle < b.vehicle;
    });
    std::vector<ClusterMember> open;
    for (auto& m : list) {
      if (!open.empty() && m.arrival - open.back().arrival > params.merge_threshold) {
        sample.per_phase[k].push_back(detail::close_cluster(std::move(open), params));
        open.clear();
      }
      open.push_back(std::move(m));
    }
    if (!open.empty()) sample.per_phase[k].push_back(detail::close_cluster(std::move(open), params));
  }
  return sample;
}

inline InflowSample cluster_vehicles(std::vector<ClusterMember> members, const PhaseModel& pm,
                                     double discharge_headway, double merge_threshold) {
  if (!(discharge_headway > 0.0)) throw std::invalid_argument("discharge_headway must be > 0");
  ClusteringParams params;
  params.default_headway = discharge_headway;
  params.merge_threshold = merge_threshold;
  return cluster_vehicles(std::move(members), pm, params);
}

/// One realization: sample turns, then cluster.
inline InflowSample draw_sample(std::span<const DetectedVehicle> vehicles, const IntersectionConfig& cfg,
                                const ClusteringParams& params, Rng& rng) {
  const auto exits = sample_turns(vehicles, cfg, rng);
  std::vector<ClusterMember> members;
  members.reserve(vehicles.size());
  for (const auto& v : vehicles)
    members.push_back({v.id, v.eta, v.entry_road, exits.at(v.id), v.weight});
  return cluster_vehicles(std::move(members), cfg.phase_model, params);
}

/// Sample j is drawn from substream derive_seed(seed, {j}).
inline SampleSet draw_sample_set(std::span<const DetectedVehicle> vehicles, const IntersectionConfig& cfg,
                                 std::size_t count, std::uint64_t seed, const ClusteringParams& params) {
  if (count < 1) throw std::invalid_argument("sample count must be >= 1");
  SampleSet set;
  set.seed = seed;
  set.samples.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    Rng rng(derive_seed(seed, {j}));
    set.samples.push_back(draw_sample(vehicles, cfg, params, rng));
  }
  return set;
}

/// Variant for coordinated planning, where sample j sees its own extended
/// vehicle list (local plus the non-local arrivals of sample j).
inline SampleSet draw_sample_set(std::span<const std::vector<DetectedVehicle>> per_sample,
                                 const IntersectionConfig& cfg, std::uint64_t seed,
                                 const ClusteringParams& params) {
  if (per_sample.empty()) throw std::invalid_argument("sample count must be >= 1");
  SampleSet set;
  set.seed = seed;
  for (std::size_t j = 0; j < per_sample.size(); ++j) {
    Rng rng(derive_seed(seed, {j}));
    set.samples.push_back(draw_sample(per_sample[j], cfg, params, rng));
  }
  return set;
}

/// Expected-scenario inflow: every vehicle is split into fractional copies,
/// one per turn with positive probability, weighted by that probability.
inline InflowSample expected_inflow(std::span<const DetectedVehicle> vehicles, const IntersectionConfig& cfg,
                                    const ClusteringParams& params) {
  std::vector<ClusterMember> members;
  for (const auto& v : vehicles) {
    if (v.known_exit) {
      members.push_back({v.id, v.eta, v.entry_road, *v.known_exit, v.weight});
      continue;
    }
    const auto row = cfg.turn_row(v.entry_road);
    if (row.empty())
      throw std::invalid_argument("no turn probabilities for entry road " + v.entry_road);
    for (const auto& [exit, p] : row)
      if (p > 0.0) members.push_back({v.id, v.eta, v.entry_road, exit, v.weight * p});
  }
  return cluster_vehicles(std::move(members), cfg.phase_model, params);
}

/// Total vehicle weight over all phases of a sample.
inline double total_weight(const InflowSample& sample) {
  double w = 0.0;
  for (const auto& phase : sample.per_phase)
    for (const auto& c : phase) w += c.count;
  return w;
}

}  // namespace tuseract
