#pragma once

// Sample-based neighbor communication. After solving, an intersection
// projects the departure of every vehicle in every sample and forwards the
// projected arrivals to the neighbor at the end of the vehicle's sampled exit
// road. The receiver appends sample s of every message to its own sample s.

#include <algorithm>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "tuseract/sampler.hpp"
#include "tuseract/scheduler.hpp"
#include "tuseract/traffic_model.hpp"

namespace tuseract {

struct OutflowVehicle {
  VehicleId vehicle = 0;
  double projected_arrival = 0.0;
  double weight = 1.0;

  bool operator==(const OutflowVehicle&) const = default;
};

struct OutflowMessage {
  NodeId from;
  NodeId to;
  RoadId link;
  Seconds sent_at = 0;
  std::vector<std::vector<OutflowVehicle>> per_sample;

  bool operator==(const OutflowMessage&) const = default;
};

/// Departure time of every composition member of every scheduled cluster.
/// Members are spaced evenly over the cluster's service time in proportion to
/// their weight and mapped onto the fragments in order; nobody departs
/// before reaching the stop line.
struct ProjectedDeparture {
  std::size_t sample = 0;
  const ClusterMember* member = nullptr;
  double departure = 0.0;
};

inline std::vector<ProjectedDeparture> project_departures(const Solution& solution,
                                                          const std::vector<InflowSample>& samples, Seconds now) {
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::vector<const Fragment*>> by_cluster;
  for (const auto& f : solution.schedules.fragments) by_cluster[{f.sample, f.phase, f.cluster}].push_back(&f);

  std::vector<ProjectedDeparture> out;
  for (auto& [key, frags] : by_cluster) {
    const auto [s, k, q] = key;
    if (s >= samples.size() || k >= samples[s].per_phase.size() || q >= samples[s].per_phase[k].size())
      throw std::out_of_range("fragment references a cluster that does not exist");
    std::sort(frags.begin(), frags.end(), [](const Fragment* a, const Fragment* b) { return a->start < b->start; });
    const Cluster& c = samples[s].per_phase[k][q];
    const GridCluster g = to_grid(c, now);
    const double spacing = static_cast<double>(g.length) / c.count;
    double before = 0.0;
    for (const auto& m : c.composition) {
      const double offset = before * spacing;
      before += m.weight;
      double cum = 0.0;
      const Fragment* hit = frags.back();
      double within = static_cast<double>(hit->length);
      for (const Fragment* f : frags) {
        if (offset < cum + static_cast<double>(f->length)) {
          hit = f;
          within = offset - cum;
          break;
        }
        cum += static_cast<double>(f->length);
      }
      const double departure = std::max(static_cast<double>(hit->start) + within, m.arrival);
      out.push_back({s, &m, departure});
    }
  }
  return out;
}

/// One message per (neighbor, link) that receives at least one vehicle in
/// some sample; vehicles leaving on sink roads are not reported.
inline std::vector<OutflowMessage> project_outflows(const NodeId& from, const Solution& solution,
                                                    const std::vector<InflowSample>& samples,
                                                    const NetworkTopology& topology, double speed, Seconds now) {
  if (!(speed > 0.0)) throw std::invalid_argument("speed must be positive");
  std::map<RoadId, OutflowMessage> by_link;
  for (const auto& d : project_departures(solution, samples, now)) {
    const Road& link = topology.road(d.member->exit_road);
    if (!topology.is_intersection(link.to)) continue;
    auto [it, fresh] = by_link.try_emplace(link.id);
    OutflowMessage& msg = it->second;
    if (fresh) {
      msg.from = from;
      msg.to = link.to;
      msg.link = link.id;
      msg.sent_at = now;
      msg.per_sample.resize(samples.size());
    }
    msg.per_sample[d.sample].push_back({d.member->vehicle, d.departure + link.length / speed, d.member->weight});
  }
  std::vector<OutflowMessage> out;
  for (auto& [link, msg] : by_link) {
    for (auto& list : msg.per_sample)
      std::sort(list.begin(), list.end(), [](const OutflowVehicle& a, const OutflowVehicle& b) {
        return a.projected_arrival != b.projected_arrival ? a.projected_arrival < b.projected_arrival
                                                          : a.vehicle < b.vehicle;
      });
    out.push_back(std::move(msg));
  }
  return out;
}

/// Extends the local observation with non-local arrivals, sample by sample.
/// A message vehicle enters sample s when its projected arrival lies within
/// the link's local detection horizon plus `horizon_extension`. Vehicles the
/// receiver already observes locally are not duplicated.
inline std::vector<std::vector<DetectedVehicle>> merge_nonlocal(
    const std::vector<DetectedVehicle>& local, const std::vector<OutflowMessage>& inbox, Seconds now,
    double horizon_extension, const std::map<RoadId, double>& local_horizon, std::size_t sample_count) {
  for (const auto& m : inbox)
    if (m.per_sample.size() != sample_count)
      throw std::invalid_argument("message from " + m.from + " carries " + std::to_string(m.per_sample.size()) +
                                  " samples, receiver expects " + std::to_string(sample_count));
  std::set<VehicleId> local_ids;
  for (const auto& v : local) local_ids.insert(v.id);

  std::vector<std::vector<DetectedVehicle>> out(sample_count, local);
  for (std::size_t s = 0; s < sample_count; ++s) {
    std::set<VehicleId> seen = local_ids;
    for (const auto& m : inbox) {
      auto h = local_horizon.find(m.link);
      const double limit = static_cast<double>(now) + (h == local_horizon.end() ? 0.0 : h->second) + horizon_extension;
      for (const auto& v : m.per_sample[s]) {
        if (v.projected_arrival > limit) continue;
        if (!seen.insert(v.vehicle).second) continue;
        out[s].push_back({v.vehicle, m.link, std::max(v.projected_arrival, static_cast<double>(now)), v.weight});
      }
    }
  }
  return out;
}

/// One JSON object per line, for replaying a run's message traffic.
inline void write_message_log(std::ostream& os, Seconds round, const std::vector<OutflowMessage>& messages) {
  os.precision(10);
  for (const auto& m : messages) {
    os << "{\"round\":" << round << ",\"from\":\"" << m.from << "\",\"to\":\"" << m.to << "\",\"link\":\"" << m.link
       << "\",\"samples\":[";
    for (std::size_t s = 0; s < m.per_sample.size(); ++s) {
      os << (s ? "," : "") << '[';
      for (std::size_t i = 0; i < m.per_sample[s].size(); ++i) {
        const auto& v = m.per_sample[s][i];
        os << (i ? "," : "") << '[' << v.vehicle << ',' << v.projected_arrival << ',' << v.weight << ']';
      }
      os << ']';
    }
    os << "]}\n";
  }
}

}  // namespace tuseract
