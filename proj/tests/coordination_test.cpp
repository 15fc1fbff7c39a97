#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "tuseract/coordination.hpp"
#include "tuseract/random.hpp"

namespace tuseract {
namespace {

// A feeds B over the 300 m link "AB"; A's other exit is the sink "A_out".
NetworkTopology corridor(double ab_probability = 0.5) {
  NetworkTopology net;
  net.roads = {{"A_in", 300, 1, "src", "A"},   {"AB", 300, 1, "A", "B"},      {"A_out", 300, 1, "A", "snk_a"},
               {"B_side", 300, 1, "src_b", "B"}, {"B_out", 300, 1, "B", "snk_b"}};
  IntersectionConfig a;
  a.id = "A";
  a.entry_roads = {"A_in"};
  a.exit_roads = {"AB", "A_out"};
  a.turn_probabilities[{"A_in", "AB"}] = ab_probability;
  a.turn_probabilities[{"A_in", "A_out"}] = 1.0 - ab_probability;
  a.phase_model.phases = {Phase{{{"A_in", "AB"}, {"A_in", "A_out"}}}, Phase{{}}};
  IntersectionConfig b;
  b.id = "B";
  b.entry_roads = {"AB", "B_side"};
  b.exit_roads = {"B_out"};
  b.turn_probabilities[{"AB", "B_out"}] = 1.0;
  b.turn_probabilities[{"B_side", "B_out"}] = 1.0;
  b.phase_model.phases = {Phase{{{"AB", "B_out"}}}, Phase{{{"B_side", "B_out"}}}};
  net.intersections = {a, b};
  return net;
}

Cluster cluster_of(std::vector<ClusterMember> members, double length) {
  Cluster c;
  c.arrival = members.front().arrival;
  c.length = length;
  for (const auto& m : members) c.count += m.weight;
  c.composition = std::move(members);
  return c;
}

InflowSample one_cluster_sample(Cluster c) {
  InflowSample s;
  s.per_phase = {{std::move(c)}, {}};
  return s;
}

Solution single_fragment(std::size_t samples, Seconds start, Seconds length) {
  Solution sol;
  sol.status = SolveStatus::optimal;
  for (std::size_t s = 0; s < samples; ++s) sol.schedules.fragments.push_back({s, 0, 0, 0, start, length});
  return sol;
}

TEST(ProjectOutflows, ArrivalIsDeparturePlusLinkTravelTime) {
  const auto net = corridor();
  const std::vector<InflowSample> samples{one_cluster_sample(cluster_of({{7, 10.0, "A_in", "AB"}}, 2.5))};
  const auto msgs = project_outflows("A", single_fragment(1, 10, 3), samples, net, 10.0, 0);
  ASSERT_EQ(msgs.size(), 1u);
  EXPECT_EQ(msgs[0].from, "A");
  EXPECT_EQ(msgs[0].to, "B");
  EXPECT_EQ(msgs[0].link, "AB");
  ASSERT_EQ(msgs[0].per_sample.size(), 1u);
  ASSERT_EQ(msgs[0].per_sample[0].size(), 1u);
  EXPECT_DOUBLE_EQ(msgs[0].per_sample[0][0].projected_arrival, 40.0);
}

TEST(ProjectOutflows, SinkExitsProduceNoMessage) {
  const auto net = corridor();
  const std::vector<InflowSample> samples{one_cluster_sample(cluster_of({{1, 5.0, "A_in", "A_out"}}, 2.5))};
  EXPECT_TRUE(project_outflows("A", single_fragment(1, 5, 3), samples, net, 10.0, 0).empty());
}

TEST(ProjectOutflows, MembersAreSpacedOverTheServiceTime) {
  const auto net = corridor();
  const std::vector<InflowSample> samples{one_cluster_sample(
      cluster_of({{1, 10.0, "A_in", "AB"}, {2, 10.5, "A_in", "AB"}, {3, 11.0, "A_in", "AB"}}, 6.0))};
  const auto msgs = project_outflows("A", single_fragment(1, 10, 6), samples, net, 10.0, 0);
  ASSERT_EQ(msgs.size(), 1u);
  const auto& list = msgs[0].per_sample[0];
  ASSERT_EQ(list.size(), 3u);
  EXPECT_DOUBLE_EQ(list[0].projected_arrival, 40.0);
  EXPECT_DOUBLE_EQ(list[1].projected_arrival, 42.0);
  EXPECT_DOUBLE_EQ(list[2].projected_arrival, 44.0);
}

TEST(ProjectOutflows, SplitClusterFollowsItsFragments) {
  const auto net = corridor();
  const std::vector<InflowSample> samples{one_cluster_sample(cluster_of(
      {{1, 0.0, "A_in", "AB"}, {2, 0.0, "A_in", "AB"}, {3, 0.0, "A_in", "AB"}, {4, 0.0, "A_in", "AB"}}, 4.0))};
  Solution sol;
  sol.status = SolveStatus::optimal;
  sol.schedules.fragments = {{0, 0, 0, 1, 30, 2}, {0, 0, 0, 0, 2, 2}};
  const auto msgs = project_outflows("A", sol, samples, net, 10.0, 0);
  const auto& list = msgs.at(0).per_sample[0];
  ASSERT_EQ(list.size(), 4u);
  EXPECT_DOUBLE_EQ(list[0].projected_arrival, 32.0);
  EXPECT_DOUBLE_EQ(list[1].projected_arrival, 33.0);
  EXPECT_DOUBLE_EQ(list[2].projected_arrival, 60.0);
  EXPECT_DOUBLE_EQ(list[3].projected_arrival, 61.0);
}

TEST(ProjectOutflows, NobodyDepartsBeforeArriving) {
  const auto net = corridor();
  const std::vector<InflowSample> samples{
      one_cluster_sample(cluster_of({{1, 10.0, "A_in", "AB"}, {2, 18.0, "A_in", "AB"}}, 2.0))};
  const auto msgs = project_outflows("A", single_fragment(1, 10, 9), samples, net, 10.0, 0);
  const auto& list = msgs.at(0).per_sample[0];
  EXPECT_DOUBLE_EQ(list[1].projected_arrival, 48.0);
  for (const auto& v : list) EXPECT_GE(v.projected_arrival, 0.0);
}

TEST(ProjectOutflows, RejectsNonPositiveSpeed) {
  const auto net = corridor();
  EXPECT_THROW(project_outflows("A", Solution{}, {}, net, 0.0, 0), std::invalid_argument);
}

TEST(ProjectOutflows, DeterministicTurnsGiveIdenticalLists) {
  const auto net = corridor(1.0);
  const auto& a = net.intersections[0];
  std::vector<DetectedVehicle> seen;
  for (int i = 0; i < 6; ++i) seen.push_back({static_cast<VehicleId>(i), "A_in", 2.0 + 4.0 * i});
  const auto params = clustering_params_for(net, a);
  const auto set = draw_sample_set(seen, a, 10, 42, params);
  ScheduleProblem p;
  p.phase_model = a.phase_model;
  p.samples = set.samples;
  const auto sol = solve(p, {5.0, 20000, false});
  const auto msgs = project_outflows("A", sol, p.samples, net, 10.0, 0);
  ASSERT_EQ(msgs.size(), 1u);
  ASSERT_EQ(msgs[0].per_sample.size(), 10u);
  EXPECT_EQ(msgs[0].per_sample[0].size(), 6u);
  for (const auto& list : msgs[0].per_sample) EXPECT_EQ(list, msgs[0].per_sample[0]);
}

TEST(ProjectOutflows, ExpectedInflowCarriesFractionalWeights) {
  const auto net = corridor(0.25);
  const auto& a = net.intersections[0];
  const std::vector<DetectedVehicle> seen{{1, "A_in", 3.0}};
  ScheduleProblem p;
  p.phase_model = a.phase_model;
  p.samples = {expected_inflow(seen, a, clustering_params_for(net, a))};
  const auto sol = solve(p, {5.0, 20000, false});
  const auto msgs = project_outflows("A", sol, p.samples, net, 10.0, 0);
  ASSERT_EQ(msgs.size(), 1u);
  ASSERT_EQ(msgs[0].per_sample[0].size(), 1u);
  EXPECT_DOUBLE_EQ(msgs[0].per_sample[0][0].weight, 0.25);

  const auto merged = merge_nonlocal({}, msgs, 0, 1000.0, {}, 1);
  ASSERT_EQ(merged[0].size(), 1u);
  EXPECT_DOUBLE_EQ(merged[0][0].weight, 0.25);
  EXPECT_FALSE(merged[0][0].known_exit.has_value());
}

OutflowMessage message(const NodeId& from, const RoadId& link, std::size_t samples) {
  OutflowMessage m;
  m.from = from;
  m.to = "B";
  m.link = link;
  m.per_sample.resize(samples);
  return m;
}

TEST(MergeNonlocal, EmptyInboxLeavesLocalLists) {
  const std::vector<DetectedVehicle> local{{1, "AB", 3.0}, {2, "B_side", 0.0}};
  const auto out = merge_nonlocal(local, {}, 0, 20.0, {{"AB", 30.0}}, 4);
  ASSERT_EQ(out.size(), 4u);
  for (const auto& list : out) {
    ASSERT_EQ(list.size(), 2u);
    EXPECT_EQ(list[0].id, 1u);
    EXPECT_EQ(list[1].id, 2u);
  }
}

TEST(MergeNonlocal, WindowIsLocalHorizonPlusExtension) {
  auto m = message("A", "AB", 1);
  m.per_sample[0] = {{10, 100.0 + 49.0, 1.0}, {11, 100.0 + 50.0, 1.0}, {12, 100.0 + 51.0, 1.0}};
  const auto out = merge_nonlocal({}, {m}, 100, 20.0, {{"AB", 30.0}}, 1);
  std::set<VehicleId> ids;
  for (const auto& v : out[0]) ids.insert(v.id);
  EXPECT_EQ(ids, (std::set<VehicleId>{10, 11}));
}

TEST(MergeNonlocal, PastProjectionsArriveNow) {
  auto m = message("A", "AB", 1);
  m.per_sample[0] = {{5, 90.0, 1.0}};
  const auto out = merge_nonlocal({}, {m}, 100, 20.0, {{"AB", 30.0}}, 1);
  ASSERT_EQ(out[0].size(), 1u);
  EXPECT_DOUBLE_EQ(out[0][0].eta, 100.0);
  EXPECT_EQ(out[0][0].entry_road, "AB");
}

TEST(MergeNonlocal, SampleIndicesAlignAcrossSenders) {
  auto m1 = message("A", "AB", 5);
  auto m2 = message("C", "CB", 5);
  m1.per_sample[3] = {{100, 10.0, 1.0}};
  m2.per_sample[3] = {{200, 12.0, 1.0}};
  const std::vector<DetectedVehicle> local{{1, "AB", 2.0}};
  const auto out = merge_nonlocal(local, {m1, m2}, 0, 20.0, {{"AB", 30.0}, {"CB", 30.0}}, 5);
  for (std::size_t s = 0; s < 5; ++s) {
    if (s == 3) {
      ASSERT_EQ(out[s].size(), 3u);
      EXPECT_EQ(out[s][1].id, 100u);
      EXPECT_EQ(out[s][2].id, 200u);
      EXPECT_EQ(out[s][2].entry_road, "CB");
    } else {
      ASSERT_EQ(out[s].size(), 1u);
      EXPECT_EQ(out[s][0].id, 1u);
    }
  }
}

TEST(MergeNonlocal, RejectsSampleCountMismatch) {
  EXPECT_THROW(merge_nonlocal({}, {message("A", "AB", 3)}, 0, 20.0, {}, 10), std::invalid_argument);
}

// Random inboxes for the list properties below.
std::vector<OutflowMessage> random_inbox(Rng& rng, std::size_t samples, std::vector<DetectedVehicle>& local) {
  std::vector<OutflowMessage> inbox;
  for (const char* link : {"AB", "CB", "DB"}) {
    auto m = message(link, link, samples);
    for (auto& list : m.per_sample)
      for (int i = 0; i < 8; ++i)
        list.push_back({static_cast<VehicleId>(rng() % 30), 80.0 * uniform01(rng), 1.0});
    inbox.push_back(std::move(m));
  }
  for (int i = 0; i < 5; ++i) local.push_back({static_cast<VehicleId>(rng() % 30), "AB", 10.0 * uniform01(rng)});
  std::sort(local.begin(), local.end(), [](auto& a, auto& b) { return a.id < b.id; });
  local.erase(std::unique(local.begin(), local.end(), [](auto& a, auto& b) { return a.id == b.id; }), local.end());
  return inbox;
}

TEST(MergeNonlocalProperties, NoVehicleAppearsTwice) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<DetectedVehicle> local;
    const auto inbox = random_inbox(rng, 4, local);
    const auto out = merge_nonlocal(local, inbox, 0, 20.0, {{"AB", 30.0}, {"CB", 7.5}}, 4);
    for (const auto& list : out) {
      std::set<VehicleId> ids;
      for (const auto& v : list) EXPECT_TRUE(ids.insert(v.id).second) << "vehicle " << v.id;
      for (const auto& l : local) EXPECT_TRUE(ids.count(l.id));
    }
  }
}

TEST(MergeNonlocalProperties, LargerExtensionNeverRemovesVehicles) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<DetectedVehicle> local;
    const auto inbox = random_inbox(rng, 3, local);
    std::vector<std::set<VehicleId>> previous(3);
    for (double ext : {0.0, 5.0, 20.0, 40.0, 100.0}) {
      const auto out = merge_nonlocal(local, inbox, 0, ext, {{"AB", 30.0}}, 3);
      for (std::size_t s = 0; s < 3; ++s) {
        std::set<VehicleId> ids;
        for (const auto& v : out[s]) ids.insert(v.id);
        EXPECT_TRUE(std::includes(ids.begin(), ids.end(), previous[s].begin(), previous[s].end()));
        previous[s] = ids;
      }
    }
  }
}

TEST(MessageLog, OneJsonObjectPerLine) {
  auto m = message("A", "AB", 2);
  m.per_sample[1] = {{9, 41.5, 1.0}};
  std::ostringstream os;
  write_message_log(os, 12, {m, m});
  std::istringstream is(os.str());
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["round"], 12);
    EXPECT_EQ(j["link"], "AB");
    EXPECT_EQ(j["samples"].size(), 2u);
    EXPECT_DOUBLE_EQ(j["samples"][1][0][1].get<double>(), 41.5);
    ++lines;
  }
  EXPECT_EQ(lines, 2);
}

}  // namespace
}  // namespace tuseract
