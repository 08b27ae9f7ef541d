#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "fidreg/graph.hpp"
#include "fidreg/simulator.hpp"
#include "support/random.hpp"

using namespace fidreg;

namespace {

MarkerObservation observation(int scan, int id, double e_pp, const Pose& pose = Pose::identity()) {
  MarkerObservation o;
  o.scan = scan;
  o.id = id;
  o.e_pp = e_pp;
  o.pose = pose;
  return o;
}

double pose_gap(const Pose& a, const Pose& b) { return se3_ominus(a, b).norm(); }

// Minimum path cost from `source` to every node by enumerating simple paths.
std::vector<double> brute_force_costs(const FirstLevelGraph& g, std::size_t source) {
  const auto adj = g.adjacency();
  std::vector<double> best(g.node_count(), std::numeric_limits<double>::infinity());
  std::vector<char> on_path(g.node_count(), 0);
  const auto walk = [&](auto&& self, std::size_t node, double cost) -> void {
    best[node] = std::min(best[node], cost);
    on_path[node] = 1;
    for (const auto& [next, e] : adj[node]) {
      if (!on_path[next]) self(self, next, cost + g.edges[e].weight);
    }
    on_path[node] = 0;
  };
  walk(walk, source, 0.0);
  return best;
}

double path_cost(const FirstLevelGraph& g, const std::vector<std::size_t>& path) {
  double c = 0.0;
  for (std::size_t h = 0; h + 1 < path.size(); ++h) {
    const std::size_t a = path[h];
    const std::size_t b = path[h + 1];
    const GraphEdge* e = g.is_scan(a) ? g.find_edge(a, b - g.scan_count) : g.find_edge(b, a - g.scan_count);
    EXPECT_NE(e, nullptr);
    if (e) c += e->weight;
  }
  return c;
}

}  // namespace

TEST(FirstLevelGraph, StructuralCounts) {
  const FirstLevelGraph two = build_first_level({{observation(0, 5, 0.1)}, {observation(1, 5, 0.2)}});
  EXPECT_EQ(two.node_count(), 3u);
  EXPECT_EQ(two.edges.size(), 2u);

  const FirstLevelGraph g = build_first_level(
      {{observation(0, 1, 0.1), observation(0, 2, 0.1)}, {observation(1, 2, 0.1), observation(1, 3, 0.1)}});
  EXPECT_EQ(g.node_count(), 5u);
  EXPECT_EQ(g.edges.size(), 4u);
  for (const auto& e : g.edges) {
    EXPECT_LT(e.scan, g.scan_count);
    EXPECT_LT(e.marker, g.marker_ids.size());
  }
  EXPECT_EQ(g.marker_ids, (std::vector<int>{1, 2, 3}));

  const FirstLevelGraph lonely = build_first_level({{observation(0, 4, 0.1)}, {}});
  EXPECT_EQ(lonely.node_count(), 3u);
  EXPECT_TRUE(lonely.adjacency()[1].empty());
}

TEST(FirstLevelGraph, DuplicatesKeepLowestErrorAndWeightsAreFloored) {
  const Pose better(rot_z(0.1), Eigen::Vector3d(1, 0, 0));
  const FirstLevelGraph g = build_first_level(
      {{observation(0, 7, 0.5), observation(0, 7, 0.2, better), observation(0, 8, 0.0)}});
  ASSERT_EQ(g.edges.size(), 2u);
  const GraphEdge* e7 = g.find_edge(0, *g.marker_index(7));
  ASSERT_NE(e7, nullptr);
  EXPECT_EQ(e7->weight, 0.2);
  EXPECT_LT(pose_gap(e7->measured, better), 1e-15);
  EXPECT_EQ(g.find_edge(0, *g.marker_index(8))->weight, kMinEdgeWeight);
}

TEST(FirstLevelGraph, Errors) {
  EXPECT_THROW(build_first_level({{}, {}}), Error);
  EXPECT_THROW(build_first_level({}), Error);
  EXPECT_THROW(build_first_level({{observation(0, 1, 0.1)}}, 3), Error);
}

TEST(ShortestPaths, MatchesBruteForceOnSmallGraphs) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> count(1, 4);
  std::uniform_real_distribution<double> weight(0.01, 1.0);
  std::bernoulli_distribution present(0.55);
  int checked = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const int scans = count(rng);
    const int markers = count(rng);
    std::vector<std::vector<MarkerObservation>> obs(static_cast<std::size_t>(scans));
    for (int i = 0; i < scans; ++i) {
      for (int j = 0; j < markers; ++j) {
        if (present(rng)) obs[static_cast<std::size_t>(i)].push_back(observation(i, 10 + j, weight(rng)));
      }
    }
    std::size_t total = 0;
    for (const auto& s : obs) total += s.size();
    if (total == 0) continue;
    const FirstLevelGraph g = build_first_level(obs);
    const ShortestPaths sp = shortest_paths(g, 0);
    const auto oracle = brute_force_costs(g, 0);
    for (std::size_t n = 0; n < g.node_count(); ++n) {
      if (std::isinf(oracle[n])) {
        EXPECT_TRUE(std::isinf(sp.cost[n]));
        EXPECT_TRUE(sp.path[n].empty());
        continue;
      }
      EXPECT_NEAR(sp.cost[n], oracle[n], 1e-12);
      ASSERT_FALSE(sp.path[n].empty());
      EXPECT_EQ(sp.path[n].front(), 0u);
      EXPECT_EQ(sp.path[n].back(), n);
      EXPECT_NEAR(path_cost(g, sp.path[n]), sp.cost[n], 1e-12);
    }
    ++checked;
  }
  EXPECT_GT(checked, 1500);
}

TEST(ShortestPaths, TiesPickSmallestNodeSequence) {
  // Scan 0 and scan 1 both see markers 1 and 2 with equal weights.
  const FirstLevelGraph g = build_first_level({{observation(0, 1, 0.5), observation(0, 2, 0.5)},
                                               {observation(1, 2, 0.5), observation(1, 1, 0.5)}});
  const ShortestPaths sp = shortest_paths(g, 0);
  EXPECT_EQ(sp.path[1], (std::vector<std::size_t>{0, 2, 1}));
  EXPECT_DOUBLE_EQ(sp.cost[1], 1.0);
}

TEST(InitialPoses, ChainMatchesSimulatorTruth) {
  Scene sc;
  const int wall = sc.add_plane({4, 0.5, 0}, {-1, -0.2, 0}, 3, 3, 120);
  sc.add_marker({2, wall, {0.1, -0.2}, 0.3, 0.6});
  const std::vector<Pose> views = {pose_from_rpy({0, 0, 0}, {0, 0, 0}),
                                   pose_from_rpy({0.5, 1.2, 0.3}, {0.05, -0.1, -0.4})};
  const auto obs = synthesize_observations(sc, views, 0.0, 1);
  const InitialPoses init = initial_poses(build_first_level(obs));
  ASSERT_TRUE(init.poses[1].has_value());
  EXPECT_LT(pose_gap(*init.poses[0], Pose::identity()), 1e-15);
  EXPECT_LT(pose_gap(*init.poses[1], views[0].inverse() * views[1]), 1e-9);
}

TEST(InitialPoses, PrefersLowerErrorRoute) {
  std::mt19937_64 rng(4);
  const std::vector<Pose> scans = {Pose::identity(), fidreg::testing::random_pose(rng), fidreg::testing::random_pose(rng)};
  const std::vector<Pose> markers = {fidreg::testing::random_pose(rng), fidreg::testing::random_pose(rng),
                                     fidreg::testing::random_pose(rng)};
  const auto seen = [&](int scan, int marker, double e_pp, const Pose& bias = Pose::identity()) {
    return observation(scan, marker + 1, e_pp,
                       scans[static_cast<std::size_t>(scan)].inverse() * markers[static_cast<std::size_t>(marker)] * bias);
  };
  // f0-m1-f1-m2-f2 is consistent; the direct route f0-m3-f2 is biased and
  // costs more.
  const Pose bias(rot_z(0.2), Eigen::Vector3d(0.1, 0, 0));
  const std::vector<std::vector<MarkerObservation>> obs = {
      {seen(0, 0, 0.01), seen(0, 2, 0.2)},
      {seen(1, 0, 0.01), seen(1, 1, 0.01)},
      {seen(2, 1, 0.01), seen(2, 2, 0.2, bias)}};
  const FirstLevelGraph g = build_first_level(obs);
  const InitialPoses init = initial_poses(g);
  EXPECT_EQ(init.paths.path[2], (std::vector<std::size_t>{0, 3, 1, 4, 2}));
  EXPECT_NEAR(init.paths.cost[2], brute_force_costs(g, 0)[2], 1e-15);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LT(pose_gap(*init.poses[i], scans[i]), 1e-9) << i;
}

TEST(InitialPoses, UnreachableScansAreListed) {
  const InitialPoses init = initial_poses(
      build_first_level({{observation(0, 1, 0.1)}, {observation(1, 1, 0.1)}, {}, {observation(3, 9, 0.1)}}));
  EXPECT_EQ(init.unreachable, (std::vector<std::size_t>{2, 3}));
  EXPECT_FALSE(init.poses[2].has_value());
  EXPECT_FALSE(init.poses[3].has_value());
  EXPECT_TRUE(init.poses[1].has_value());
}

TEST(InitialPoses, AnchorOverride) {
  std::mt19937_64 rng(8);
  const Pose a = fidreg::testing::random_pose(rng);
  const Pose b = fidreg::testing::random_pose(rng);
  const Pose m = fidreg::testing::random_pose(rng);
  const InitialPoses init =
      initial_poses(build_first_level({{observation(0, 1, 0.1, a.inverse() * m)},
                                       {observation(1, 1, 0.1, b.inverse() * m)}}, 1));
  EXPECT_LT(pose_gap(*init.poses[1], Pose::identity()), 1e-15);
  EXPECT_LT(pose_gap(*init.poses[0], b.inverse() * a), 1e-9);
}
