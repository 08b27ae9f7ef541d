#pragma once

// First-level graph: scans and markers as nodes, observations as edges
// weighted by the pose-fit error e_pp. Shortest paths from the anchor scan
// give the initial scan poses.

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <vector>

#include "fidreg/error.hpp"
#include "fidreg/geom.hpp"
#include "fidreg/marker.hpp"

namespace fidreg {

inline constexpr double kMinEdgeWeight = 1e-12;

struct GraphEdge {
  std::size_t scan = 0;
  std::size_t marker = 0;  // index into FirstLevelGraph::marker_ids
  double weight = 0.0;
  Pose measured;           // marker frame -> scan frame
};

/// Bipartite graph. Node n < scan_count is scan n; node scan_count + k is
/// marker k (markers sorted by id).
struct FirstLevelGraph {
  std::size_t scan_count = 0;
  std::vector<int> marker_ids;
  std::vector<GraphEdge> edges;
  std::size_t anchor = 0;

  std::size_t node_count() const { return scan_count + marker_ids.size(); }
  std::size_t marker_node(std::size_t k) const { return scan_count + k; }
  bool is_scan(std::size_t node) const { return node < scan_count; }

  std::optional<std::size_t> marker_index(int id) const {
    const auto it = std::lower_bound(marker_ids.begin(), marker_ids.end(), id);
    if (it == marker_ids.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - marker_ids.begin());
  }

  const GraphEdge* find_edge(std::size_t scan, std::size_t marker) const {
    for (const auto& e : edges) {
      if (e.scan == scan && e.marker == marker) return &e;
    }
    return nullptr;
  }

  /// Neighbors of every node as (node, edge index), sorted by node.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adjacency() const {
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(node_count());
    for (std::size_t e = 0; e < edges.size(); ++e) {
      adj[edges[e].scan].emplace_back(marker_node(edges[e].marker), e);
      adj[marker_node(edges[e].marker)].emplace_back(edges[e].scan, e);
    }
    for (auto& a : adj) std::sort(a.begin(), a.end());
    return adj;
  }
};

/// One node per input scan (even without observations) and per distinct
/// marker id. Repeated (scan, marker) observations keep the lowest e_pp.
inline FirstLevelGraph build_first_level(const std::vector<std::vector<MarkerObservation>>& observations,
                                         std::size_t anchor = 0) {
  FirstLevelGraph g;
  g.scan_count = observations.size();
  std::size_t total = 0;
  for (const auto& scan : observations) {
    total += scan.size();
    for (const auto& o : scan) g.marker_ids.push_back(o.id);
  }
  if (total == 0) fail(ErrorCode::kNoObservations, "no marker observations in any scan");
  if (anchor >= g.scan_count) fail(ErrorCode::kInvalidArgument, "anchor scan out of range");
  g.anchor = anchor;
  std::sort(g.marker_ids.begin(), g.marker_ids.end());
  g.marker_ids.erase(std::unique(g.marker_ids.begin(), g.marker_ids.end()), g.marker_ids.end());

  std::map<std::pair<std::size_t, std::size_t>, GraphEdge> best;
  for (std::size_t i = 0; i < observations.size(); ++i) {
    for (const auto& o : observations[i]) {
      const std::size_t k = *g.marker_index(o.id);
      GraphEdge e{i, k, std::max(o.e_pp, kMinEdgeWeight), o.pose};
      auto it = best.find({i, k});
      if (it == best.end() || e.weight < it->second.weight) best[{i, k}] = e;
    }
  }
  for (auto& [key, e] : best) g.edges.push_back(e);
  return g;
}

struct ShortestPaths {
  std::vector<double> cost;                     // infinity when unreachable
  std::vector<std::vector<std::size_t>> path;   // node sequence from the source
};

/// Dijkstra from `source`. Among equal-cost paths the lexicographically
/// smallest node sequence wins.
inline ShortestPaths shortest_paths(const FirstLevelGraph& g, std::size_t source) {
  const std::size_t n = g.node_count();
  if (source >= n) fail(ErrorCode::kInvalidArgument, "source node out of range");
  const auto adj = g.adjacency();
  ShortestPaths sp;
  sp.cost.assign(n, std::numeric_limits<double>::infinity());
  sp.path.assign(n, {});
  sp.cost[source] = 0.0;
  sp.path[source] = {source};

  const auto better = [&](double c, const std::vector<std::size_t>& p, std::size_t node) {
    return c < sp.cost[node] || (c == sp.cost[node] && p < sp.path[node]);
  };
  std::vector<char> done(n, 0);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  heap.emplace(0.0, source);
  while (!heap.empty()) {
    const auto [c, u] = heap.top();
    heap.pop();
    if (done[u] || c != sp.cost[u]) continue;
    // Several nodes can share the minimal cost; settle the one with the
    // smallest path first so ties propagate deterministically.
    done[u] = 1;
    for (const auto& [v, e] : adj[u]) {
      if (done[v]) continue;
      const double nc = c + g.edges[e].weight;
      std::vector<std::size_t> np = sp.path[u];
      np.push_back(v);
      if (better(nc, np, v)) {
        sp.cost[v] = nc;
        sp.path[v] = std::move(np);
        heap.emplace(nc, v);
      }
    }
  }
  return sp;
}

struct InitialPoses {
  std::size_t anchor = 0;
  std::vector<std::optional<Pose>> poses;  // scan -> anchor frame
  std::vector<std::size_t> unreachable;
  ShortestPaths paths;
};

/// Scan poses in the anchor frame chained along shortest paths: across
/// marker j from scan a to scan b, T_b = T_a * T_a^j * (T_b^j)^-1.
inline InitialPoses initial_poses(const FirstLevelGraph& g) {
  InitialPoses out;
  out.anchor = g.anchor;
  out.paths = shortest_paths(g, g.anchor);
  out.poses.assign(g.scan_count, std::nullopt);
  for (std::size_t i = 0; i < g.scan_count; ++i) {
    const auto& path = out.paths.path[i];
    if (path.empty()) {
      out.unreachable.push_back(i);
      continue;
    }
    Pose t = Pose::identity();
    for (std::size_t h = 0; h + 2 < path.size(); h += 2) {
      const std::size_t marker = path[h + 1] - g.scan_count;
      const GraphEdge* from = g.find_edge(path[h], marker);
      const GraphEdge* to = g.find_edge(path[h + 2], marker);
      t = t * from->measured * to->measured.inverse();
    }
    out.poses[i] = t;
  }
  return out;
}

}  // namespace fidreg
