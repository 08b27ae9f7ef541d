#pragma once

// Multiview registration: per-scan marker detection, shortest-path
// initialization on the scan-marker graph, factor-graph refinement and the
// merged cloud.

#include <algorithm>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "fidreg/cloud.hpp"
#include "fidreg/factor_graph.hpp"
#include "fidreg/graph.hpp"
#include "fidreg/marker.hpp"
#include "fidreg/tag_family.hpp"

namespace fidreg {

struct RegistrationConfig {
  MarkerSpec spec{0.5, 0.001};
  ScanDetectionConfig detection;
  FactorGraphOptions graph;
  std::size_t anchor = 0;
  bool strict = false;            // unreachable scans become an error
  bool use_first_graph = true;    // false: every scan starts at identity
  bool use_second_graph = true;   // false: report the shortest-path poses
  unsigned threads = 1;           // detection workers
};

struct RegistrationRun {
  std::vector<std::vector<MarkerObservation>> observations;
  InitialPoses initial;
  RegistrationResult result;
};

/// Graph stages on given observations (one list per scan).
inline RegistrationRun register_observations(std::vector<std::vector<MarkerObservation>> observations,
                                             const RegistrationConfig& cfg) {
  RegistrationRun run;
  run.observations = std::move(observations);
  const FirstLevelGraph g = build_first_level(run.observations, cfg.anchor);
  run.initial = initial_poses(g);
  if (cfg.strict && !run.initial.unreachable.empty()) {
    fail(ErrorCode::kDisconnectedInput,
         std::to_string(run.initial.unreachable.size()) + " scan(s) share no marker with the anchor");
  }
  InitialPoses start = run.initial;
  if (!cfg.use_first_graph) {
    for (auto& p : start.poses) {
      if (p) p = Pose::identity();
    }
  }
  const FactorGraphSpec fg = build_factor_graph(run.observations, start, cfg.spec, cfg.graph);
  run.result = cfg.use_second_graph ? optimize(fg, cfg.graph) : extract_result(fg);
  return run;
}

/// Marker observations of every scan, detected independently.
inline std::vector<std::vector<MarkerObservation>> detect_all(const std::vector<PointCloud>& scans,
                                                              const TagFamily& family,
                                                              const RegistrationConfig& cfg) {
  std::vector<std::vector<MarkerObservation>> out(scans.size());
  const auto work = [&](std::size_t i) {
    if (scans[i].empty()) return;
    out[i] = detect_in_scan(scans[i], cfg.detection, family, cfg.spec, static_cast<int>(i));
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(scans.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < scans.size(); ++i) work(i);
    return out;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < scans.size(); i += workers) work(i);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

/// Full pipeline on raw scans (sensor frames).
inline RegistrationRun register_scans(const std::vector<PointCloud>& scans, const TagFamily& family,
                                      const RegistrationConfig& cfg) {
  if (scans.size() < 2) fail(ErrorCode::kInvalidArgument, "registration needs at least 2 scans");
  return register_observations(detect_all(scans, family, cfg), cfg);
}

/// All scans with a pose, transformed into the anchor frame and concatenated.
inline PointCloud merge_scans(const std::vector<PointCloud>& scans,
                              const std::vector<std::optional<Pose>>& poses) {
  if (scans.size() != poses.size()) fail(ErrorCode::kLengthMismatch, "one pose per scan required");
  PointCloud merged;
  for (std::size_t i = 0; i < scans.size(); ++i) {
    if (!poses[i]) continue;
    for (const Point& p : scans[i]) merged.push_back({*poses[i] * p.position, p.intensity});
  }
  return merged;
}

inline nlohmann::json to_json(const RegistrationRun& run) {
  nlohmann::json j;
  const RegistrationResult& r = run.result;
  j["initial_cost"] = r.initial_cost;
  j["final_cost"] = r.final_cost;
  j["iterations"] = r.iterations;
  j["cost_history"] = r.cost_history;
  j["anchor"] = run.initial.anchor;
  j["unreachable"] = r.unreachable;
  j["scans"] = nlohmann::json::array();
  for (std::size_t i = 0; i < r.scan_poses.size(); ++i) {
    nlohmann::json s;
    s["index"] = i;
    s["pose"] = r.scan_poses[i] ? pose_to_json(*r.scan_poses[i]) : nlohmann::json();
    s["initial_pose"] = run.initial.poses[i] ? pose_to_json(*run.initial.poses[i]) : nlohmann::json();
    j["scans"].push_back(s);
  }
  j["markers"] = nlohmann::json::array();
  for (const auto& [id, pose] : r.marker_poses) {
    nlohmann::json m;
    m["id"] = id;
    m["pose"] = pose_to_json(pose);
    m["corners"] = nlohmann::json::array();
    for (const auto& c : r.corners.at(id)) m["corners"].push_back({c.x(), c.y(), c.z()});
    j["markers"].push_back(m);
  }
  j["e_pp"] = nlohmann::json::array();
  for (const auto& scan : run.observations) {
    for (const auto& o : scan) j["e_pp"].push_back({{"scan", o.scan}, {"id", o.id}, {"e_pp", o.e_pp}});
  }
  return j;
}

}  // namespace fidreg
