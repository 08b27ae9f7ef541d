#pragma once

// Marker localization inside a full 3D map. Spherical projection of a whole
// map fails under occlusion and at range, so candidate regions are found
// geometrically (intensity-gradient downsampling, clustering, OBB criteria),
// re-centered on the plane x = 1 m, projected and decoded there, and the
// corners are mapped back into the map frame.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "fidreg/cloud.hpp"
#include "fidreg/detector.hpp"
#include "fidreg/geom.hpp"
#include "fidreg/intensity_image.hpp"
#include "fidreg/marker.hpp"
#include "fidreg/tag_family.hpp"

namespace fidreg {

/// Frame of the intermediate plane: identity rotation, one meter along x.
struct IntermediatePlaneCfg {
  Pose t_in = Pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(1.0, 0.0, 0.0));
};

struct CriteriaOptions {
  double height_sigma = 0.0;   // sensor noise along the surface normal (m)
  double extent_margin = 0.0;  // edge-band width added to each side of the tag (m)
};

/// Marker-size criterion sqrt(2a^2 + t^2) <= |diag| <= sqrt(4a^2 + t^2), squareness
/// 1/1.5 <= l/w <= 1.5 and a thin box, h <= max(4 sigma, 2 t). The upper size
/// bound is tight for a box turned 45 degrees against the tag, so a cluster of
/// edge points that spills past the tag outline needs `extent_margin`; the
/// bound then uses a + 2 * margin.
inline bool satisfies_criteria(const OrientedBox& box, const MarkerSpec& spec,
                               const CriteriaOptions& opts = {}) {
  const double a2 = spec.side * spec.side;
  const double grown = spec.side + 2.0 * opts.extent_margin;
  const double t2 = spec.thickness * spec.thickness;
  const double diag = box.diagonal();
  if (diag < std::sqrt(2.0 * a2 + t2) || diag > std::sqrt(4.0 * grown * grown + t2)) return false;
  if (!(box.w > 0.0)) return false;
  const double ratio = box.l / box.w;
  if (ratio < 1.0 / 1.5 || ratio > 1.5) return false;
  return box.h <= std::max(4.0 * opts.height_sigma, 2.0 * spec.thickness);
}

inline std::vector<OrientedBox> candidate_filter(const std::vector<OrientedBox>& boxes,
                                                 const MarkerSpec& spec,
                                                 const CriteriaOptions& opts = {}) {
  std::vector<OrientedBox> out;
  for (const auto& b : boxes) {
    if (satisfies_criteria(b, spec, opts)) out.push_back(b);
  }
  return out;
}

/// World-from-frame pose whose x axis is the box normal (shortest extent) and
/// whose y, z axes follow the box length and width. Viewed from the origin of
/// the intermediate plane, the candidate then faces along x.
inline Pose plane_frame(const OrientedBox& box) {
  const Pose world_from_box = box.world_from_box();
  Eigen::Matrix3d r;
  r.col(0) = world_from_box.rotation.col(2);
  r.col(1) = world_from_box.rotation.col(0);
  r.col(2) = world_from_box.rotation.col(1);
  return {r, world_from_box.translation};
}

/// p' = T_in * T_obb^-1 * p, with `t_obb` mapping the candidate frame to the
/// map frame.
inline PointCloud to_intermediate_plane(const PointCloud& points, const Pose& t_obb,
                                        const IntermediatePlaneCfg& cfg = {}) {
  if (points.empty()) fail(ErrorCode::kEmptyCloud, "no points to transfer");
  return transformed(points, cfg.t_in * t_obb.inverse());
}

inline Eigen::Vector3d from_intermediate_plane(const Eigen::Vector3d& p, const Pose& t_obb,
                                               const IntermediatePlaneCfg& cfg = {}) {
  return t_obb * (cfg.t_in.inverse() * p);
}

struct CandidateCluster {
  OrientedBox obb;
  PointCloud buffered;
  std::size_t index = 0;  // position among the clusters that passed the criteria
};

/// Map points inside the box with its length and width scaled by
/// `buffer_factor`; the height grows by `height_margin` on each side.
inline PointCloud buffered_extract(const PointCloud& map, const OrientedBox& box,
                                   double buffer_factor, double height_margin) {
  OrientedBox big = box;
  big.l *= buffer_factor;
  big.w *= buffer_factor;
  big.h += 2.0 * height_margin;
  PointCloud out;
  for (const Point& p : map) {
    if (big.contains(p.position, 0.0)) out.push_back(p);
  }
  return out;
}

struct MapLocateConfig {
  std::size_t gradient_k = 10;
  double gradient_threshold = 200.0;  // intensity units per meter
  double cluster_tolerance = 0.0;     // 0: derived from the marker and map spacing
  std::size_t min_cluster_size = 20;
  std::size_t max_cluster_size = 1000000;
  double buffer_factor = 2.0;         // t_b as a multiple of the OBB extents
  CriteriaOptions criteria;           // a zero extent margin is derived from the map spacing
  double resolution = 0.0;            // 0: max(a / 48, 1.5 * spacing) at the plane
  int scope = 256;
  double step = 1.0;
  Preprocess preprocess;
  DetectorOptions detector;
  int corner_window = 8;
  BisectorWeighting weighting = BisectorWeighting::kGeometric;
  double side_tolerance = 0.2;
  IntermediatePlaneCfg plane;
};

struct CandidateReport {
  CandidateCluster cluster;
  Pose t_obb;
  IntensityImage image;          // intermediate-plane projection
  std::vector<int> raw_ids;      // decoded from the raw image
  std::vector<int> flipped_ids;  // decoded from the horizontally flipped image
};

struct MapLocateDebug {
  std::size_t downsampled = 0;
  std::size_t clusters = 0;
  std::vector<CandidateReport> candidates;
};

namespace detail {

inline std::vector<int> queue_ids(const ThresholdSearch& s) {
  std::vector<int> ids;
  for (const auto& q : s.queue) ids.push_back(q.detection.id);
  return ids;
}

}  // namespace detail

/// Candidate boxes of the map that pass the marker criteria, with their
/// buffered point sets.
inline std::vector<CandidateCluster> find_candidates(const PointCloud& map, const MarkerSpec& spec,
                                                     const TagFamily& family,
                                                     const MapLocateConfig& cfg,
                                                     MapLocateDebug* debug = nullptr) {
  const PointCloud edges = downsample_by_gradient(map, cfg.gradient_k, cfg.gradient_threshold);
  if (debug) debug->downsampled = edges.size();
  std::vector<CandidateCluster> out;
  if (edges.empty()) return out;
  const double spacing = estimate_spacing(map);
  double tol = cfg.cluster_tolerance;
  if (!(tol > 0.0)) {
    // Edge points of one tag are at most about a cell apart.
    const double cell = spec.side / family.cells_per_side();
    tol = std::max(1.2 * cell, 3.0 * spacing);
  }
  const auto clusters =
      euclidean_cluster(edges, tol, cfg.min_cluster_size, cfg.max_cluster_size);
  if (debug) debug->clusters = clusters.size();
  CriteriaOptions criteria = cfg.criteria;
  if (!(criteria.extent_margin > 0.0)) criteria.extent_margin = 2.0 * spacing;
  const double margin =
      std::max(4.0 * cfg.criteria.height_sigma, 2.0 * spec.thickness) + 2.0 * spacing;
  for (const PointCloud& c : clusters) {
    OrientedBox box;
    try {
      box = fit_obb(c);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateCluster) throw;
      continue;
    }
    if (!satisfies_criteria(box, spec, criteria)) continue;
    CandidateCluster cand;
    cand.obb = box;
    cand.buffered = buffered_extract(map, box, cfg.buffer_factor, margin);
    cand.index = out.size();
    if (!cand.buffered.empty()) out.push_back(std::move(cand));
  }
  return out;
}

/// Markers located in the map, corners and poses in the map frame. When an
/// id is found by several candidates the one with the lowest e_pp is kept.
inline std::vector<MarkerObservation> locate_markers_in_map(const PointCloud& map,
                                                            const MarkerSpec& spec,
                                                            const TagFamily& family,
                                                            const MapLocateConfig& cfg = {},
                                                            MapLocateDebug* debug = nullptr) {
  if (map.empty()) fail(ErrorCode::kEmptyCloud, "map has no points");
  std::map<int, MarkerObservation> best;
  for (CandidateCluster& cand : find_candidates(map, spec, family, cfg, debug)) {
    const Pose t_obb = plane_frame(cand.obb);
    const PointCloud local = to_intermediate_plane(cand.buffered, t_obb, cfg.plane);
    double res = cfg.resolution;
    if (!(res > 0.0)) {
      res = std::max(spec.side / (8.0 * family.cells_per_side()), 1.5 * estimate_spacing(local));
    }
    const IntensityImage img = project(local, auto_config(local, res, res));
    const IntensityImage flipped = flip_horizontal(img);
    const ThresholdSearch raw_search =
        adaptive_detect(img, family, cfg.scope, cfg.step, cfg.preprocess, cfg.detector);
    const ThresholdSearch flip_search =
        adaptive_detect(flipped, family, cfg.scope, cfg.step, cfg.preprocess, cfg.detector);

    std::vector<std::pair<QueuedDetection, bool>> hits;
    for (const auto& q : raw_search.queue) hits.emplace_back(q, false);
    for (const auto& q : flip_search.queue) {
      if (!raw_search.contains(q.detection.id)) hits.emplace_back(q, true);
    }
    for (const auto& [q, mirrored] : hits) {
      MarkerObservation obs;
      obs.id = q.detection.id;
      obs.lambda = q.lambda;
      obs.scan = -1;
      try {
        for (int s = 0; s < 4; ++s) {
          Eigen::Vector2d px = q.detection.corners_px[s];
          if (mirrored) px.x() = static_cast<double>(img.width() - 1) - px.x();
          obs.corners_px[s] = px;
          const CornerRecovery c = recover_corner(img, px, cfg.corner_window, cfg.weighting);
          obs.corners_3d[s] = from_intermediate_plane(c.point, t_obb, cfg.plane);
          obs.interpolated_corners += c.interpolated ? 1 : 0;
        }
        const AlignResult fit = estimate_marker_pose(obs.corners_3d, spec);
        obs.pose = fit.pose;
        obs.e_pp = fit.e_pp;
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kNoSymmetricPair || e.code() == ErrorCode::kOutOfBounds ||
            e.code() == ErrorCode::kCollinearCorrespondences) {
          continue;
        }
        throw;
      }
      if (!sides_consistent(obs.corners_3d, spec, cfg.side_tolerance)) continue;
      auto it = best.find(obs.id);
      if (it == best.end() || obs.e_pp < it->second.e_pp) best[obs.id] = obs;
    }
    if (debug) {
      debug->candidates.push_back({std::move(cand), t_obb, img, detail::queue_ids(raw_search),
                                   detail::queue_ids(flip_search)});
    }
  }
  std::vector<MarkerObservation> out;
  for (auto& [id, obs] : best) out.push_back(obs);
  return out;
}

}  // namespace fidreg
