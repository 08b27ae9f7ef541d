#pragma once

// Marker detection in a single LiDAR scan: adaptive threshold search over the
// intensity image, 3D corner recovery (with angle-bisector interpolation for
// unobserved corner pixels) and closed-form marker pose estimation.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <set>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "fidreg/cloud.hpp"
#include "fidreg/detector.hpp"
#include "fidreg/geom.hpp"
#include "fidreg/intensity_image.hpp"
#include "fidreg/tag_family.hpp"

namespace fidreg {

/// Square marker of side `side` (m) and sheet thickness `thickness` (m).
struct MarkerSpec {
  double side = 0.0;
  double thickness = 0.0;

  /// Corners in the marker frame, counter-clockwise seen from the front.
  std::array<Eigen::Vector3d, 4> canonical_corners() const {
    const double h = 0.5 * side;
    return {Eigen::Vector3d(-h, -h, 0.0), Eigen::Vector3d(h, -h, 0.0), Eigen::Vector3d(h, h, 0.0),
            Eigen::Vector3d(-h, h, 0.0)};
  }
};

struct MarkerObservation {
  int id = -1;
  int scan = 0;
  std::array<Eigen::Vector2d, 4> corners_px{};
  std::array<Eigen::Vector3d, 4> corners_3d{};
  Pose pose;          // marker frame -> scan frame
  double e_pp = 0.0;  // m^2
  double lambda = 0.0;
  int interpolated_corners = 0;
};

struct QueuedDetection {
  Detection2D detection;
  double lambda = 0.0;  // threshold at which the id entered the queue
};

struct ThresholdSearch {
  int scope = 256;
  double step = 1.0;
  std::vector<QueuedDetection> queue;
  double best_threshold = 0.0;

  bool contains(int id) const {
    for (const auto& q : queue) {
      if (q.detection.id == id) return true;
    }
    return false;
  }
};

/// Binarization followed by optional blur; the detector input for one
/// threshold.
struct Preprocess {
  double blur_sigma = 0.0;  // 0 disables blurring
};

inline BinaryImage preprocess(const IntensityImage& raw, double threshold, const Preprocess& pre) {
  BinaryImage bin = binarize(raw, threshold);
  if (pre.blur_sigma > 0.0) bin = gaussian_blur(bin, pre.blur_sigma);
  return bin;
}

/// Detections at one threshold with duplicate ids removed (first wins).
inline std::vector<Detection2D> detect_at_threshold(const IntensityImage& raw, const TagFamily& family,
                                                    double threshold, const Preprocess& pre = {},
                                                    const DetectorOptions& opts = {}) {
  std::vector<Detection2D> dets = detect_2d(preprocess(raw, threshold, pre), family, opts);
  std::vector<Detection2D> unique;
  std::set<int> seen;
  for (auto& d : dets) {
    if (seen.insert(d.id).second) unique.push_back(d);
  }
  return unique;
}

/// Threshold sweep lambda = step * i, i in [0, scope). Whenever a threshold
/// detects at least as many markers as the queue already holds, unseen ids
/// are appended and that threshold becomes the best one.
inline ThresholdSearch adaptive_detect(const IntensityImage& raw, const TagFamily& family, int scope,
                                       double step, const Preprocess& pre = {},
                                       const DetectorOptions& opts = {}) {
  if (scope < 1) fail(ErrorCode::kInvalidArgument, "search scope must be >= 1");
  if (!(step > 0.0)) fail(ErrorCode::kInvalidArgument, "search step must be positive");
  ThresholdSearch search;
  search.scope = scope;
  search.step = step;
  for (int i = 0; i < scope; ++i) {
    const double lambda = step * i;
    const auto current = detect_at_threshold(raw, family, lambda, pre, opts);
    // A threshold with no detections never becomes the best one.
    if (!current.empty() && current.size() >= search.queue.size()) {
      for (const auto& d : current) {
        if (!search.contains(d.id)) search.queue.push_back({d, lambda});
      }
      search.best_threshold = lambda;
    }
  }
  return search;
}

enum class BisectorWeighting {
  kGeometric,  // interpolated point lies on the bisecting ray (ratio r_d / r_u)
  kAsPrinted,  // p = (mu p_d + p_u) / (1 + mu), mu = r_d / r_u
};

struct CornerRecovery {
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  bool interpolated = false;
  Eigen::Vector3d upper = Eigen::Vector3d::Zero();  // p_u (lower inclination)
  Eigen::Vector3d lower = Eigen::Vector3d::Zero();  // p_d (higher inclination)
};

/// Weighted point on segment [p_u, p_d] for ranges r_u = |p_u|, r_d = |p_d|.
inline Eigen::Vector3d bisector_interpolate(const Eigen::Vector3d& p_u, const Eigen::Vector3d& p_d,
                                            BisectorWeighting weighting = BisectorWeighting::kGeometric) {
  const double mu = p_d.norm() / p_u.norm();
  if (weighting == BisectorWeighting::kAsPrinted) {
    return (mu / (1.0 + mu)) * p_d + (1.0 / (1.0 + mu)) * p_u;
  }
  return (mu / (1.0 + mu)) * p_u + (1.0 / (1.0 + mu)) * p_d;
}

/// 3D position of an image corner. Observed pixels are inverted directly;
/// unobserved ones are interpolated from the nearest pair of observed pixels
/// in the same column placed symmetrically around it (within `window` rows).
inline CornerRecovery recover_corner(const IntensityImage& img, const Eigen::Vector2d& corner_px,
                                     int window = 8,
                                     BisectorWeighting weighting = BisectorWeighting::kGeometric) {
  const long pu = std::lround(corner_px.x());
  const long pv = std::lround(corner_px.y());
  if (pu < 0 || pv < 0 || pu >= img.width() || pv >= img.height()) {
    fail(ErrorCode::kOutOfBounds, "corner outside image");
  }
  CornerRecovery out;
  if (const auto p = unproject(img, corner_px.x(), corner_px.y())) {
    out.point = *p;
    return out;
  }
  const int u = static_cast<int>(pu);
  const int v = static_cast<int>(pv);
  for (int k = 1; k <= window; ++k) {
    if (!img.inside(u, v - k) || !img.inside(u, v + k)) break;
    if (!img.is_observed(u, v - k) || !img.is_observed(u, v + k)) continue;
    out.upper = *unproject(img, u, v - k);
    out.lower = *unproject(img, u, v + k);
    out.point = bisector_interpolate(out.upper, out.lower, weighting);
    out.interpolated = true;
    return out;
  }
  fail(ErrorCode::kNoSymmetricPair, "no observed symmetric pixel pair around corner");
}

inline Eigen::Vector3d corner_to_3d(const IntensityImage& img, const Eigen::Vector2d& corner_px,
                                    int window = 8) {
  return recover_corner(img, corner_px, window).point;
}

/// Pose of the marker frame in the observation frame from four corners.
inline AlignResult estimate_marker_pose(const std::array<Eigen::Vector3d, 4>& corners,
                                        const MarkerSpec& spec) {
  // The canonical square is never degenerate; a collinear observation would
  // leave the rotation about that line undetermined.
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& c : corners) mean += 0.25 * c;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& c : corners) cov += (c - mean) * (c - mean).transpose();
  const Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(cov).eigenvalues();
  if (!(ev(2) > 0.0) || ev(1) <= 1e-12 * ev(2)) {
    fail(ErrorCode::kCollinearCorrespondences, "observed corners are collinear");
  }
  const auto canonical = spec.canonical_corners();
  return align_svd(canonical, corners);
}

/// True when every side of the corner quad is within `tolerance` (fraction)
/// of the marker side.
inline bool sides_consistent(const std::array<Eigen::Vector3d, 4>& corners, const MarkerSpec& spec,
                             double tolerance) {
  for (int s = 0; s < 4; ++s) {
    const double len = (corners[(s + 1) % 4] - corners[s]).norm();
    if (std::abs(len - spec.side) > tolerance * spec.side) return false;
  }
  return true;
}

struct ScanDetectionConfig {
  double azimuth_res = 0.2 * std::numbers::pi / 180.0;
  double inclination_res = 0.2 * std::numbers::pi / 180.0;
  std::optional<ProjectionConfig> projection;  // auto-sized when empty
  int scope = 256;
  double step = 1.0;
  Preprocess preprocess;
  DetectorOptions detector;
  int corner_window = 8;
  BisectorWeighting weighting = BisectorWeighting::kGeometric;
  double side_tolerance = 0.2;
};

struct ScanDetectionDebug {
  IntensityImage raw;
  BinaryImage best;
  ThresholdSearch search;
};

/// Full single-scan pipeline: project, adaptive threshold search, corner
/// recovery and pose estimation. Observations that fail corner recovery or
/// the side-length check are dropped.
inline std::vector<MarkerObservation> detect_in_scan(const PointCloud& cloud,
                                                     const ScanDetectionConfig& cfg,
                                                     const TagFamily& family, const MarkerSpec& spec,
                                                     int scan_index = 0,
                                                     ScanDetectionDebug* debug = nullptr) {
  if (cloud.empty()) fail(ErrorCode::kEmptyCloud, "scan has no points");
  const ProjectionConfig proj =
      cfg.projection ? *cfg.projection : auto_config(cloud, cfg.azimuth_res, cfg.inclination_res);
  const IntensityImage raw = project(cloud, proj);
  const ThresholdSearch search =
      adaptive_detect(raw, family, cfg.scope, cfg.step, cfg.preprocess, cfg.detector);

  std::vector<MarkerObservation> out;
  for (const auto& q : search.queue) {
    MarkerObservation obs;
    obs.id = q.detection.id;
    obs.scan = scan_index;
    obs.corners_px = q.detection.corners_px;
    obs.lambda = q.lambda;
    try {
      for (int s = 0; s < 4; ++s) {
        const CornerRecovery c =
            recover_corner(raw, obs.corners_px[s], cfg.corner_window, cfg.weighting);
        obs.corners_3d[s] = c.point;
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
    out.push_back(obs);
  }
  if (debug) {
    debug->raw = raw;
    debug->best = preprocess(raw, search.best_threshold, cfg.preprocess);
    debug->search = search;
  }
  return out;
}

// JSON lines interchange: {scan, id, corners_px[4], corners_3d[4], pose
// (4x4 row-major), e_pp, lambda}.

inline nlohmann::json pose_to_json(const Pose& pose) {
  const Eigen::Matrix4d m = pose.matrix();
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < 4; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
  return rows;
}

inline Pose pose_from_json(const nlohmann::json& j) {
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return Pose::from_matrix(m);
}

inline nlohmann::json to_json(const MarkerObservation& obs) {
  nlohmann::json j;
  j["scan"] = obs.scan;
  j["id"] = obs.id;
  j["corners_px"] = nlohmann::json::array();
  j["corners_3d"] = nlohmann::json::array();
  for (int s = 0; s < 4; ++s) {
    j["corners_px"].push_back({obs.corners_px[s].x(), obs.corners_px[s].y()});
    j["corners_3d"].push_back({obs.corners_3d[s].x(), obs.corners_3d[s].y(), obs.corners_3d[s].z()});
  }
  j["pose"] = pose_to_json(obs.pose);
  j["e_pp"] = obs.e_pp;
  j["lambda"] = obs.lambda;
  return j;
}

inline MarkerObservation observation_from_json(const nlohmann::json& j) {
  MarkerObservation obs;
  obs.scan = j.at("scan").get<int>();
  obs.id = j.at("id").get<int>();
  for (int s = 0; s < 4; ++s) {
    const auto& px = j.at("corners_px").at(s);
    obs.corners_px[s] = {px.at(0).get<double>(), px.at(1).get<double>()};
    const auto& p = j.at("corners_3d").at(s);
    obs.corners_3d[s] = {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()};
  }
  obs.pose = pose_from_json(j.at("pose"));
  obs.e_pp = j.at("e_pp").get<double>();
  obs.lambda = j.at("lambda").get<double>();
  return obs;
}

}  // namespace fidreg
