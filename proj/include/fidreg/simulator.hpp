#pragma once

// Synthetic LiDAR scenes: rectangular planes carrying thin-sheet tags, ray
// casting with a mechanical grid or a rose-curve (solid-state) pattern, range
// and intensity noise, dense map sampling and multi-view datasets.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "fidreg/cloud.hpp"
#include "fidreg/geom.hpp"
#include "fidreg/marker.hpp"
#include "fidreg/metrics.hpp"
#include "fidreg/tag_family.hpp"

namespace fidreg {

/// Rectangle centered at the origin of its local frame, in the local z = 0
/// plane. `pose` maps plane-local to world coordinates.
struct PlaneSurface {
  Pose pose;
  double width = 1.0;   // along local x
  double height = 1.0;  // along local y
  double intensity = 120.0;
};

/// A tag printed on a plane. The marker frame is the plane frame rotated
/// in-plane by `angle` and shifted to `center` (plane-local x, y).
struct MarkerPlacement {
  int id = 0;
  int plane = 0;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double angle = 0.0;
  double side = 0.5;
  double white = 220.0;
  double black = 30.0;
};

struct Scene {
  std::vector<PlaneSurface> planes;
  std::vector<MarkerPlacement> markers;
  TagFamily family = builtin_family();

  /// Plane whose local z axis points along `facing` (towards the viewer),
  /// with local y as close to world up as possible. Local x then points to
  /// the viewer's right.
  int add_plane(const Eigen::Vector3d& center, const Eigen::Vector3d& facing, double width,
                double height, double intensity = 120.0) {
    const Eigen::Vector3d z = facing.normalized();
    Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
    if (std::abs(up.dot(z)) > 0.99) up = Eigen::Vector3d::UnitY();
    const Eigen::Vector3d y = (up - up.dot(z) * z).normalized();
    const Eigen::Vector3d x = y.cross(z);
    Eigen::Matrix3d r;
    r.col(0) = x;
    r.col(1) = y;
    r.col(2) = z;
    planes.push_back({Pose(r, center), width, height, intensity});
    return static_cast<int>(planes.size()) - 1;
  }

  int add_marker(const MarkerPlacement& m) {
    if (m.plane < 0 || m.plane >= static_cast<int>(planes.size())) {
      fail(ErrorCode::kInvalidArgument, "marker references a missing plane");
    }
    if (m.id < 0 || m.id >= static_cast<int>(family.codes.size())) {
      fail(ErrorCode::kInvalidArgument, "marker id is not in the family");
    }
    const PlaneSurface& p = planes[static_cast<std::size_t>(m.plane)];
    const double reach = 0.5 * m.side * (std::abs(std::cos(m.angle)) + std::abs(std::sin(m.angle)));
    if (std::abs(m.center.x()) + reach > 0.5 * p.width + 1e-9 ||
        std::abs(m.center.y()) + reach > 0.5 * p.height + 1e-9) {
      fail(ErrorCode::kInvalidArgument, "marker does not fit on its plane");
    }
    markers.push_back(m);
    return static_cast<int>(markers.size()) - 1;
  }

  /// Marker frame -> world.
  Pose marker_pose(std::size_t k) const {
    const MarkerPlacement& m = markers[k];
    const Pose local(so3_exp(Eigen::Vector3d(0, 0, m.angle)),
                     Eigen::Vector3d(m.center.x(), m.center.y(), 0.0));
    return planes[static_cast<std::size_t>(m.plane)].pose * local;
  }

  std::array<Eigen::Vector3d, 4> marker_corners(std::size_t k) const {
    const MarkerSpec spec{markers[k].side, 0.0};
    const Pose t = marker_pose(k);
    auto c = spec.canonical_corners();
    for (auto& p : c) p = t * p;
    return c;
  }

  /// Index of the marker placement with tag id `id`, if any.
  std::optional<std::size_t> find_marker(int id) const {
    for (std::size_t k = 0; k < markers.size(); ++k) {
      if (markers[k].id == id) return k;
    }
    return std::nullopt;
  }

  /// Intensity of plane `plane` at world point `p` (no noise). Markers added
  /// later are drawn on top.
  double surface_intensity(std::size_t plane, const Eigen::Vector3d& p) const {
    double level = planes[plane].intensity;
    const int cells = family.cells_per_side();
    for (std::size_t k = 0; k < markers.size(); ++k) {
      const MarkerPlacement& m = markers[k];
      if (m.plane != static_cast<int>(plane)) continue;
      const Eigen::Vector3d q = marker_pose(k).inverse() * p;
      const double h = 0.5 * m.side;
      if (std::abs(q.x()) > h || std::abs(q.y()) > h) continue;
      // Tag cell (i, j): i grows towards the marker's -x, j towards +y.
      const int i = std::clamp(static_cast<int>(std::floor(cells * (h - q.x()) / m.side)), 0, cells - 1);
      const int j = std::clamp(static_cast<int>(std::floor(cells * (q.y() + h) / m.side)), 0, cells - 1);
      const bool border = i < family.border || j < family.border || i >= cells - family.border ||
                          j >= cells - family.border;
      const bool white = !border && family.bit(family.codes[static_cast<std::size_t>(m.id)],
                                               i - family.border, j - family.border);
      level = white ? m.white : m.black;
    }
    return level;
  }
};

struct RayHit {
  double distance = 0.0;
  std::size_t plane = 0;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();  // world
};

/// Nearest plane hit along origin + s * dir (dir unit), s in (0, max_range].
inline std::optional<RayHit> cast_ray(const Scene& scene, const Eigen::Vector3d& origin,
                                      const Eigen::Vector3d& dir, double max_range) {
  std::optional<RayHit> best;
  for (std::size_t k = 0; k < scene.planes.size(); ++k) {
    const PlaneSurface& pl = scene.planes[k];
    const Eigen::Vector3d n = pl.pose.rotation.col(2);
    const double denom = n.dot(dir);
    if (std::abs(denom) < 1e-12) continue;
    const double s = n.dot(pl.pose.translation - origin) / denom;
    if (!(s > 1e-9) || s > max_range) continue;
    if (best && s >= best->distance) continue;
    const Eigen::Vector3d hit = origin + s * dir;
    const Eigen::Vector3d local = pl.pose.inverse() * hit;
    if (std::abs(local.x()) > 0.5 * pl.width || std::abs(local.y()) > 0.5 * pl.height) continue;
    best = RayHit{s, k, hit};
  }
  return best;
}

enum class ScanPattern { kMechanical, kSolidState };

struct SensorModel {
  ScanPattern pattern = ScanPattern::kMechanical;
  // Mechanical grid: rays at integer multiples of the resolutions.
  double azimuth_res = 0.2 * std::numbers::pi / 180.0;
  double inclination_res = 0.2 * std::numbers::pi / 180.0;
  double azimuth_min = -std::numbers::pi;
  double azimuth_max = std::numbers::pi;
  double inclination_min = -15.0 * std::numbers::pi / 180.0;
  double inclination_max = 15.0 * std::numbers::pi / 180.0;
  // Solid state: rose curve rho = radius * cos(petal_ratio * t) around the
  // forward axis, sampled every `curve_step` for `samples` points.
  double fov_radius = 20.0 * std::numbers::pi / 180.0;
  double petal_ratio = (1.0 + std::sqrt(5.0)) / 2.0 * 0.1;
  double curve_step = 2e-3;
  std::size_t samples = 200000;

  double range_noise = 0.0;
  double intensity_noise = 0.0;
  double max_range = 200.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(azimuth_res > 0.0) || !(inclination_res > 0.0)) {
      fail(ErrorCode::kInvalidArgument, "sensor resolutions must be positive");
    }
    if (!(range_noise >= 0.0) || !(intensity_noise >= 0.0)) {
      fail(ErrorCode::kInvalidArgument, "noise levels must be non-negative");
    }
    if (!(fov_radius > 0.0) || !(curve_step > 0.0) || !(max_range > 0.0)) {
      fail(ErrorCode::kInvalidArgument, "invalid solid-state pattern parameters");
    }
  }
};

/// Ray directions (sensor frame, unit) of the scan pattern.
inline std::vector<Eigen::Vector3d> pattern_directions(const SensorModel& model) {
  model.validate();
  std::vector<Eigen::Vector3d> dirs;
  if (model.pattern == ScanPattern::kMechanical) {
    const long k0 = static_cast<long>(std::ceil(model.azimuth_min / model.azimuth_res - 1e-9));
    const long k1 = static_cast<long>(std::floor(model.azimuth_max / model.azimuth_res + 1e-9));
    const long j0 = static_cast<long>(std::ceil(model.inclination_min / model.inclination_res - 1e-9));
    const long j1 = static_cast<long>(std::floor(model.inclination_max / model.inclination_res + 1e-9));
    for (long j = j0; j <= j1; ++j) {
      for (long k = k0; k <= k1; ++k) {
        // Skip the duplicate seam ray at azimuth +pi.
        if (k * model.azimuth_res >= std::numbers::pi - 1e-12) continue;
        dirs.push_back(from_spherical(k * model.azimuth_res, j * model.inclination_res, 1.0));
      }
    }
    return dirs;
  }
  dirs.reserve(model.samples);
  for (std::size_t n = 0; n < model.samples; ++n) {
    const double t = static_cast<double>(n) * model.curve_step;
    const double rho = model.fov_radius * std::cos(model.petal_ratio * t);
    dirs.push_back(from_spherical(rho * std::cos(t), rho * std::sin(t), 1.0));
  }
  return dirs;
}

/// One scan from `sensor_pose` (sensor -> world). Points are returned in the
/// sensor frame. Each hit draws one range and one intensity noise sample, so
/// the geometry does not depend on the tags.
inline PointCloud sample_scan(const Scene& scene, const Pose& sensor_pose,
                              const SensorModel& model) {
  std::mt19937_64 rng(model.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  PointCloud cloud;
  for (const Eigen::Vector3d& d : pattern_directions(model)) {
    const Eigen::Vector3d dw = sensor_pose.rotation * d;
    const auto hit = cast_ray(scene, sensor_pose.translation, dw, model.max_range);
    if (!hit) continue;
    const double dr = model.range_noise * unit(rng);
    const double di = model.intensity_noise * unit(rng);
    const double level = std::clamp(scene.surface_intensity(hit->plane, hit->point) + di, 0.0, 255.0);
    cloud.push_back({d * (hit->distance + dr), level});
  }
  return cloud;
}

/// Dense surface sampling of every plane on a square grid of `spacing`, with
/// Gaussian noise of `noise` along each plane normal. World frame.
inline PointCloud sample_map(const Scene& scene, double spacing, double noise = 0.0,
                             std::uint64_t seed = 1) {
  if (!(spacing > 0.0)) fail(ErrorCode::kInvalidArgument, "map spacing must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  PointCloud cloud;
  for (std::size_t k = 0; k < scene.planes.size(); ++k) {
    const PlaneSurface& pl = scene.planes[k];
    const long nx = static_cast<long>(std::floor(pl.width / spacing));
    const long ny = static_cast<long>(std::floor(pl.height / spacing));
    const double x0 = -0.5 * static_cast<double>(nx) * spacing;
    const double y0 = -0.5 * static_cast<double>(ny) * spacing;
    for (long j = 0; j <= ny; ++j) {
      for (long i = 0; i <= nx; ++i) {
        const Eigen::Vector3d local(x0 + i * spacing, y0 + j * spacing, 0.0);
        const Eigen::Vector3d p = pl.pose * local;
        const double dz = noise * unit(rng);
        cloud.push_back({p + dz * pl.pose.rotation.col(2), scene.surface_intensity(k, p)});
      }
    }
  }
  return cloud;
}

struct Dataset {
  std::vector<PointCloud> scans;          // sensor frames
  std::vector<Pose> poses;                // sensor -> world
  std::vector<int> marker_ids;            // per placement
  std::vector<std::array<Eigen::Vector3d, 4>> marker_corners;  // world
  std::vector<std::vector<double>> overlap;                    // symmetric rates

  /// Pose of scan i relative to scan `anchor` (the registration frame).
  Pose relative_pose(std::size_t i, std::size_t anchor = 0) const {
    return poses[anchor].inverse() * poses[i];
  }
};

/// Scan seeds derive from model.seed and the viewpoint index.
inline std::uint64_t scan_seed(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline Dataset make_dataset(const Scene& scene, const std::vector<Pose>& viewpoints,
                            const SensorModel& model, double overlap_tau = 0.05) {
  if (viewpoints.empty()) fail(ErrorCode::kInvalidArgument, "need at least one viewpoint");
  Dataset ds;
  ds.poses = viewpoints;
  for (std::size_t i = 0; i < viewpoints.size(); ++i) {
    SensorModel m = model;
    m.seed = scan_seed(model.seed, i);
    ds.scans.push_back(sample_scan(scene, viewpoints[i], m));
  }
  for (std::size_t k = 0; k < scene.markers.size(); ++k) {
    ds.marker_ids.push_back(scene.markers[k].id);
    ds.marker_corners.push_back(scene.marker_corners(k));
  }
  const std::size_t n = viewpoints.size();
  ds.overlap.assign(n, std::vector<double>(n, 1.0));
  std::vector<PointCloud> world;
  for (std::size_t i = 0; i < n; ++i) world.push_back(transformed(ds.scans[i], viewpoints[i]));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double r = (world[i].empty() || world[j].empty())
                           ? 0.0
                           : overlap_rate_symmetric(world[i], world[j], overlap_tau);
      ds.overlap[i][j] = ds.overlap[j][i] = r;
    }
  }
  return ds;
}

/// True when every corner of marker k is in direct line of sight from
/// `sensor_pose`, the tag faces the sensor and lies within `max_range`.
inline bool marker_visible(const Scene& scene, std::size_t k, const Pose& sensor_pose,
                           double max_range) {
  const Pose mp = scene.marker_pose(k);
  const Eigen::Vector3d to_sensor = sensor_pose.translation - mp.translation;
  if (to_sensor.dot(mp.rotation.col(2)) <= 0.0) return false;
  for (const auto& c : scene.marker_corners(k)) {
    const Eigen::Vector3d d = c - sensor_pose.translation;
    const double dist = d.norm();
    if (dist > max_range) return false;
    // Pull the target slightly towards the sensor so the host plane itself
    // does not count as an occluder.
    const auto hit = cast_ray(scene, sensor_pose.translation, d / dist, max_range);
    if (hit && hit->distance < dist - 1e-6 &&
        hit->plane != static_cast<std::size_t>(scene.markers[k].plane)) {
      return false;
    }
  }
  return true;
}

/// Corner-level observations for every visible marker of every viewpoint:
/// true corners expressed in the sensor frame plus isotropic Gaussian noise
/// of `corner_noise` (m), and the resulting closed-form marker poses. Corners
/// must lie within `half_fov` of the sensor's forward (x) axis.
inline std::vector<std::vector<MarkerObservation>> synthesize_observations(
    const Scene& scene, const std::vector<Pose>& viewpoints, double corner_noise,
    std::uint64_t seed, double max_range = 200.0, double half_fov = std::numbers::pi) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<MarkerObservation>> out(viewpoints.size());
  for (std::size_t i = 0; i < viewpoints.size(); ++i) {
    const Pose sensor_from_world = viewpoints[i].inverse();
    for (std::size_t k = 0; k < scene.markers.size(); ++k) {
      if (!marker_visible(scene, k, viewpoints[i], max_range)) continue;
      const auto corners = scene.marker_corners(k);
      const bool in_view = std::all_of(corners.begin(), corners.end(), [&](const Eigen::Vector3d& c) {
        const Eigen::Vector3d d = sensor_from_world * c;
        return std::acos(std::clamp(d.x() / d.norm(), -1.0, 1.0)) <= half_fov;
      });
      if (!in_view) continue;
      MarkerObservation obs;
      obs.id = scene.markers[k].id;
      obs.scan = static_cast<int>(i);
      for (int s = 0; s < 4; ++s) {
        const Eigen::Vector3d noise(unit(rng), unit(rng), unit(rng));
        obs.corners_3d[s] = sensor_from_world * corners[s] + corner_noise * noise;
      }
      const AlignResult fit = estimate_marker_pose(obs.corners_3d, {scene.markers[k].side, 0.0});
      obs.pose = fit.pose;
      obs.e_pp = fit.e_pp;
      out[i].push_back(obs);
    }
  }
  return out;
}

// Scene description files (JSON).
//
// {
//   "planes":  [{"center": [x,y,z], "facing": [x,y,z], "width": w, "height": h,
//                "intensity": i}],
//   "markers": [{"id": 3, "plane": 0, "center": [x,y], "angle": 0, "side": 0.5,
//                "white": 220, "black": 30}],
//   "viewpoints": [{"translation": [x,y,z], "rpy": [roll,pitch,yaw]}],
//   "sensor": {"pattern": "mechanical" | "solid_state", "azimuth_res_deg": ..,
//              "inclination_res_deg": .., "azimuth_min_deg": .., ...,
//              "range_noise": .., "intensity_noise": .., "seed": ..},
//   "family": "path/to/family.txt"   (optional, defaults to the built-in one)
// }

struct SceneFile {
  Scene scene;
  std::vector<Pose> viewpoints;
  SensorModel sensor;
};

inline Pose pose_from_rpy(const Eigen::Vector3d& translation, const Eigen::Vector3d& rpy) {
  return {rot_z(rpy.z()) * rot_y(rpy.y()) * rot_x(rpy.x()), translation};
}

inline SceneFile parse_scene(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  const auto vec3 = [](const nlohmann::json& a) {
    if (!a.is_array() || a.size() != 3) fail(ErrorCode::kParse, "expected a 3-vector");
    return Eigen::Vector3d(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
  };
  constexpr double kDeg = std::numbers::pi / 180.0;
  SceneFile out;
  try {
    if (j.contains("family")) {
      std::filesystem::path p = j.at("family").get<std::string>();
      if (p.is_relative() && !base.empty()) p = base / p;
      out.scene.family = load_family(p);
    }
    for (const auto& pj : j.at("planes")) {
      out.scene.add_plane(vec3(pj.at("center")), vec3(pj.at("facing")), pj.at("width").get<double>(),
                          pj.at("height").get<double>(), pj.value("intensity", 120.0));
    }
    if (j.contains("markers")) {
      for (const auto& mj : j.at("markers")) {
        MarkerPlacement m;
        m.id = mj.at("id").get<int>();
        m.plane = mj.at("plane").get<int>();
        const auto& c = mj.at("center");
        m.center = {c.at(0).get<double>(), c.at(1).get<double>()};
        m.angle = mj.value("angle", 0.0);
        m.side = mj.at("side").get<double>();
        m.white = mj.value("white", 220.0);
        m.black = mj.value("black", 30.0);
        out.scene.add_marker(m);
      }
    }
    if (j.contains("viewpoints")) {
      for (const auto& vj : j.at("viewpoints")) {
        const Eigen::Vector3d rpy = vj.contains("rpy") ? vec3(vj.at("rpy")) : Eigen::Vector3d::Zero();
        out.viewpoints.push_back(pose_from_rpy(vec3(vj.at("translation")), rpy));
      }
    }
    if (j.contains("sensor")) {
      const auto& s = j.at("sensor");
      SensorModel& m = out.sensor;
      const std::string pattern = s.value("pattern", std::string("mechanical"));
      if (pattern == "mechanical") {
        m.pattern = ScanPattern::kMechanical;
      } else if (pattern == "solid_state") {
        m.pattern = ScanPattern::kSolidState;
      } else {
        fail(ErrorCode::kParse, "unknown sensor pattern '" + pattern + "'");
      }
      m.azimuth_res = s.value("azimuth_res_deg", m.azimuth_res / kDeg) * kDeg;
      m.inclination_res = s.value("inclination_res_deg", m.inclination_res / kDeg) * kDeg;
      m.azimuth_min = s.value("azimuth_min_deg", m.azimuth_min / kDeg) * kDeg;
      m.azimuth_max = s.value("azimuth_max_deg", m.azimuth_max / kDeg) * kDeg;
      m.inclination_min = s.value("inclination_min_deg", m.inclination_min / kDeg) * kDeg;
      m.inclination_max = s.value("inclination_max_deg", m.inclination_max / kDeg) * kDeg;
      m.fov_radius = s.value("fov_radius_deg", m.fov_radius / kDeg) * kDeg;
      m.petal_ratio = s.value("petal_ratio", m.petal_ratio);
      m.curve_step = s.value("curve_step", m.curve_step);
      m.samples = s.value("samples", m.samples);
      m.range_noise = s.value("range_noise", m.range_noise);
      m.intensity_noise = s.value("intensity_noise", m.intensity_noise);
      m.max_range = s.value("max_range", m.max_range);
      m.seed = s.value("seed", m.seed);
      m.validate();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("scene file: ") + e.what());
  }
  return out;
}

inline SceneFile load_scene(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::kIo, "cannot open scene file " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("scene file: ") + e.what());
  }
  return parse_scene(j, path.parent_path());
}

}  // namespace fidreg
