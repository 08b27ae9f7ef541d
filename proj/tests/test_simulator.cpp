#include <gtest/gtest.h>

#include <numbers>

#include "fidreg/simulator.hpp"
#include "support/render.hpp"

using namespace fidreg;
using Eigen::Vector3d;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// One wall at x = 5 facing the origin.
Scene wall_scene(double width = 4.0, double height = 2.0) {
  Scene sc;
  sc.add_plane({5, 0, 0}, {-1, 0, 0}, width, height, 120.0);
  return sc;
}

SensorModel narrow_mechanical() {
  SensorModel m;
  m.azimuth_min = -15.0 * kDeg;
  m.azimuth_max = 15.0 * kDeg;
  m.inclination_min = -8.0 * kDeg;
  m.inclination_max = 8.0 * kDeg;
  return m;
}

bool same_cloud(const PointCloud& a, const PointCloud& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].position != b[i].position || a[i].intensity != b[i].intensity) return false;
  }
  return true;
}

}  // namespace

TEST(SampleScan, RangesMatchRayPlaneIntersection) {
  const Scene sc = wall_scene();
  const PointCloud cloud = sample_scan(sc, Pose::identity(), narrow_mechanical());
  ASSERT_GT(cloud.size(), 1000u);
  for (const Point& p : cloud) {
    const Vector3d d = p.position.normalized();
    // Ray o + s d meets x = 5 at s = 5 / d.x.
    EXPECT_NEAR(p.position.norm(), 5.0 / d.x(), 1e-9);
    EXPECT_NEAR(p.position.x(), 5.0, 1e-9);
    EXPECT_LE(std::abs(p.position.y()), 2.0 + 1e-12);
    EXPECT_LE(std::abs(p.position.z()), 1.0 + 1e-12);
    EXPECT_EQ(p.intensity, 120.0);
  }
}

TEST(SampleScan, MarkerCellsCarryTheirLevels) {
  Scene sc = wall_scene();
  MarkerPlacement m;
  m.id = 17;
  m.plane = 0;
  m.center = {0.3, -0.2};
  m.angle = 0.4;
  m.side = 0.8;
  sc.add_marker(m);
  const PointCloud map = sample_map(sc, 0.004);
  // Code-frame coordinates from the corner registry: corner 1 is (0, 0),
  // corner 0 is (N, 0) and corner 2 is (0, N).
  const auto c = sc.marker_corners(0);
  const int n = sc.family.cells_per_side();
  const Vector3d ex = (c[0] - c[1]) / n;
  const Vector3d ey = (c[2] - c[1]) / n;
  std::size_t white = 0;
  std::size_t black = 0;
  for (const Point& p : map) {
    const Vector3d d = p.position - c[1];
    const double a = d.dot(ex) / ex.squaredNorm();
    const double b = d.dot(ey) / ey.squaredNorm();
    if (a < 0 || b < 0 || a >= n || b >= n) {
      EXPECT_EQ(p.intensity, 120.0);
      continue;
    }
    const double fa = a - std::floor(a);
    const double fb = b - std::floor(b);
    if (fa < 1e-6 || fa > 1 - 1e-6 || fb < 1e-6 || fb > 1 - 1e-6) continue;
    const int bit = fidreg::testing::tag_cell(sc.family, sc.family.codes[17],
                                              static_cast<int>(a), static_cast<int>(b));
    EXPECT_EQ(p.intensity, bit ? 220.0 : 30.0) << a << " " << b;
    (bit ? white : black) += 1;
  }
  EXPECT_GT(white, 1000u);
  EXPECT_GT(black, 1000u);
}

TEST(SampleScan, FacingAwayIsEmpty) {
  const Scene sc = wall_scene();
  const Pose back(rot_z(std::numbers::pi), Vector3d::Zero());
  EXPECT_TRUE(sample_scan(sc, back, narrow_mechanical()).empty());
  EXPECT_TRUE(sample_scan(Scene{}, Pose::identity(), narrow_mechanical()).empty());
}

TEST(SampleScan, MarkersChangeOnlyIntensities) {
  Scene bare = wall_scene();
  Scene tagged = bare;
  tagged.add_marker({3, 0, {-1.0, 0.0}, 0.0, 0.6});
  tagged.add_marker({29, 0, {1.0, 0.1}, 0.3, 0.6});
  SensorModel m = narrow_mechanical();
  m.range_noise = 0.005;
  m.intensity_noise = 3.0;
  const Pose view(rot_z(0.05), Vector3d(0.2, -0.1, 0.05));
  const PointCloud a = sample_scan(bare, view, m);
  const PointCloud b = sample_scan(tagged, view, m);
  ASSERT_EQ(a.size(), b.size());
  std::size_t changed = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].position, b[i].position);
    if (a[i].intensity != b[i].intensity) ++changed;
  }
  EXPECT_GT(changed, 100u);
}

TEST(SampleScan, DeterministicUnderSeed) {
  Scene sc = wall_scene();
  sc.add_marker({5, 0, {0, 0}, 0, 0.5});
  SensorModel m = narrow_mechanical();
  m.range_noise = 0.01;
  m.intensity_noise = 5.0;
  m.seed = 99;
  EXPECT_TRUE(same_cloud(sample_scan(sc, Pose::identity(), m), sample_scan(sc, Pose::identity(), m)));
  SensorModel other = m;
  other.seed = 100;
  EXPECT_FALSE(
      same_cloud(sample_scan(sc, Pose::identity(), m), sample_scan(sc, Pose::identity(), other)));

  m.pattern = ScanPattern::kSolidState;
  m.samples = 20000;
  EXPECT_TRUE(same_cloud(sample_scan(sc, Pose::identity(), m), sample_scan(sc, Pose::identity(), m)));
}

TEST(SampleScan, MechanicalGridIsGapFree) {
  const Scene sc = wall_scene();
  const SensorModel m = narrow_mechanical();
  const PointCloud cloud = sample_scan(sc, Pose::identity(), m);
  const IntensityImage img = project(cloud, auto_config(cloud, m.azimuth_res, m.inclination_res));
  // The wall covers the whole field of view, so every pixel holds a return.
  EXPECT_EQ(img.observed_count(), static_cast<std::size_t>(img.width() * img.height()));
  EXPECT_EQ(img.observed_count(), cloud.size());
}

TEST(SampleScan, SolidStateLeavesSpots) {
  const Scene sc = wall_scene(6.0, 6.0);
  SensorModel m;
  m.pattern = ScanPattern::kSolidState;
  m.fov_radius = 0.3;
  m.samples = 100000;
  const PointCloud cloud = sample_scan(sc, Pose::identity(), m);
  ASSERT_FALSE(cloud.empty());
  const IntensityImage img = project(cloud, auto_config(cloud, 0.2 * kDeg, 0.2 * kDeg));
  // Count holes inside the disc of radius 0.8 * fov_radius.
  std::size_t inside = 0;
  std::size_t seen = 0;
  for (int v = 0; v < img.height(); ++v) {
    for (int u = 0; u < img.width(); ++u) {
      const double az = pixel_azimuth(img.config, u);
      const double inc = pixel_inclination(img.config, v);
      if (std::hypot(az, inc) > 0.8 * m.fov_radius) continue;
      ++inside;
      seen += img.is_observed(u, v) ? 1 : 0;
    }
  }
  ASSERT_GT(inside, 1000u);
  EXPECT_LT(seen, inside);
  EXPECT_GT(seen, inside / 4);

  // Longer dwell densifies the pattern.
  SensorModel dense = m;
  dense.samples = 400000;
  const PointCloud more = sample_scan(sc, Pose::identity(), dense);
  const IntensityImage img2 = project(more, img.config);
  EXPECT_GT(img2.observed_count(), img.observed_count());
}

TEST(SampleScan, MarkerSpanInPixels) {
  Scene sc;
  sc.add_plane({4, 0, 0}, {-1, 0, 0}, 3, 2, 120);
  sc.add_marker({12, 0, {0, 0}, 0, 0.5});
  SensorModel m = narrow_mechanical();
  const PointCloud cloud = sample_scan(sc, Pose::identity(), m);
  ScanDetectionConfig cfg;
  const auto obs = detect_in_scan(cloud, cfg, sc.family, {0.5, 0.0});
  ASSERT_EQ(obs.size(), 1u);
  // A side of a at range r spans about a / (r * resolution) pixels.
  const double expected = 0.5 / (4.0 * m.azimuth_res);
  for (int s = 0; s < 4; ++s) {
    const double side = (obs[0].corners_px[s] - obs[0].corners_px[(s + 1) % 4]).norm();
    EXPECT_NEAR(side, expected, 2.0);
  }
}

TEST(Scene, RejectsBadPlacements) {
  Scene sc = wall_scene();
  EXPECT_THROW(sc.add_marker({3, 1, {0, 0}, 0, 0.5}), Error);
  EXPECT_THROW(sc.add_marker({50, 0, {0, 0}, 0, 0.5}), Error);
  EXPECT_THROW(sc.add_marker({3, 0, {1.9, 0}, 0, 0.5}), Error);
  EXPECT_NO_THROW(sc.add_marker({3, 0, {1.74, 0}, 0, 0.5}));
}

TEST(Scene, MarkerCornersOnHostPlane) {
  Scene sc;
  sc.add_plane({1, 2, 0.5}, Vector3d(-1, 0.5, 0.2), 3, 3);
  sc.add_marker({8, 0, {0.4, -0.3}, 0.7, 0.6});
  const Pose plane_from_world = sc.planes[0].pose.inverse();
  const auto c = sc.marker_corners(0);
  for (const auto& p : c) EXPECT_NEAR((plane_from_world * p).z(), 0.0, 1e-12);
  for (int s = 0; s < 4; ++s) EXPECT_NEAR((c[s] - c[(s + 1) % 4]).norm(), 0.6, 1e-12);
  // The tag normal faces the same way as the plane.
  const Vector3d normal = (c[1] - c[0]).cross(c[2] - c[1]).normalized();
  EXPECT_NEAR(normal.dot(Vector3d(-1, 0.5, 0.2).normalized()), 1.0, 1e-12);
}

TEST(MakeDataset, BookkeepingAndOverlap) {
  const Scene sc = wall_scene(20.0, 4.0);
  SensorModel m;
  // Footprint: 2 m wide (|y| <= 1) and about 1 m tall on the wall.
  m.azimuth_min = -std::atan(0.2);
  m.azimuth_max = std::atan(0.2);
  m.inclination_min = -5.0 * kDeg;
  m.inclination_max = 5.0 * kDeg;
  const Pose first = Pose::identity();
  const Pose second(Eigen::Matrix3d::Identity(), Vector3d(0, 1.0, 0));
  const Dataset one = make_dataset(sc, {first}, m);
  ASSERT_EQ(one.scans.size(), 1u);
  EXPECT_EQ(one.relative_pose(0).translation, Vector3d::Zero());

  const Dataset two = make_dataset(sc, {first, second}, m);
  const Pose rel = two.relative_pose(1);
  EXPECT_EQ(rel.translation, second.translation);
  EXPECT_EQ(rel.rotation, second.rotation);
  // Shifting the sensor by half the footprint width halves the overlap.
  EXPECT_NEAR(two.overlap[0][1], 0.5, 0.05);
  EXPECT_EQ(two.overlap[0][1], two.overlap[1][0]);
  EXPECT_EQ(two.overlap[0][0], 1.0);
  EXPECT_THROW(make_dataset(sc, {}, m), Error);
}

TEST(SampleMap, GridSpacingAndNoise) {
  const Scene sc = wall_scene(1.0, 0.5);
  const PointCloud map = sample_map(sc, 0.01);
  EXPECT_EQ(map.size(), 101u * 51u);
  EXPECT_NEAR(estimate_spacing(map), 0.01, 1e-9);
  for (const Point& p : map) EXPECT_NEAR(p.position.x(), 5.0, 1e-12);
  const PointCloud noisy = sample_map(sc, 0.01, 0.002, 7);
  double sq = 0.0;
  for (const Point& p : noisy) sq += (p.position.x() - 5.0) * (p.position.x() - 5.0);
  EXPECT_NEAR(std::sqrt(sq / static_cast<double>(noisy.size())), 0.002, 0.0002);
  EXPECT_THROW(sample_map(sc, 0.0), Error);
}

TEST(SynthesizeObservations, ZeroNoiseMatchesTruthAndSkipsHidden) {
  Scene sc;
  sc.add_plane({4, 0, 0}, {-1, 0, 0}, 4, 2);
  sc.add_plane({-4, 0, 0}, {1, 0, 0}, 4, 2);
  sc.add_marker({1, 0, {0.5, 0}, 0, 0.5});
  sc.add_marker({2, 1, {0, 0}, 0.2, 0.5});
  const std::vector<Pose> views = {Pose::identity(),
                                   Pose(rot_z(0.3), Vector3d(1.0, 0.5, 0.0))};
  const auto obs = synthesize_observations(sc, views, 0.0, 1);
  ASSERT_EQ(obs.size(), 2u);
  for (std::size_t i = 0; i < views.size(); ++i) {
    ASSERT_EQ(obs[i].size(), 2u);
    for (const auto& o : obs[i]) {
      const std::size_t k = *sc.find_marker(o.id);
      const Pose truth = views[i].inverse() * sc.marker_pose(k);
      EXPECT_LT(se3_ominus(o.pose, truth).norm(), 1e-9);
      EXPECT_LT(o.e_pp, 1e-20);
      EXPECT_EQ(o.scan, static_cast<int>(i));
    }
  }
  // A wall between the sensor and marker 2 hides it.
  sc.add_plane({-2, 0, 0}, {1, 0, 0}, 4, 4);
  const auto hidden = synthesize_observations(sc, {Pose::identity()}, 0.0, 1);
  ASSERT_EQ(hidden[0].size(), 1u);
  EXPECT_EQ(hidden[0][0].id, 1);
}

TEST(SceneFile, ParsesAndValidates) {
  const nlohmann::json j = nlohmann::json::parse(R"({
    "planes": [{"center": [4, 0, 0], "facing": [-1, 0, 0], "width": 3, "height": 2}],
    "markers": [{"id": 3, "plane": 0, "center": [0.2, 0.1], "side": 0.5}],
    "viewpoints": [{"translation": [0, 0, 0]}, {"translation": [0, 1, 0], "rpy": [0, 0, 0.1]}],
    "sensor": {"pattern": "solid_state", "fov_radius_deg": 15, "samples": 1000,
               "range_noise": 0.01, "seed": 5}
  })");
  const SceneFile f = parse_scene(j);
  EXPECT_EQ(f.scene.planes.size(), 1u);
  EXPECT_EQ(f.scene.planes[0].intensity, 120.0);
  ASSERT_EQ(f.scene.markers.size(), 1u);
  EXPECT_EQ(f.scene.markers[0].white, 220.0);
  ASSERT_EQ(f.viewpoints.size(), 2u);
  EXPECT_LT((f.viewpoints[1].rotation - rot_z(0.1)).norm(), 1e-15);
  EXPECT_EQ(f.sensor.pattern, ScanPattern::kSolidState);
  EXPECT_NEAR(f.sensor.fov_radius, 15 * kDeg, 1e-15);
  EXPECT_EQ(f.sensor.samples, 1000u);
  EXPECT_EQ(f.sensor.seed, 5u);

  nlohmann::json bad = j;
  bad["sensor"]["pattern"] = "flash";
  EXPECT_THROW(parse_scene(bad), Error);
  bad = j;
  bad["sensor"]["range_noise"] = -1;
  EXPECT_THROW(parse_scene(bad), Error);
  bad = j;
  bad["markers"][0]["center"] = {1.4, 0};
  EXPECT_THROW(parse_scene(bad), Error);
  bad = j;
  bad.erase("planes");
  try {
    parse_scene(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
  }
  EXPECT_THROW(load_scene("/nonexistent/scene.json"), Error);
}
