// Acceptance run: one line per criterion, nonzero exit when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "fidreg/fidreg.hpp"
#include "support/random.hpp"
#include "support/render.hpp"
#include "support/scenes.hpp"

using namespace fidreg;
using Eigen::Vector3d;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double max_corner_error(const Scene& sc, const MarkerObservation& o) {
  const auto truth = sc.marker_corners(*sc.find_marker(o.id));
  double e = 0.0;
  for (int s = 0; s < 4; ++s) e = std::max(e, (truth[s] - o.corners_3d[s]).norm());
  return e;
}

std::set<int> ids_of(const std::vector<MarkerObservation>& obs) {
  std::set<int> ids;
  for (const auto& o : obs) ids.insert(o.id);
  return ids;
}

std::vector<Pose> solved(const std::vector<std::optional<Pose>>& poses) {
  std::vector<Pose> out;
  for (const auto& p : poses) out.push_back(p.value_or(Pose::identity()));
  return out;
}

Outcome alignment() {
  std::mt19937_64 rng(1);
  const auto corners = MarkerSpec{0.5, 0.0}.canonical_corners();
  const std::vector<Vector3d> src(corners.begin(), corners.end());
  double worst_gap = 0.0;
  double worst_epp = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Pose truth = fidreg::testing::random_pose(rng, 3.1, 5.0);
    std::vector<Vector3d> dst;
    for (const auto& p : src) dst.push_back(truth * p);
    const AlignResult r = align_svd(src, dst);
    worst_gap = std::max(worst_gap, se3_ominus(r.pose, truth).norm());
    worst_epp = std::max(worst_epp, r.e_pp);
  }
  return {worst_gap < 1e-8 && worst_epp < 1e-16, fmt("max pose gap %.2e, max e_pp %.2e", worst_gap, worst_epp)};
}

// Least squares through QR, independent of the library's solver.
Vector3d qr_gradient(const Point& p0, const PointCloud& nb) {
  const int n = static_cast<int>(nb.size());
  Eigen::MatrixXd design(n, 4);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    design.row(i) << (nb[i].position - p0.position).transpose(), 1.0;
    y(i) = nb[i].intensity;
  }
  return design.colPivHouseholderQr().solve(y).head<3>();
}

Outcome gradient() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> offset(-0.1, 0.1);
  std::uniform_real_distribution<double> coef(-50.0, 50.0);
  std::uniform_real_distribution<double> level(0.0, 255.0);
  const auto neighborhood = [&](int n, const Vector3d& center) {
    PointCloud c;
    for (int i = 0; i < n; ++i) c.push_back({center + Vector3d(offset(rng), offset(rng), offset(rng)), 0.0});
    return c;
  };
  double linear_err = 0.0;
  double oracle_err = 0.0;
  for (int k = 0; k < 100; ++k) {
    PointCloud nb = neighborhood(10 + k % 20, Vector3d(k, -k, 0.5 * k));
    const Vector3d c(coef(rng), coef(rng), coef(rng));
    const double b = level(rng);
    for (auto& p : nb.points) p.intensity = c.dot(p.position) + b;
    linear_err = std::max(linear_err, (intensity_gradient(nb[0], nb).gradient - c).norm());

    PointCloud noise = neighborhood(10 + k % 20, Vector3d(-k, 0, 1));
    for (auto& p : noise.points) p.intensity = level(rng);
    const Vector3d oracle = qr_gradient(noise[0], noise);
    oracle_err = std::max(oracle_err, (intensity_gradient(noise[0], noise).gradient - oracle).norm() /
                                          std::max(1.0, oracle.norm()));
  }
  return {linear_err < 1e-9 && oracle_err < 1e-9,
          fmt("linear fields max error %.2e, random fields vs QR oracle %.2e", linear_err, oracle_err)};
}

Outcome obb_sweep() {
  const double a = 0.7;
  const int n = 21;
  double side_err = 0.0;
  double area_lo = std::numeric_limits<double>::infinity();
  double area_hi = 0.0;
  for (int deg = 0; deg < 360; ++deg) {
    const double t = deg * kDeg;
    const Eigen::Matrix3d r = Eigen::AngleAxisd(t, Vector3d::UnitZ()).toRotationMatrix();
    PointCloud c;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const Vector3d p(a * (double(i) / (n - 1) - 0.5), a * (double(j) / (n - 1) - 0.5), 0);
        c.push_back({r * p + Vector3d(3, -1, 0.5), 0});
      }
    }
    const OrientedBox b = fit_obb(c);
    const double side = a * (std::abs(std::cos(t)) + std::abs(std::sin(t)));
    side_err = std::max({side_err, std::abs(b.l - side), std::abs(b.w - side)});
    area_lo = std::min(area_lo, b.footprint_area());
    area_hi = std::max(area_hi, b.footprint_area());
  }
  const bool pass = side_err < 1e-6 && area_lo >= a * a - 1e-9 && area_hi <= 2 * a * a + 1e-9;
  return {pass, fmt("side error %.2e, area in [%.4f, %.4f] for a^2 = %.4f", side_err, area_lo, area_hi, a * a)};
}

Outcome detection_round_trip() {
  Scene sc;
  const int p = sc.add_plane({4, 0, 0}, {-1, 0, 0}, 4, 2, 120);
  sc.add_marker({3, p, {-1.2, 0}, 0, 0.5});
  sc.add_marker({17, p, {0, 0.1}, 0.3, 0.5, 200, 60});
  sc.add_marker({29, p, {1.2, -0.1}, 0, 0.5});
  SensorModel m;
  m.azimuth_min = -0.6;
  m.azimuth_max = 0.6;
  const PointCloud cloud = sample_scan(sc, Pose::identity(), m);
  ScanDetectionConfig cfg;
  cfg.azimuth_res = m.azimuth_res;
  cfg.inclination_res = m.inclination_res;
  const auto obs = detect_in_scan(cloud, cfg, sc.family, {0.5, 0.0});
  const double res = std::max(m.azimuth_res, m.inclination_res);
  bool within = true;
  double worst_ratio = 0.0;
  for (const auto& o : obs) {
    const auto truth = sc.marker_corners(*sc.find_marker(o.id));
    for (int s = 0; s < 4; ++s) {
      const double bound = truth[s].norm() * res + 1e-9;
      const double err = (truth[s] - o.corners_3d[s]).norm();
      within = within && err <= bound;
      worst_ratio = std::max(worst_ratio, err / bound);
    }
  }
  const bool all = ids_of(obs) == std::set<int>{3, 17, 29};
  return {all && within, fmt("%zu/3 detected, worst corner error %.2f of its bound", ids_of(obs).size(), worst_ratio)};
}

Outcome interpolation_path() {
  Scene sc;
  const int p = sc.add_plane({4, 0, 0}, {-1, 0, 0}, 3, 2, 120);
  sc.add_marker({3, p, {-0.6, 0.1}, 0, 0.5});
  sc.add_marker({29, p, {0.6, -0.1}, 0.2, 0.5});
  const MarkerSpec spec{0.5, 0.0};
  ScanDetectionConfig cfg;
  cfg.azimuth_res = cfg.inclination_res = 0.2 * kDeg;
  cfg.preprocess.blur_sigma = 0.8;

  SensorModel solid;
  solid.pattern = ScanPattern::kSolidState;
  solid.samples = 400000;
  solid.curve_step = 0.002;
  solid.petal_ratio = 0.1618;
  solid.fov_radius = 0.3;
  ScanDetectionDebug dbg;
  const auto obs = detect_in_scan(sample_scan(sc, Pose::identity(), solid), cfg, sc.family, spec, 0, &dbg);

  // Coverage over pixels whose ray lands on a tag.
  int on_tag = 0;
  int seen = 0;
  for (int v = 0; v < dbg.raw.height(); ++v) {
    for (int u = 0; u < dbg.raw.width(); ++u) {
      const Vector3d dir =
          from_spherical(pixel_azimuth(dbg.raw.config, u), pixel_inclination(dbg.raw.config, v), 1.0);
      const auto hit = cast_ray(sc, Vector3d::Zero(), dir, 100.0);
      if (!hit) continue;
      bool tag = false;
      for (std::size_t k = 0; k < sc.markers.size(); ++k) {
        const Vector3d local = sc.marker_pose(k).inverse() * hit->point;
        tag = tag || (std::abs(local.x()) <= 0.25 && std::abs(local.y()) <= 0.25);
      }
      if (!tag) continue;
      ++on_tag;
      seen += dbg.raw.is_observed(u, v) ? 1 : 0;
    }
  }
  const double coverage = on_tag ? double(seen) / on_tag : 0.0;

  int interpolated = 0;
  double worst_line = 0.0;
  for (const auto& o : obs) {
    for (int s = 0; s < 4; ++s) {
      const CornerRecovery c = recover_corner(dbg.raw, o.corners_px[s], cfg.corner_window, cfg.weighting);
      if (!c.interpolated) continue;
      ++interpolated;
      const Vector3d d = c.lower - c.upper;
      worst_line = std::max(worst_line, (c.point - c.upper).cross(d).norm() / d.norm());
    }
  }

  SensorModel full;
  full.azimuth_min = -0.6;
  full.azimuth_max = 0.6;
  full.azimuth_res = full.inclination_res = cfg.azimuth_res;
  const auto reference = detect_in_scan(sample_scan(sc, Pose::identity(), full), cfg, sc.family, spec);

  const bool pass = coverage < 1.0 && interpolated > 0 && worst_line < 1e-9 && ids_of(obs) == ids_of(reference) &&
                    ids_of(obs) == std::set<int>{3, 29};
  return {pass, fmt("coverage %.3f, %zu/%zu markers (fully observed run %zu), %d interpolated corners, "
                    "max off-line %.2e m",
                    coverage, obs.size(), sc.markers.size(), reference.size(), interpolated, worst_line)};
}

Outcome adaptive_threshold() {
  IntensityImage img = fidreg::testing::flat_image(180, 90, 200.0);
  fidreg::testing::TagRender a;
  a.id = 4;
  a.cell_px = 10;
  a.origin = {10.5, 14.5};
  fidreg::testing::TagRender b = a;
  b.id = 9;
  b.origin = {100.5, 14.5};
  fidreg::testing::draw_tag(img, builtin_family(), a, 10.0, 31.0);
  fidreg::testing::draw_tag(img, builtin_family(), b, 60.0, 81.0);

  const ThresholdSearch search = adaptive_detect(img, builtin_family(), 256, 1.0);
  const bool both = search.contains(4) && search.contains(9);
  int single_complete = 0;
  bool bands = true;
  for (int lambda = 0; lambda < 256; ++lambda) {
    std::set<int> ids;
    for (const auto& d : detect_at_threshold(img, builtin_family(), lambda)) ids.insert(d.id);
    single_complete += (ids.count(4) && ids.count(9)) ? 1 : 0;
    bands = bands && (ids.count(4) > 0) == (lambda >= 10 && lambda <= 30) &&
            (ids.count(9) > 0) == (lambda >= 60 && lambda <= 80);
  }
  return {both && bands && single_complete == 0,
          fmt("queue holds %zu ids, fixed thresholds finding both: %d of 256", search.queue.size(), single_complete)};
}

Outcome map_occlusion() {
  Scene sc;
  const int front = sc.add_plane({3, 0, 0}, {-1, 0, 0}, 1.2, 1.0, 120);
  const int back = sc.add_plane({6, 0.3, 0}, {-1, 0, 0}, 4, 2, 150);
  sc.add_marker({1, front, {0, 0}, 0.2, 0.5});
  sc.add_marker({2, back, {-0.3, 0}, -0.4, 0.5});
  const double spacing = 0.01;
  const PointCloud map = sample_map(sc, spacing);
  const MarkerSpec spec{0.5, 0.001};

  // Every ray from the origin to tag 2 ends on the front wall first.
  bool hidden = true;
  const Pose tag2 = sc.marker_pose(*sc.find_marker(2));
  for (int i = 0; i <= 10; ++i) {
    for (int j = 0; j <= 10; ++j) {
      const Vector3d target = tag2 * Vector3d(0.05 * i - 0.25, 0.05 * j - 0.25, 0.0);
      const auto hit = cast_ray(sc, Vector3d::Zero(), target.normalized(), 100.0);
      hidden = hidden && hit && hit->plane == static_cast<std::size_t>(front) && hit->distance < target.norm();
    }
  }
  const auto direct = ids_of(detect_in_scan(map, {}, sc.family, spec));

  const auto found = locate_markers_in_map(map, spec, sc.family);
  double worst = 0.0;
  double mean = 0.0;
  for (const auto& o : found) {
    worst = std::max(worst, max_corner_error(sc, o));
    mean += max_corner_error(sc, o) / static_cast<double>(found.size());
  }
  const bool pass = hidden && direct.count(2) == 0 && ids_of(found) == std::set<int>{1, 2} &&
                    worst <= 3.0 * spacing && worst <= 2.0 * 0.02;
  return {pass, fmt("tag 2 hidden: %s, direct ids %zu, located %zu/2, worst corner error %.4f m (mean %.4f)",
                    hidden ? "yes" : "no", direct.size(), found.size(), worst, mean)};
}

Outcome range_extension() {
  Scene sc;
  sc.add_plane({20, 0, 0}, {-1, 0, 0}, 2, 2, 120);
  sc.add_marker({9, 0, {0, 0}, 0.15, 0.5});
  const PointCloud map = sample_map(sc, 0.01);
  const MarkerSpec spec{0.5, 0.001};
  const ScanDetectionConfig direct;
  const double px_per_bit = spec.side / 6.0 / (20.0 * direct.azimuth_res);
  const bool direct_fails = detect_in_scan(map, direct, sc.family, spec).empty();
  const auto found = locate_markers_in_map(map, spec, sc.family);
  const bool ok = found.size() == 1 && found[0].id == 9;
  const double err = ok ? max_corner_error(sc, found[0]) : -1.0;
  return {px_per_bit < 4.0 && direct_fails && ok && err <= 0.03,
          fmt("%.2f px/bit at 20 m, direct detection %s, located %zu (corner error %.4f m)", px_per_bit,
              direct_fails ? "fails" : "succeeds", found.size(), err)};
}

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

Outcome shortest_path() {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> count(1, 4);
  std::uniform_real_distribution<double> weight(0.01, 1.0);
  std::bernoulli_distribution present(0.55);
  int trials = 0;
  int mismatches = 0;
  double worst = 0.0;
  while (trials < 1000) {
    const int scans = count(rng);
    const int markers = count(rng);
    std::vector<std::vector<MarkerObservation>> obs(static_cast<std::size_t>(scans));
    std::size_t total = 0;
    for (int i = 0; i < scans; ++i) {
      for (int j = 0; j < markers; ++j) {
        if (!present(rng)) continue;
        MarkerObservation o;
        o.scan = i;
        o.id = 10 + j;
        o.e_pp = weight(rng);
        obs[static_cast<std::size_t>(i)].push_back(o);
        ++total;
      }
    }
    if (total == 0) continue;
    ++trials;
    const FirstLevelGraph g = build_first_level(obs);
    for (std::size_t src = 0; src < g.scan_count; ++src) {
      const ShortestPaths sp = shortest_paths(g, src);
      const auto oracle = brute_force_costs(g, src);
      for (std::size_t n = 0; n < g.node_count(); ++n) {
        if (std::isinf(oracle[n]) || std::isinf(sp.cost[n])) {
          mismatches += std::isinf(oracle[n]) != std::isinf(sp.cost[n]) ? 1 : 0;
          continue;
        }
        worst = std::max(worst, std::abs(sp.cost[n] - oracle[n]));
      }
    }
  }
  return {mismatches == 0 && worst <= 1e-12,
          fmt("%d graphs, all sources; reachability mismatches %d, max cost difference %.1e", trials, mismatches,
              worst)};
}

RegistrationConfig room_config() {
  RegistrationConfig cfg;
  cfg.spec = {1.0, 0.0};
  return cfg;
}

std::vector<std::vector<MarkerObservation>> room_observations(double noise, std::uint64_t seed) {
  const auto room = fidreg::testing::room_scene();
  return synthesize_observations(room.scene, room.viewpoints, noise, seed, 200.0, room.half_fov);
}

Outcome registration_end_to_end() {
  const auto room = fidreg::testing::room_scene();
  const auto truth = fidreg::testing::relative_truth(room.viewpoints);
  const RegistrationRun exact = register_observations(room_observations(0.0, 1), room_config());
  const PoseRmse e0 = rmse(solved(exact.result.scan_poses), truth);
  const bool zero_ok = e0.translation < 1e-6 && e0.rotation < 1e-6 && exact.result.final_cost < 1e-10;

  double worst_t = 0.0;
  double worst_r = 0.0;
  int worse_than_init = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const RegistrationRun run = register_observations(room_observations(0.01, seed), room_config());
    const PoseRmse after = rmse(solved(run.result.scan_poses), truth);
    const PoseRmse before = rmse(solved(run.initial.poses), truth);
    worst_t = std::max(worst_t, after.translation);
    worst_r = std::max(worst_r, after.rotation);
    worse_than_init += (after.translation > before.translation || after.rotation > before.rotation) ? 1 : 0;
  }
  const bool pass = zero_ok && worst_t <= 0.05 && worst_r <= 0.05 && worse_than_init == 0;
  return {pass, fmt("zero noise RMSE_T %.1e RMSE_R %.1e cost %.1e; noisy worst RMSE_T %.4f RMSE_R %.4f, "
                    "worse than init on %d/50 seeds",
                    e0.translation, e0.rotation, exact.result.final_cost, worst_t, worst_r, worse_than_init)};
}

Outcome jacobians() {
  auto room = fidreg::testing::room_scene();
  room.viewpoints.resize(3);
  const auto obs = synthesize_observations(room.scene, room.viewpoints, 0.01, 3, 200.0, room.half_fov);
  const FactorGraphSpec fg = build_factor_graph(obs, initial_poses(build_first_level(obs)), {1.0, 0.0}, {});
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 0.5);
  double worst = 0.0;
  std::set<int> kinds;
  std::size_t checked = 0;
  for (int state = 0; state < 100; ++state) {
    std::vector<Pose> poses;
    for (std::size_t k = 0; k < fg.poses.size(); ++k) poses.push_back(fidreg::testing::random_pose(rng, 2.5));
    std::vector<Vector3d> points;
    for (std::size_t k = 0; k < fg.points.size(); ++k) points.emplace_back(n(rng), n(rng), n(rng));
    for (const Factor& f : fg.factors) {
      kinds.insert(static_cast<int>(f.kind));
      const auto analytic = analytic_jacobian(f, poses, points);
      const auto numeric = numeric_jacobian(f, poses, points);
      if (analytic.size() != numeric.size()) return {false, "block count differs"};
      for (std::size_t b = 0; b < analytic.size(); ++b) {
        const double scale = std::max(numeric[b].block.norm(), 1e-6);
        worst = std::max(worst, (analytic[b].block - numeric[b].block).norm() / scale);
        ++checked;
      }
    }
  }
  return {worst < 1e-4 && kinds.size() == 5,
          fmt("%zu blocks over 100 states, %zu factor kinds, max relative error %.2e", checked, kinds.size(), worst)};
}

Outcome ablation() {
  const auto room = fidreg::testing::room_scene();
  const auto truth = fidreg::testing::relative_truth(room.viewpoints);
  RegistrationConfig no_first = room_config();
  no_first.use_first_graph = false;
  RegistrationConfig no_second = room_config();
  no_second.use_second_graph = false;
  int first_worse = 0;
  int second_violations = 0;
  double gap_sum = 0.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto obs = room_observations(0.01, seed);
    const PoseRmse full = rmse(solved(register_observations(obs, room_config()).result.scan_poses), truth);
    const PoseRmse a = rmse(solved(register_observations(obs, no_first).result.scan_poses), truth);
    const PoseRmse b = rmse(solved(register_observations(obs, no_second).result.scan_poses), truth);
    first_worse += a.translation > full.translation ? 1 : 0;
    gap_sum += b.translation - full.translation;
    second_violations += (b.translation < full.translation || b.rotation < full.rotation) ? 1 : 0;
  }
  return {first_worse >= 45 && second_violations == 0,
          fmt("without first graph worse on %d/50 seeds; without second graph better on %d/50 "
              "(mean RMSE_T increase %.4f m)",
              first_worse, second_violations, gap_sum / 50.0)};
}

Outcome determinism() {
  const auto room = fidreg::testing::room_scene();
  std::vector<PointCloud> scans;
  for (std::size_t i = 0; i < room.viewpoints.size(); ++i) {
    SensorModel m;
    m.azimuth_min = -70.0 * kDeg;
    m.azimuth_max = 70.0 * kDeg;
    m.inclination_min = -30.0 * kDeg;
    m.inclination_max = 30.0 * kDeg;
    m.range_noise = 0.005;
    m.seed = scan_seed(7, i);
    scans.push_back(sample_scan(room.scene, room.viewpoints[i], m));
  }
  RegistrationConfig cfg = room_config();
  const std::string a = to_json(register_scans(scans, room.scene.family, cfg)).dump();
  const std::string b = to_json(register_scans(scans, room.scene.family, cfg)).dump();
  cfg.threads = 3;
  const std::string c = to_json(register_scans(scans, room.scene.family, cfg)).dump();
  return {a == b && a == c, fmt("report %zu bytes; repeat %s, 3 threads %s", a.size(),
                                a == b ? "identical" : "differs", a == c ? "identical" : "differs")};
}

struct Criterion {
  int number;
  const char* name;
  std::function<Outcome()> run;
  double time_limit;  // seconds, 0 for none
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "alignment exactness", alignment, 1.0},
      {2, "gradient regression", gradient, 0.0},
      {3, "OBB sweep", obb_sweep, 0.0},
      {4, "detection round trip", detection_round_trip, 5.0},
      {5, "interpolation path", interpolation_path, 0.0},
      {6, "adaptive threshold necessity", adaptive_threshold, 2.0},
      {7, "map localization under occlusion", map_occlusion, 0.0},
      {8, "range extension", range_extension, 0.0},
      {9, "shortest-path optimality", shortest_path, 10.0},
      {10, "end-to-end registration", registration_end_to_end, 60.0},
      {11, "Jacobian check", jacobians, 0.0},
      {12, "ablation", ablation, 0.0},
      {13, "determinism", determinism, 0.0},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.time_limit > 0.0 && secs >= c.time_limit) {
      out.pass = false;
      out.detail += fmt(" [over the %.0f s limit]", c.time_limit);
    }
    failed += out.pass ? 0 : 1;
    std::printf("%s %2d %-34s %7.2f s  %s\n", out.pass ? "PASS" : "FAIL", c.number, c.name, secs,
                out.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
