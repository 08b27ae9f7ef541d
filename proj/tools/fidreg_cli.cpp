// fidreg command line: simulate, detect, locate-map, register, eval.
// Exit codes: 0 success, 2 invalid input, 3 pipeline failure.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fidreg/fidreg.hpp"

namespace fs = std::filesystem;
using namespace fidreg;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitPipeline = 3;

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool strict = false;
  std::string dump_images;
};

struct Settings {
  RegistrationConfig reg;
  MapLocateConfig map;
  EvalSettings eval;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

struct MarkerArgs {
  double size = 0.0;
  std::string family;
};

Settings load_settings(const CLI::App& app, const Globals& g) {
  Settings s;
  Config cfg;
  if (!g.config.empty()) cfg = Config::load(g.config);
  apply(cfg, s.reg);
  apply(cfg, s.map);
  apply(cfg, s.eval);
  s.seed_given = cfg.contains("seed");
  cfg.read("seed", s.seed);
  cfg.read("marker.thickness", s.reg.spec.thickness);
  cfg.reject_unused();
  if (app.count("--seed") > 0) {
    s.seed = g.seed;
    s.seed_given = true;
  }
  if (app.count("--threads") > 0) s.reg.threads = g.threads;
  if (g.strict) s.reg.strict = true;
  if (s.reg.threads == 0) fail(ErrorCode::kInvalidArgument, "--threads must be at least 1");
  return s;
}

TagFamily family_from(const std::string& path) {
  if (path.empty() || path == "builtin") return builtin_family();
  return load_family(path);
}

MarkerSpec spec_from(const MarkerArgs& m, const Settings& s) {
  if (!(m.size > 0.0)) fail(ErrorCode::kInvalidArgument, "--marker-size must be positive");
  return {m.size, s.reg.spec.thickness};
}

void add_marker_options(CLI::App* cmd, MarkerArgs& m) {
  cmd->add_option("--marker-size", m.size, "marker side length in meters")->required();
  cmd->add_option("--family", m.family, "tag family file (default: built-in 4x4 family)");
}

void dump_scan_images(const fs::path& dir, const std::string& stem, const ScanDetectionDebug& dbg) {
  fs::create_directories(dir);
  write_pgm(dir / (stem + "_intensity.pgm"), dbg.raw);
  write_pgm(dir / (stem + "_binary.pgm"), dbg.best);
  write_range_grid(dir / (stem + "_range.txt"), dbg.raw);
}

bool is_cloud_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".ply" || ext == ".xyz" || ext == ".xyzi";
}

/// A single directory expands to its cloud files sorted by name.
std::vector<fs::path> expand_scans(const std::vector<std::string>& args) {
  std::vector<fs::path> out;
  if (args.size() == 1 && fs::is_directory(args[0])) {
    for (const auto& e : fs::directory_iterator(args[0])) {
      if (e.is_regular_file() && is_cloud_file(e.path())) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) fail(ErrorCode::kInvalidArgument, "no .ply/.xyz files in " + args[0]);
    return out;
  }
  for (const auto& a : args) out.emplace_back(a);
  return out;
}

std::string scan_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scan_%03zu", i);
  return buf;
}

// --- simulate -------------------------------------------------------------

struct SimulateArgs {
  std::string scene;
  std::string out;
};

int run_simulate(const SimulateArgs& a, const Settings& s) {
  SceneFile sf = load_scene(a.scene);
  if (sf.viewpoints.empty()) fail(ErrorCode::kInvalidArgument, "scene file has no viewpoints");
  if (s.seed_given) sf.sensor.seed = s.seed;
  const fs::path out(a.out);
  fs::create_directories(out / "scans");

  nlohmann::json truth;
  truth["seed"] = sf.sensor.seed;
  truth["anchor"] = 0;
  truth["scans"] = nlohmann::json::array();
  PointCloud reference;
  for (std::size_t i = 0; i < sf.viewpoints.size(); ++i) {
    SensorModel m = sf.sensor;
    m.seed = scan_seed(sf.sensor.seed, i);
    const PointCloud scan = sample_scan(sf.scene, sf.viewpoints[i], m);
    const std::string file = "scans/" + scan_name(i) + ".ply";
    write_ply(out / file, scan);
    const Pose rel = sf.viewpoints[0].inverse() * sf.viewpoints[i];
    for (const Point& p : scan) reference.push_back({rel * p.position, p.intensity});
    truth["scans"].push_back({{"index", i},
                              {"file", file},
                              {"points", scan.size()},
                              {"pose", pose_to_json(sf.viewpoints[i])},
                              {"relative_pose", pose_to_json(rel)}});
    std::cout << file << ": " << scan.size() << " points\n";
  }
  truth["markers"] = nlohmann::json::array();
  for (std::size_t k = 0; k < sf.scene.markers.size(); ++k) {
    nlohmann::json corners = nlohmann::json::array();
    for (const auto& c : sf.scene.marker_corners(k)) corners.push_back({c.x(), c.y(), c.z()});
    truth["markers"].push_back({{"id", sf.scene.markers[k].id},
                                {"side", sf.scene.markers[k].side},
                                {"pose", pose_to_json(sf.scene.marker_pose(k))},
                                {"corners", corners}});
  }
  write_json(out / "ground_truth.json", truth);
  write_ply(out / "reference.ply", reference, "ground-truth merge in the frame of scan 0");
  return 0;
}

// --- detect ---------------------------------------------------------------

struct DetectArgs {
  std::string scan;
  std::string out;
  int scan_index = 0;
  MarkerArgs marker;
};

int run_detect(const DetectArgs& a, const Settings& s, const Globals& g) {
  const PointCloud cloud = read_cloud(a.scan);
  const TagFamily family = family_from(a.marker.family);
  ScanDetectionDebug dbg;
  const auto obs = detect_in_scan(cloud, s.reg.detection, family, spec_from(a.marker, s), a.scan_index,
                                  g.dump_images.empty() ? nullptr : &dbg);
  if (!g.dump_images.empty()) dump_scan_images(g.dump_images, fs::path(a.scan).stem().string(), dbg);
  write_observations(a.out, obs);
  std::cout << obs.size() << " marker(s) detected\n";
  return 0;
}

// --- locate-map -----------------------------------------------------------

struct LocateArgs {
  std::string map;
  std::string out;
  std::string dump_candidates;
  MarkerArgs marker;
};

int run_locate(const LocateArgs& a, const Settings& s, const Globals& g) {
  const PointCloud map = read_cloud(a.map);
  const TagFamily family = family_from(a.marker.family);
  std::string dump = a.dump_candidates.empty() ? g.dump_images : a.dump_candidates;
  MapLocateDebug dbg;
  const auto obs = locate_markers_in_map(map, spec_from(a.marker, s), family, s.map,
                                         dump.empty() ? nullptr : &dbg);
  if (!dump.empty()) {
    fs::create_directories(dump);
    for (std::size_t k = 0; k < dbg.candidates.size(); ++k) {
      char name[48];
      std::snprintf(name, sizeof name, "candidate_%03zu.pgm", k);
      write_pgm(fs::path(dump) / name, dbg.candidates[k].image);
    }
  }
  write_observations(a.out, obs);
  std::cout << obs.size() << " marker(s) located";
  if (!dump.empty()) std::cout << " from " << dbg.candidates.size() << " candidate cluster(s)";
  std::cout << '\n';
  return 0;
}

// --- register -------------------------------------------------------------

struct RegisterArgs {
  std::vector<std::string> scans;
  std::string out;
  std::string merged;
  std::string report;
  MarkerArgs marker;
};

int run_register(const RegisterArgs& a, const Settings& s, const Globals& g) {
  const auto files = expand_scans(a.scans);
  std::vector<PointCloud> scans;
  for (const auto& f : files) scans.push_back(read_cloud(f));
  const TagFamily family = family_from(a.marker.family);
  RegistrationConfig cfg = s.reg;
  cfg.spec = spec_from(a.marker, s);

  RegistrationRun run;
  if (g.dump_images.empty()) {
    run = register_scans(scans, family, cfg);
  } else {
    if (scans.size() < 2) fail(ErrorCode::kInvalidArgument, "registration needs at least 2 scans");
    std::vector<std::vector<MarkerObservation>> obs(scans.size());
    for (std::size_t i = 0; i < scans.size(); ++i) {
      if (scans[i].empty()) continue;
      ScanDetectionDebug dbg;
      obs[i] = detect_in_scan(scans[i], cfg.detection, family, cfg.spec, static_cast<int>(i), &dbg);
      dump_scan_images(g.dump_images, files[i].stem().string(), dbg);
    }
    run = register_observations(std::move(obs), cfg);
  }

  const auto& poses = run.result.scan_poses;
  if (!a.out.empty()) write_poses(a.out, poses);
  if (!a.merged.empty()) write_ply(a.merged, merge_scans(scans, poses));
  if (!a.report.empty()) {
    nlohmann::json j = to_json(run);
    j["inputs"] = nlohmann::json::array();
    for (const auto& f : files) j["inputs"].push_back(f.filename().string());
    write_json(a.report, j);
  }
  std::size_t detections = 0;
  for (const auto& o : run.observations) detections += o.size();
  std::cout << detections << " detection(s), cost " << run.result.initial_cost << " -> "
            << run.result.final_cost << " in " << run.result.iterations << " iteration(s)\n";
  if (!run.result.unreachable.empty()) {
    std::cerr << "warning: " << run.result.unreachable.size()
              << " scan(s) share no marker with the anchor and were left out\n";
  }
  return 0;
}

// --- eval -----------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> poses;
  std::string truth;
  std::size_t anchor = 0;
  std::string merged;
  std::string reference;
  std::vector<std::string> scans;
  std::string out;
  std::string table;
  std::string plots;
  double threshold = 0.0;
  bool mean = false;
  double rr_translation = 0.0;
  double rr_rotation = 0.0;
  double overlap_tau = 0.0;
};

std::vector<Pose> read_truth(const fs::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::kIo, "cannot open " + path.string());
  try {
    const nlohmann::json j = nlohmann::json::parse(is);
    std::vector<Pose> out;
    for (const auto& s : j.at("scans")) out.push_back(pose_from_json(s.at("pose")));
    return out;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, path.string() + ": " + e.what());
  }
}

int run_eval(const CLI::App& cmd, const EvalArgs& a, Settings s) {
  EvalSettings& es = s.eval;
  if (cmd.count("--threshold") > 0) es.recall_threshold = a.threshold;
  if (a.mean) es.mean_chamfer = true;
  if (cmd.count("--rr-translation") > 0) es.rr_translation = a.rr_translation;
  if (cmd.count("--rr-rotation") > 0) es.rr_rotation = a.rr_rotation;
  if (cmd.count("--overlap-tau") > 0) es.overlap_tau = a.overlap_tau;

  const std::vector<Pose> world = read_truth(a.truth);
  const std::vector<Pose> truth = relative_to(world, a.anchor);
  EvalReport report;
  report.settings = es;
  std::vector<std::vector<std::optional<Pose>>> estimates;
  for (const auto& p : a.poses) {
    estimates.push_back(read_poses(p));
    report.runs.push_back(evaluate_run(estimates.back(), truth, es, fs::path(p).filename().string()));
  }
  report.registration_recall = registration_recall(report.runs);
  if (!a.merged.empty() != !a.reference.empty()) {
    fail(ErrorCode::kInvalidArgument, "--merged and --reference go together");
  }
  if (!a.merged.empty()) {
    report.cloud = chamfer_and_recall(read_cloud(a.merged), read_cloud(a.reference), es.recall_threshold,
                                      es.mean_chamfer);
  }
  if (!a.scans.empty()) {
    const auto files = expand_scans(a.scans);
    std::vector<PointCloud> scans;
    for (const auto& f : files) scans.push_back(read_cloud(f));
    report.overlaps = pairwise_overlap(scans, world, es.overlap_tau);
  }

  const std::string table = format_table(report);
  std::cout << table;
  if (!a.out.empty()) write_json(a.out, to_json(report));
  if (!a.table.empty()) {
    std::ofstream os(a.table);
    if (!(os << table)) fail(ErrorCode::kIo, "cannot write " + a.table);
  }
  if (!a.plots.empty()) {
    const fs::path dir(a.plots);
    fs::create_directories(dir);
    std::vector<double> errors;
    for (const auto& run : report.runs) errors.insert(errors.end(), run.translation_errors.begin(),
                                                      run.translation_errors.end());
    const auto save = [](const fs::path& p, const std::string& text) {
      std::ofstream os(p);
      if (!(os << text)) fail(ErrorCode::kIo, "cannot write " + p.string());
    };
    save(dir / "trajectory.svg", trajectory_svg(estimates.front(), truth));
    save(dir / "translation_errors.svg", histogram_svg(errors, 20, "per-scan translation error [m]"));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fiducial-marker detection, map localization and multiview registration of LiDAR scans"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "key = value settings file");
  app.add_option("--seed", g.seed, "random seed (simulator)");
  app.add_option("--threads", g.threads, "detection worker threads");
  app.add_flag("--strict", g.strict, "fail when a scan cannot be connected to the anchor");
  app.add_option("--dump-images", g.dump_images, "write intensity, binary and range images here");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "render scans of a JSON scene description");
  sim_cmd->add_option("--scene", sim.scene, "scene JSON")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--out", sim.out, "output directory")->required();

  DetectArgs det;
  auto* det_cmd = app.add_subcommand("detect", "detect markers in a single scan");
  det_cmd->add_option("--scan", det.scan, "scan (.ply or .xyz)")->required()->check(CLI::ExistingFile);
  det_cmd->add_option("--out", det.out, "observations (JSON lines)")->required();
  det_cmd->add_option("--scan-index", det.scan_index, "scan index written to the observations");
  add_marker_options(det_cmd, det.marker);

  LocateArgs loc;
  auto* loc_cmd = app.add_subcommand("locate-map", "locate markers in a dense 3D map");
  loc_cmd->add_option("--map", loc.map, "map cloud (.ply or .xyz)")->required()->check(CLI::ExistingFile);
  loc_cmd->add_option("--out", loc.out, "observations (JSON lines)")->required();
  loc_cmd->add_option("--dump-candidates", loc.dump_candidates, "write candidate plane images here");
  add_marker_options(loc_cmd, loc.marker);

  RegisterArgs reg;
  auto* reg_cmd = app.add_subcommand("register", "register unordered scans through shared markers");
  reg_cmd->add_option("--scans", reg.scans, "scan files or one directory")->required();
  reg_cmd->add_option("--out", reg.out, "scan poses in the anchor frame");
  reg_cmd->add_option("--merged", reg.merged, "merged cloud (.ply)");
  reg_cmd->add_option("--report", reg.report, "JSON report");
  add_marker_options(reg_cmd, reg.marker);

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "compare registration output with ground truth");
  ev_cmd->add_option("--poses", ev.poses, "pose files, one per run")->required();
  ev_cmd->add_option("--truth", ev.truth, "ground_truth.json from simulate")->required();
  ev_cmd->add_option("--anchor", ev.anchor, "anchor scan of the estimates");
  ev_cmd->add_option("--merged", ev.merged, "merged cloud to score");
  ev_cmd->add_option("--reference", ev.reference, "reference cloud");
  ev_cmd->add_option("--scans", ev.scans, "scans for the overlap table (files or one directory)");
  ev_cmd->add_option("--threshold", ev.threshold, "recall threshold on squared distance [m^2]");
  ev_cmd->add_flag("--mean", ev.mean, "divide each Chamfer term by its set size");
  ev_cmd->add_option("--rr-translation", ev.rr_translation, "registration recall RMSE_T threshold [m]");
  ev_cmd->add_option("--rr-rotation", ev.rr_rotation, "registration recall RMSE_R threshold [rad]");
  ev_cmd->add_option("--overlap-tau", ev.overlap_tau, "overlap neighbor radius [m]");
  ev_cmd->add_option("--out", ev.out, "JSON report");
  ev_cmd->add_option("--table", ev.table, "plain-text table");
  ev_cmd->add_option("--plots", ev.plots, "directory for SVG plots");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitValidation;
  }

  try {
    const Settings s = load_settings(app, g);
    if (*sim_cmd) return run_simulate(sim, s);
    if (*det_cmd) return run_detect(det, s, g);
    if (*loc_cmd) return run_locate(loc, s, g);
    if (*reg_cmd) return run_register(reg, s, g);
    if (*ev_cmd) return run_eval(*ev_cmd, ev, s);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_validation() ? kExitValidation : kExitPipeline;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitPipeline;
  }
  return 0;
}
