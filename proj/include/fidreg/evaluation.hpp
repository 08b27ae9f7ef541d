#pragma once

// Evaluation reports for registration runs against ground truth: per-run
// pose errors, registration recall, Chamfer distance / recall of the merged
// cloud and pairwise overlap. Emitted as JSON, a text table and SVG plots.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fidreg/cloud.hpp"
#include "fidreg/config.hpp"
#include "fidreg/geom.hpp"
#include "fidreg/metrics.hpp"

namespace fidreg {

struct EvalSettings {
  double recall_threshold = 0.0025;  // m^2 (5 cm)
  bool mean_chamfer = false;
  double rr_translation = 0.1;       // m
  double rr_rotation = 0.1;          // rad
  double overlap_tau = 0.05;         // m
};

inline void apply(const Config& c, EvalSettings& s) {
  c.read("eval.recall_threshold", s.recall_threshold);
  c.read("eval.mean_chamfer", s.mean_chamfer);
  c.read("eval.rr_translation", s.rr_translation);
  c.read("eval.rr_rotation", s.rr_rotation);
  c.read("eval.overlap_tau", s.overlap_tau);
}

struct RunEval {
  std::string name;
  PoseRmse rmse;
  std::vector<double> translation_errors;  // per reachable scan
  std::vector<double> rotation_errors;
  std::vector<std::size_t> unreachable;
  bool success = false;  // both RMSEs below the thresholds and every scan placed
};

struct PairOverlap {
  std::size_t a = 0;
  std::size_t b = 0;
  double rate = 0.0;
};

struct EvalReport {
  EvalSettings settings;
  std::vector<RunEval> runs;
  double registration_recall = 0.0;
  std::optional<ChamferResult> cloud;
  std::vector<PairOverlap> overlaps;
};

/// Ground-truth sensor poses re-expressed in the frame of scan `anchor`.
inline std::vector<Pose> relative_to(const std::vector<Pose>& world, std::size_t anchor) {
  if (anchor >= world.size()) fail(ErrorCode::kInvalidArgument, "anchor scan out of range");
  std::vector<Pose> out;
  for (const Pose& p : world) out.push_back(world[anchor].inverse() * p);
  return out;
}

inline RunEval evaluate_run(const std::vector<std::optional<Pose>>& estimates,
                            const std::vector<Pose>& truth, const EvalSettings& s,
                            std::string name = {}) {
  if (estimates.size() != truth.size()) {
    fail(ErrorCode::kLengthMismatch, "pose file has " + std::to_string(estimates.size()) +
                                         " scans, ground truth has " + std::to_string(truth.size()));
  }
  RunEval run;
  run.name = std::move(name);
  std::vector<Pose> est;
  std::vector<Pose> ref;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    if (!estimates[i]) {
      run.unreachable.push_back(i);
      continue;
    }
    est.push_back(*estimates[i]);
    ref.push_back(truth[i]);
    run.translation_errors.push_back((estimates[i]->translation - truth[i].translation).norm());
    run.rotation_errors.push_back(so3_log(estimates[i]->rotation * truth[i].rotation.transpose()).norm());
  }
  if (est.empty()) fail(ErrorCode::kInvalidArgument, "no scan has an estimated pose");
  run.rmse = rmse(est, ref);
  run.success = run.unreachable.empty() && run.rmse.translation < s.rr_translation &&
                run.rmse.rotation < s.rr_rotation;
  return run;
}

inline double registration_recall(const std::vector<RunEval>& runs) {
  if (runs.empty()) fail(ErrorCode::kInvalidArgument, "need at least one run");
  const auto ok = std::count_if(runs.begin(), runs.end(), [](const RunEval& r) { return r.success; });
  return static_cast<double>(ok) / static_cast<double>(runs.size());
}

/// Symmetric overlap of every scan pair placed with `poses`.
inline std::vector<PairOverlap> pairwise_overlap(const std::vector<PointCloud>& scans,
                                                 const std::vector<Pose>& poses, double tau) {
  if (scans.size() != poses.size()) fail(ErrorCode::kLengthMismatch, "one pose per scan required");
  std::vector<PointCloud> placed;
  for (std::size_t i = 0; i < scans.size(); ++i) placed.push_back(transformed(scans[i], poses[i]));
  std::vector<PairOverlap> out;
  for (std::size_t i = 0; i < placed.size(); ++i) {
    for (std::size_t j = i + 1; j < placed.size(); ++j) {
      out.push_back({i, j, overlap_rate_symmetric(placed[i], placed[j], tau)});
    }
  }
  return out;
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["settings"] = {{"recall_threshold_m2", r.settings.recall_threshold},
                   {"mean_chamfer", r.settings.mean_chamfer},
                   {"rr_translation_m", r.settings.rr_translation},
                   {"rr_rotation_rad", r.settings.rr_rotation},
                   {"overlap_tau_m", r.settings.overlap_tau},
                   {"overlap_definition", "mean of both directions of the fraction of points with a "
                                          "neighbor in the other scan within tau"}};
  j["runs"] = nlohmann::json::array();
  for (const auto& run : r.runs) {
    j["runs"].push_back({{"name", run.name},
                         {"rmse_t", run.rmse.translation},
                         {"rmse_r", run.rmse.rotation},
                         {"translation_errors", run.translation_errors},
                         {"rotation_errors", run.rotation_errors},
                         {"unreachable", run.unreachable},
                         {"success", run.success}});
  }
  j["registration_recall"] = r.registration_recall;
  if (r.cloud) {
    j["chamfer"] = r.cloud->chamfer;
    j["recall"] = r.cloud->recall;
  }
  j["overlap"] = nlohmann::json::array();
  for (const auto& o : r.overlaps) j["overlap"].push_back({{"a", o.a}, {"b", o.b}, {"rate", o.rate}});
  if (!r.overlaps.empty()) {
    double sum = 0.0;
    double lo = 1.0;
    for (const auto& o : r.overlaps) {
      sum += o.rate;
      lo = std::min(lo, o.rate);
    }
    j["overlap_mean"] = sum / static_cast<double>(r.overlaps.size());
    j["overlap_min"] = lo;
  }
  return j;
}

inline std::string format_table(const EvalReport& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %12s %12s %11s %8s\n", "run", "RMSE_T [m]", "RMSE_R [rad]",
                "unreachable", "success");
  os << line;
  for (const auto& run : r.runs) {
    std::snprintf(line, sizeof line, "%-24s %12.6f %12.6f %11zu %8s\n", run.name.c_str(),
                  run.rmse.translation, run.rmse.rotation, run.unreachable.size(),
                  run.success ? "yes" : "no");
    os << line;
  }
  std::snprintf(line, sizeof line, "registration recall      %.4f\n", r.registration_recall);
  os << line;
  if (r.cloud) {
    std::snprintf(line, sizeof line, "chamfer [m^2]            %.6g%s\nrecall                   %.4f\n",
                  r.cloud->chamfer, r.settings.mean_chamfer ? " (mean)" : "", r.cloud->recall);
    os << line;
  }
  for (const auto& o : r.overlaps) {
    std::snprintf(line, sizeof line, "overlap %zu-%zu              %.4f\n", o.a, o.b, o.rate);
    os << line;
  }
  return os.str();
}

namespace detail {

struct SvgFrame {
  double x0, y0, scale;
  double width, height, margin;
  double px(double x) const { return margin + (x - x0) * scale; }
  double py(double y) const { return height - margin - (y - y0) * scale; }
};

inline std::string svg_header(double w, double h) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" viewBox=\"0 0 " << w << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return os.str();
}

}  // namespace detail

/// Top view (x, y) of ground-truth and estimated scan positions, each
/// estimate joined to its truth by a line.
inline std::string trajectory_svg(const std::vector<std::optional<Pose>>& estimates,
                                  const std::vector<Pose>& truth) {
  constexpr double kSize = 480.0;
  constexpr double kMargin = 40.0;
  Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector2d hi = -lo;
  const auto extend = [&](const Pose& p) {
    lo = lo.cwiseMin(p.translation.head<2>());
    hi = hi.cwiseMax(p.translation.head<2>());
  };
  for (const Pose& p : truth) extend(p);
  for (const auto& p : estimates) {
    if (p) extend(*p);
  }
  if (truth.empty()) lo = hi = Eigen::Vector2d::Zero();
  const double span = std::max((hi - lo).maxCoeff(), 1e-6);
  const detail::SvgFrame f{lo.x(), lo.y(), (kSize - 2 * kMargin) / span, kSize, kSize, kMargin};

  std::ostringstream os;
  os << detail::svg_header(kSize, kSize);
  os << "<text x=\"" << kMargin << "\" y=\"20\">scan positions (top view); truth o, estimate x</text>\n";
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double tx = f.px(truth[i].translation.x());
    const double ty = f.py(truth[i].translation.y());
    os << "<circle cx=\"" << tx << "\" cy=\"" << ty << "\" r=\"5\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<text x=\"" << tx + 7 << "\" y=\"" << ty - 7 << "\">" << i << "</text>\n";
    if (i < estimates.size() && estimates[i]) {
      const double ex = f.px(estimates[i]->translation.x());
      const double ey = f.py(estimates[i]->translation.y());
      os << "<line x1=\"" << tx << "\" y1=\"" << ty << "\" x2=\"" << ex << "\" y2=\"" << ey
         << "\" stroke=\"gray\"/>\n";
      os << "<path d=\"M" << ex - 4 << ' ' << ey - 4 << " l8 8 M" << ex - 4 << ' ' << ey + 4
         << " l8 -8\" stroke=\"red\" stroke-width=\"2\"/>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

/// Histogram of `values` with `bins` equal-width bins from 0 to the maximum.
inline std::string histogram_svg(const std::vector<double>& values, int bins, const std::string& title) {
  if (bins < 1) fail(ErrorCode::kInvalidArgument, "histogram needs at least one bin");
  constexpr double kWidth = 480.0;
  constexpr double kHeight = 320.0;
  constexpr double kMargin = 40.0;
  const double top = values.empty() ? 1.0 : std::max(*std::max_element(values.begin(), values.end()), 1e-12);
  std::vector<int> counts(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    const int b = std::min(bins - 1, static_cast<int>(v / top * bins));
    ++counts[static_cast<std::size_t>(std::max(0, b))];
  }
  const int peak = std::max(1, *std::max_element(counts.begin(), counts.end()));
  const double bar = (kWidth - 2 * kMargin) / bins;

  std::ostringstream os;
  os << detail::svg_header(kWidth, kHeight);
  os << "<text x=\"" << kMargin << "\" y=\"20\">" << title << "</text>\n";
  for (int b = 0; b < bins; ++b) {
    const double h = (kHeight - 2 * kMargin) * counts[static_cast<std::size_t>(b)] / peak;
    os << "<rect x=\"" << kMargin + b * bar << "\" y=\"" << kHeight - kMargin - h << "\" width=\""
       << bar - 1 << "\" height=\"" << h << "\" fill=\"steelblue\"/>\n";
  }
  os << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\"" << kWidth - kMargin
     << "\" y2=\"" << kHeight - kMargin << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << kMargin << "\" y=\"" << kHeight - 15 << "\">0</text>\n";
  os << "<text x=\"" << kWidth - kMargin << "\" y=\"" << kHeight - 15 << "\" text-anchor=\"end\">" << top
     << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace fidreg
