#pragma once

// Evaluation metrics: pose RMSE, Chamfer distance and recall, registration
// recall and overlap rate.

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "fidreg/cloud.hpp"
#include "fidreg/geom.hpp"

namespace fidreg {

struct PoseRmse {
  double translation = 0.0;  // m
  double rotation = 0.0;     // rad, geodesic angle
};

/// Root mean square translation and rotation errors over paired poses. The
/// per-sample rotation error is the angle of R_est R_truth^T.
inline PoseRmse rmse(std::span<const Pose> estimates, std::span<const Pose> truth) {
  if (estimates.size() != truth.size()) {
    fail(ErrorCode::kLengthMismatch, "estimate and truth lists differ in length");
  }
  if (estimates.empty()) fail(ErrorCode::kLengthMismatch, "need at least one pose pair");
  double st = 0.0;
  double sr = 0.0;
  for (std::size_t n = 0; n < estimates.size(); ++n) {
    st += (estimates[n].translation - truth[n].translation).squaredNorm();
    const double angle = so3_log(estimates[n].rotation * truth[n].rotation.transpose()).norm();
    sr += angle * angle;
  }
  const auto count = static_cast<double>(estimates.size());
  return {std::sqrt(st / count), std::sqrt(sr / count)};
}

namespace detail {

// Squared distance from every point of `from` to its nearest point of `to`.
inline std::vector<double> nearest_sq_distances(const PointCloud& from, const PointCloud& to) {
  const KdTree tree(to);
  std::vector<double> out;
  out.reserve(from.size());
  for (const Point& p : from) out.push_back(tree.nearest(p.position).second);
  return out;
}

}  // namespace detail

struct ChamferResult {
  double chamfer = 0.0;  // m^2
  double recall = 0.0;   // fraction of X within the threshold of Y
};

/// CD = sum_x min_y |x - y|^2 + sum_y min_x |x - y|^2 (each term divided by
/// its set size when `mean` is set). Recall counts x with min_y |x - y|^2 <=
/// threshold, i.e. the threshold is on squared distance.
inline ChamferResult chamfer_and_recall(const PointCloud& x, const PointCloud& y, double threshold,
                                        bool mean = false) {
  if (x.empty() || y.empty()) fail(ErrorCode::kEmptyCloud, "chamfer needs two non-empty clouds");
  if (!(threshold > 0.0)) fail(ErrorCode::kInvalidArgument, "recall threshold must be positive");
  const auto dxy = detail::nearest_sq_distances(x, y);
  const auto dyx = detail::nearest_sq_distances(y, x);
  double sx = 0.0;
  double sy = 0.0;
  std::size_t hits = 0;
  for (double d : dxy) {
    sx += d;
    if (d <= threshold) ++hits;
  }
  for (double d : dyx) sy += d;
  if (mean) {
    sx /= static_cast<double>(x.size());
    sy /= static_cast<double>(y.size());
  }
  return {sx + sy, static_cast<double>(hits) / static_cast<double>(x.size())};
}

/// Fraction of runs whose translation and rotation RMSE are both strictly
/// below their thresholds.
inline double registration_recall(std::span<const PoseRmse> runs, double translation_threshold,
                                  double rotation_threshold) {
  if (runs.empty()) fail(ErrorCode::kInvalidArgument, "need at least one run");
  std::size_t ok = 0;
  for (const PoseRmse& r : runs) {
    if (r.translation < translation_threshold && r.rotation < rotation_threshold) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(runs.size());
}

/// Fraction of A's points with a B point within tau.
inline double overlap_rate(const PointCloud& a, const PointCloud& b, double tau) {
  if (a.empty() || b.empty()) fail(ErrorCode::kEmptyCloud, "overlap needs two non-empty clouds");
  if (!(tau > 0.0)) fail(ErrorCode::kInvalidArgument, "overlap radius must be positive");
  const KdTree tree(b);
  std::size_t hits = 0;
  for (const Point& p : a) {
    if (tree.nearest(p.position).second <= tau * tau) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(a.size());
}

/// Mean of both directions; the default overlap figure in reports.
inline double overlap_rate_symmetric(const PointCloud& a, const PointCloud& b, double tau = 0.05) {
  return 0.5 * (overlap_rate(a, b, tau) + overlap_rate(b, a, tau));
}

}  // namespace fidreg
