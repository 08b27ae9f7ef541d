#pragma once

// Point-cloud container, voxel hash neighbor search, intensity-gradient
// downsampling, Euclidean clustering and PCA oriented bounding boxes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "fidreg/error.hpp"
#include "fidreg/geom.hpp"

namespace fidreg {

struct Point {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double intensity = 0.0;  // [0, 255]
};

struct PointCloud {
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  void push_back(const Point& p) { points.push_back(p); }
  const Point& operator[](std::size_t i) const { return points[i]; }
  Point& operator[](std::size_t i) { return points[i]; }
  auto begin() const { return points.begin(); }
  auto end() const { return points.end(); }
  auto begin() { return points.begin(); }
  auto end() { return points.end(); }
};

inline PointCloud transformed(const PointCloud& cloud, const Pose& pose) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const Point& p : cloud) out.push_back({pose * p.position, p.intensity});
  return out;
}

inline PointCloud subset(const PointCloud& cloud, const std::vector<std::size_t>& indices) {
  PointCloud out;
  out.points.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(cloud[i]);
  return out;
}

/// Uniform voxel hash over a cloud. The cloud must outlive the grid.
class VoxelGrid {
 public:
  VoxelGrid(const PointCloud& cloud, double cell_size)
      : cloud_(&cloud), cell_(cell_size) {
    if (!(cell_size > 0.0)) fail(ErrorCode::kInvalidArgument, "voxel cell size must be positive");
    cells_.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      cells_[key(coord(cloud[i].position))].push_back(i);
    }
  }

  double cell_size() const { return cell_; }

  /// Indices of all points with ||p - q|| <= radius, ascending.
  std::vector<std::size_t> radius_search(const Eigen::Vector3d& q, double radius) const {
    std::vector<std::size_t> out;
    const auto c = coord(q);
    const auto reach = static_cast<std::int64_t>(std::ceil(radius / cell_));
    const double r2 = radius * radius;
    for (std::int64_t dx = -reach; dx <= reach; ++dx) {
      for (std::int64_t dy = -reach; dy <= reach; ++dy) {
        for (std::int64_t dz = -reach; dz <= reach; ++dz) {
          const auto it = cells_.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
          if (it == cells_.end()) continue;
          for (std::size_t i : it->second) {
            if (((*cloud_)[i].position - q).squaredNorm() <= r2) out.push_back(i);
          }
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// The k nearest points to q (q itself included when it is a cloud point),
  /// sorted by distance with index as tie-break.
  std::vector<std::size_t> knn(const Eigen::Vector3d& q, std::size_t k) const {
    k = std::min(k, cloud_->size());
    std::vector<std::pair<double, std::size_t>> found;
    if (k == 0) return {};
    const auto c = coord(q);
    for (std::int64_t ring = 0;; ++ring) {
      for (std::int64_t dx = -ring; dx <= ring; ++dx) {
        for (std::int64_t dy = -ring; dy <= ring; ++dy) {
          for (std::int64_t dz = -ring; dz <= ring; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
            const auto it = cells_.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
            if (it == cells_.end()) continue;
            for (std::size_t i : it->second) {
              found.emplace_back(((*cloud_)[i].position - q).squaredNorm(), i);
            }
          }
        }
      }
      if (found.size() >= k) {
        std::nth_element(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(k - 1),
                         found.end());
        const double kth = found[k - 1].first;
        // Every unvisited cell is at least ring * cell away from q.
        const double covered = static_cast<double>(ring) * cell_;
        if (kth <= covered * covered || found.size() == cloud_->size()) break;
      }
      if (found.size() == cloud_->size()) break;
    }
    std::sort(found.begin(), found.end());
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(found[i].second);
    return out;
  }

 private:
  using Coord = std::array<std::int64_t, 3>;

  Coord coord(const Eigen::Vector3d& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / cell_)),
            static_cast<std::int64_t>(std::floor(p.y() / cell_)),
            static_cast<std::int64_t>(std::floor(p.z() / cell_))};
  }

  static std::uint64_t key(const Coord& c) {
    constexpr std::int64_t kOffset = 1 << 20;
    constexpr std::uint64_t kMask = (1u << 21) - 1;
    return ((static_cast<std::uint64_t>(c[0] + kOffset) & kMask) << 42) |
           ((static_cast<std::uint64_t>(c[1] + kOffset) & kMask) << 21) |
           (static_cast<std::uint64_t>(c[2] + kOffset) & kMask);
  }

  const PointCloud* cloud_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

/// Static k-d tree for exact nearest-neighbor queries on large clouds.
class KdTree {
 public:
  explicit KdTree(const PointCloud& cloud) {
    order_.resize(cloud.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    pts_.reserve(cloud.size());
    for (const Point& p : cloud) pts_.push_back(p.position);
    axis_.assign(cloud.size(), 0);
    build(0, order_.size());
    std::vector<Eigen::Vector3d> sorted;
    sorted.reserve(pts_.size());
    for (std::size_t i : order_) sorted.push_back(pts_[i]);
    pts_ = std::move(sorted);
  }

  bool empty() const { return pts_.empty(); }

  /// Cloud index and squared distance of the nearest point; ties go to the
  /// first point visited.
  std::pair<std::size_t, double> nearest(const Eigen::Vector3d& q) const {
    if (pts_.empty()) fail(ErrorCode::kEmptyCloud, "nearest neighbor in an empty cloud");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    search(0, pts_.size(), q, best, best_d);
    return {order_[best], best_d};
  }

 private:
  static constexpr std::size_t kLeaf = 8;

  void build(std::size_t lo, std::size_t hi) {
    if (hi - lo <= kLeaf) return;
    Eigen::Vector3d mn = pts_[order_[lo]];
    Eigen::Vector3d mx = mn;
    for (std::size_t i = lo; i < hi; ++i) {
      mn = mn.cwiseMin(pts_[order_[i]]);
      mx = mx.cwiseMax(pts_[order_[i]]);
    }
    int axis = 0;
    (mx - mn).maxCoeff(&axis);
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(lo),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::size_t a, std::size_t b) {
                       return pts_[a][axis] < pts_[b][axis] || (pts_[a][axis] == pts_[b][axis] && a < b);
                     });
    axis_[mid] = static_cast<std::uint8_t>(axis);
    build(lo, mid);
    build(mid + 1, hi);
  }

  void search(std::size_t lo, std::size_t hi, const Eigen::Vector3d& q, std::size_t& best,
              double& best_d) const {
    if (hi - lo <= kLeaf) {
      for (std::size_t i = lo; i < hi; ++i) {
        const double d = (pts_[i] - q).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      return;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    const double d = (pts_[mid] - q).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = mid;
    }
    const double diff = q[axis_[mid]] - pts_[mid][axis_[mid]];
    if (diff < 0.0) {
      search(lo, mid, q, best, best_d);
      if (diff * diff < best_d) search(mid + 1, hi, q, best, best_d);
    } else {
      search(mid + 1, hi, q, best, best_d);
      if (diff * diff < best_d) search(lo, mid, q, best, best_d);
    }
  }

  std::vector<Eigen::Vector3d> pts_;  // in tree order after construction
  std::vector<std::size_t> order_;    // tree position -> cloud index
  std::vector<std::uint8_t> axis_;
};

/// Median nearest-neighbor distance over (a deterministic subsample of) the
/// cloud. Returns 0 for clouds with fewer than two points.
inline double estimate_spacing(const PointCloud& cloud) {
  if (cloud.size() < 2) return 0.0;
  Eigen::Vector3d lo = cloud[0].position;
  Eigen::Vector3d hi = lo;
  for (const Point& p : cloud) {
    lo = lo.cwiseMin(p.position);
    hi = hi.cwiseMax(p.position);
  }
  const double diag = (hi - lo).norm();
  if (diag <= 0.0) return 0.0;
  // Surfaces dominate LiDAR clouds, so size the probe grid for a 2D density.
  const double cell = std::max(diag / std::sqrt(static_cast<double>(cloud.size())), diag * 1e-6);
  const VoxelGrid grid(cloud, cell);
  const std::size_t stride = std::max<std::size_t>(1, cloud.size() / 2000);
  std::vector<double> nn;
  for (std::size_t i = 0; i < cloud.size(); i += stride) {
    const auto idx = grid.knn(cloud[i].position, 2);
    if (idx.size() == 2) nn.push_back((cloud[idx[1]].position - cloud[i].position).norm());
  }
  if (nn.empty()) return 0.0;
  std::nth_element(nn.begin(), nn.begin() + static_cast<std::ptrdiff_t>(nn.size() / 2), nn.end());
  return nn[nn.size() / 2];
}

struct GradientEstimate {
  Eigen::Vector3d gradient = Eigen::Vector3d::Zero();  // intensity units / m
  double intercept = 0.0;
  std::size_t neighbor_count = 0;
};

/// Local linear intensity model I(p) ~ C^T (p - p0) + b fitted over the
/// neighbors (coordinates relative to p0, intensities centered on their mean).
/// The gradient is C. Neighborhoods that span only a plane yield the
/// minimum-norm (in-plane) gradient; spreads of rank < 2 are rejected.
inline GradientEstimate intensity_gradient(const Point& p0, const PointCloud& neighbors) {
  const std::size_t n = neighbors.size();
  if (n < 4) fail(ErrorCode::kRankDeficient, "gradient regression needs at least 4 neighbors");

  Eigen::MatrixXd delta(static_cast<Eigen::Index>(n), 3);
  Eigen::VectorXd response(static_cast<Eigen::Index>(n));
  double mean_intensity = 0.0;
  for (const Point& p : neighbors) mean_intensity += p.intensity;
  mean_intensity /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    delta.row(static_cast<Eigen::Index>(i)) = (neighbors[i].position - p0.position).transpose();
    response(static_cast<Eigen::Index>(i)) = neighbors[i].intensity - mean_intensity;
  }

  // Column-centering the offsets decouples the intercept from the slope.
  const Eigen::RowVector3d delta_mean = delta.colwise().mean();
  const Eigen::MatrixXd centered = delta.rowwise() - delta_mean;
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  const double cutoff = 1e-9 * s(0);
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) ++rank;
  }
  if (rank < 2) fail(ErrorCode::kRankDeficient, "neighbor spread is degenerate");

  const Eigen::VectorXd uty = svd.matrixU().transpose() * response;
  Eigen::Vector3d coeff = Eigen::Vector3d::Zero();
  for (int i = 0; i < rank; ++i) {
    coeff += svd.matrixV().col(i) * (uty(i) / s(i));
  }

  GradientEstimate out;
  out.gradient = coeff;
  out.intercept = -delta_mean.dot(coeff.transpose());
  out.neighbor_count = n;
  return out;
}

struct DownsampleStats {
  std::size_t rank_deficient = 0;
};

/// Keeps the points whose intensity-gradient norm over their k nearest
/// neighbors (self included) exceeds `threshold`. Order is preserved.
inline PointCloud downsample_by_gradient(const PointCloud& cloud, std::size_t k, double threshold,
                                         DownsampleStats* stats = nullptr) {
  if (k < 4) fail(ErrorCode::kInvalidArgument, "k must be at least 4");
  if (!(threshold > 0.0)) fail(ErrorCode::kInvalidArgument, "gradient threshold must be positive");
  PointCloud out;
  if (cloud.size() < k || std::isinf(threshold)) return out;

  const double spacing = estimate_spacing(cloud);
  const VoxelGrid grid(cloud, spacing > 0.0 ? 2.0 * spacing : 1.0);
  PointCloud neighbors;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto idx = grid.knn(cloud[i].position, k);
    neighbors.points.clear();
    for (std::size_t j : idx) neighbors.push_back(cloud[j]);
    try {
      const GradientEstimate g = intensity_gradient(cloud[i], neighbors);
      if (g.gradient.norm() > threshold) out.push_back(cloud[i]);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kRankDeficient) throw;
      if (stats) ++stats->rank_deficient;
    }
  }
  return out;
}

/// Connected components under "distance <= tol", size-filtered. Components
/// are ordered by their smallest point index; indices within a component are
/// ascending.
inline std::vector<std::vector<std::size_t>> euclidean_cluster_indices(const PointCloud& cloud,
                                                                       double tol,
                                                                       std::size_t min_size,
                                                                       std::size_t max_size) {
  if (!(tol > 0.0)) fail(ErrorCode::kInvalidArgument, "cluster tolerance must be positive");
  if (min_size == 0 || min_size > max_size) {
    fail(ErrorCode::kInvalidArgument, "require 0 < min_size <= max_size");
  }
  std::vector<std::vector<std::size_t>> clusters;
  if (cloud.empty()) return clusters;

  const VoxelGrid grid(cloud, tol);
  std::vector<char> visited(cloud.size(), 0);
  for (std::size_t seed = 0; seed < cloud.size(); ++seed) {
    if (visited[seed]) continue;
    std::vector<std::size_t> component{seed};
    visited[seed] = 1;
    for (std::size_t head = 0; head < component.size(); ++head) {
      for (std::size_t j : grid.radius_search(cloud[component[head]].position, tol)) {
        if (!visited[j]) {
          visited[j] = 1;
          component.push_back(j);
        }
      }
    }
    if (component.size() >= min_size && component.size() <= max_size) {
      std::sort(component.begin(), component.end());
      clusters.push_back(std::move(component));
    }
  }
  return clusters;
}

inline std::vector<PointCloud> euclidean_cluster(const PointCloud& cloud, double tol,
                                                 std::size_t min_size, std::size_t max_size) {
  std::vector<PointCloud> out;
  for (const auto& idx : euclidean_cluster_indices(cloud, tol, min_size, max_size)) {
    out.push_back(subset(cloud, idx));
  }
  return out;
}

/// PCA oriented bounding box. `pose` maps world points into the box frame,
/// whose origin is the box center and whose axes follow l, w, h.
struct OrientedBox {
  Pose pose;
  double l = 0.0;
  double w = 0.0;
  double h = 0.0;

  double diagonal() const { return std::sqrt(l * l + w * w + h * h); }
  double footprint_area() const { return l * w; }
  Pose world_from_box() const { return pose.inverse(); }

  bool contains(const Eigen::Vector3d& p, double slack = 1e-9) const {
    const Eigen::Vector3d q = pose * p;
    return std::abs(q.x()) <= 0.5 * l + slack && std::abs(q.y()) <= 0.5 * w + slack &&
           std::abs(q.z()) <= 0.5 * h + slack;
  }
};

namespace detail {

// Sign convention for a PCA axis: non-negative dot with (1,1,1); exact ties
// go to the first non-zero component being positive.
inline Eigen::Vector3d canonical_sign(Eigen::Vector3d axis) {
  const double s = axis.sum();
  if (std::abs(s) > 1e-12) return s < 0.0 ? Eigen::Vector3d(-axis) : axis;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(axis(i)) > 1e-12) return axis(i) < 0.0 ? Eigen::Vector3d(-axis) : axis;
  }
  return axis;
}

// Unit vector of the plane orthogonal to `normal`, taken from the first world
// axis with a usable projection.
inline Eigen::Vector3d in_plane_axis(const Eigen::Vector3d& normal) {
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d e = Eigen::Vector3d::Unit(i);
    const Eigen::Vector3d proj = e - e.dot(normal) * normal;
    if (proj.norm() > 0.3) return proj.normalized();
  }
  return Eigen::Vector3d::UnitX();
}

}  // namespace detail

inline OrientedBox fit_obb(const PointCloud& cluster) {
  if (cluster.size() < 3) fail(ErrorCode::kDegenerateCluster, "need at least 3 points");
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const Point& p : cluster) mean += p.position;
  mean /= static_cast<double>(cluster.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const Point& p : cluster) {
    const Eigen::Vector3d d = p.position - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(cluster.size());

  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d lambda = eig.eigenvalues();  // ascending
  if (!(lambda(2) > 0.0) || lambda(1) <= 1e-12 * lambda(2)) {
    fail(ErrorCode::kDegenerateCluster, "cluster points are collinear or coincident");
  }
  // Principal axes in descending variance order.
  std::array<Eigen::Vector3d, 3> axes = {eig.eigenvectors().col(2), eig.eigenvectors().col(1),
                                         eig.eigenvectors().col(0)};
  const auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(a, b); };
  const bool top_tied = close(lambda(2), lambda(1));
  const bool low_tied = close(lambda(1), lambda(0));
  if (top_tied && low_tied) {
    axes = {Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitZ()};
  } else if (top_tied) {
    // Isotropic principal plane: the basis inside it is arbitrary, so anchor
    // it to the world axes.
    axes[0] = detail::in_plane_axis(axes[2]);
    axes[1] = axes[2].cross(axes[0]);
  } else if (low_tied) {
    axes[1] = detail::in_plane_axis(axes[0]);
    axes[2] = axes[0].cross(axes[1]);
  }

  std::array<double, 3> lo{};
  std::array<double, 3> hi{};
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::numeric_limits<double>::infinity();
    hi[a] = -std::numeric_limits<double>::infinity();
    for (const Point& p : cluster) {
      const double t = axes[a].dot(p.position);
      lo[a] = std::min(lo[a], t);
      hi[a] = std::max(hi[a], t);
    }
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return hi[a] - lo[a] > hi[b] - lo[b]; });

  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  for (int a = 0; a < 3; ++a) center += 0.5 * (hi[a] + lo[a]) * axes[a];

  const Eigen::Vector3d x = detail::canonical_sign(axes[order[0]]);
  const Eigen::Vector3d y = detail::canonical_sign(axes[order[1]]);
  const Eigen::Vector3d z = x.cross(y);
  Eigen::Matrix3d box_from_world;
  box_from_world.row(0) = x.transpose();
  box_from_world.row(1) = y.transpose();
  box_from_world.row(2) = z.transpose();

  OrientedBox box;
  box.pose = Pose(box_from_world, -(box_from_world * center));
  box.l = hi[order[0]] - lo[order[0]];
  box.w = hi[order[1]] - lo[order[1]];
  box.h = hi[order[2]] - lo[order[2]];
  return box;
}

}  // namespace fidreg
