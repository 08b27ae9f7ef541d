#pragma once

// Square-tag detector on binary images. Black connected regions are fitted
// with a quadrilateral (convex hull, then least-squares border lines), the
// cell grid is sampled through the quad's homography and the data bits are
// decoded against a TagFamily.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>

#include "fidreg/intensity_image.hpp"
#include "fidreg/tag_family.hpp"

namespace fidreg {

struct Detection2D {
  int id = -1;
  /// Pixel positions (u, v) of the tag corners. Entry s is the corner that
  /// sits at the tag's canonical corner s: (-a/2,-a/2), (a/2,-a/2),
  /// (a/2,a/2), (-a/2,a/2) in the tag frame.
  std::array<Eigen::Vector2d, 4> corners_px;
  int margin = 0;    // bits
  int rotation = 0;  // quarter turns between code frame and sampled frame
};

struct DetectorOptions {
  double min_side_px = 10.0;
  double min_quad_fill = 0.85;   // quad area / hull area
  double border_fraction = 0.9;  // border cells that must read black
  int max_bit_errors = 1;
};

/// Planar homography mapping src[k] to dst[k] (exactly four points).
inline Eigen::Matrix3d homography_4pt(const std::array<Eigen::Vector2d, 4>& src,
                                      const std::array<Eigen::Vector2d, 4>& dst) {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int k = 0; k < 4; ++k) {
    const double x = src[k].x();
    const double y = src[k].y();
    const double u = dst[k].x();
    const double v = dst[k].y();
    a.row(2 * k) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * k + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * k) = u;
    b(2 * k + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> h = a.fullPivLu().solve(b);
  Eigen::Matrix3d m;
  m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  return m;
}

inline Eigen::Vector2d apply_homography(const Eigen::Matrix3d& h, const Eigen::Vector2d& p) {
  const Eigen::Vector3d q = h * Eigen::Vector3d(p.x(), p.y(), 1.0);
  return q.head<2>() / q.z();
}

/// Quarter turn of the full tag square [0, n]^2 matching rotate_code.
inline Eigen::Vector2d rotate_tag_point(const Eigen::Vector2d& p, double n) {
  return {n - p.y(), p.x()};
}

/// Tag-frame canonical corner s expressed in code-frame cell coordinates
/// (i to the right in the image, j up the inclination axis).
inline Eigen::Vector2d code_frame_corner(int s, double n) {
  switch (s) {
    case 0: return {n, 0.0};
    case 1: return {0.0, 0.0};
    case 2: return {0.0, n};
    default: return {n, n};
  }
}

namespace detail {

inline double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

inline double polygon_area(const std::vector<Eigen::Vector2d>& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    a += cross2(poly[i], poly[(i + 1) % poly.size()]);
  }
  return 0.5 * a;
}

// Andrew's monotone chain; counter-clockwise in (u, v) coordinates.
inline std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> pts) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Eigen::Vector2d> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross2(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    const auto& p = pts[i - 1];
    while (k >= t && cross2(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return hull;
}

struct Line2 {
  Eigen::Vector2d point;
  Eigen::Vector2d dir;
};

inline std::optional<Line2> fit_line(const std::vector<Eigen::Vector2d>& pts) {
  if (pts.size() < 3) return std::nullopt;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  return Line2{mean, eig.eigenvectors().col(1)};
}

inline std::optional<Eigen::Vector2d> intersect(const Line2& a, const Line2& b) {
  const double denom = cross2(a.dir, b.dir);
  if (std::abs(denom) < 1e-9) return std::nullopt;
  const double t = cross2(b.point - a.point, b.dir) / denom;
  return a.point + t * a.dir;
}

// Side modeled as y = c0 + c1 s + c2 s^2 in a frame along the rough edge
// direction, for edges bowed by the spherical projection.
inline constexpr double kMinSagittaPx = 0.5;
inline constexpr double kMinCurveSidePx = 64.0;

struct SideCurve {
  Eigen::Vector2d origin;
  Eigen::Vector2d dir;
  Eigen::Vector2d normal;
  Eigen::Vector3d coef;

  Eigen::Vector2d at(double s) const {
    return origin + s * dir + (coef(0) + s * (coef(1) + s * coef(2))) * normal;
  }
  Eigen::Vector2d tangent(double s) const { return dir + (coef(1) + 2.0 * s * coef(2)) * normal; }
};

inline std::optional<SideCurve> fit_side_curve(const std::vector<Eigen::Vector2d>& pts,
                                               const Eigen::Vector2d& origin,
                                               const Eigen::Vector2d& dir) {
  if (pts.size() < 6) return std::nullopt;
  SideCurve c{origin, dir, Eigen::Vector2d(-dir.y(), dir.x()), Eigen::Vector3d::Zero()};
  Eigen::MatrixXd a(static_cast<Eigen::Index>(pts.size()), 3);
  Eigen::VectorXd y(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const Eigen::Vector2d d = pts[static_cast<std::size_t>(i)] - origin;
    const double s = d.dot(dir);
    a.row(i) << 1.0, s, s * s;
    y(i) = d.dot(c.normal);
  }
  c.coef = a.colPivHouseholderQr().solve(y);
  if (!c.coef.allFinite()) return std::nullopt;
  return c;
}

/// Newton iteration for the crossing of two side curves, from `guess`.
inline std::optional<Eigen::Vector2d> intersect(const SideCurve& a, const SideCurve& b,
                                                const Eigen::Vector2d& guess) {
  double sa = (guess - a.origin).dot(a.dir);
  double sb = (guess - b.origin).dot(b.dir);
  for (int it = 0; it < 30; ++it) {
    const Eigen::Vector2d f = a.at(sa) - b.at(sb);
    Eigen::Matrix2d j;
    j.col(0) = a.tangent(sa);
    j.col(1) = -b.tangent(sb);
    if (std::abs(j.determinant()) < 1e-9) return std::nullopt;
    const Eigen::Vector2d step = j.partialPivLu().solve(-f);
    sa += step(0);
    sb += step(1);
    if (step.norm() < 1e-10) break;
  }
  const Eigen::Vector2d p = a.at(sa);
  if (!p.allFinite() || (p - b.at(sb)).norm() > 1e-6) return std::nullopt;
  return p;
}

// Initial quad from hull vertices: the farthest pair plus the extreme
// vertices on either side of the line through them.
inline std::optional<std::array<Eigen::Vector2d, 4>> quad_from_hull(
    const std::vector<Eigen::Vector2d>& hull) {
  if (hull.size() < 4) return std::nullopt;
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : hull) centroid += p;
  centroid /= static_cast<double>(hull.size());
  std::size_t a = 0;
  for (std::size_t i = 1; i < hull.size(); ++i) {
    if ((hull[i] - centroid).squaredNorm() > (hull[a] - centroid).squaredNorm()) a = i;
  }
  std::size_t b = a;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    if ((hull[i] - hull[a]).squaredNorm() > (hull[b] - hull[a]).squaredNorm()) b = i;
  }
  if (a == b) return std::nullopt;
  const Eigen::Vector2d d = hull[b] - hull[a];
  std::size_t c = a;
  std::size_t e = a;
  double cmax = 0.0;
  double emin = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const double s = cross2(d, hull[i] - hull[a]);
    if (s > cmax) {
      cmax = s;
      c = i;
    }
    if (s < emin) {
      emin = s;
      e = i;
    }
  }
  if (c == a || e == a) return std::nullopt;
  // Counter-clockwise order a, e, b, c (cross(d, e - a) < 0 < cross(d, c - a)).
  return std::array<Eigen::Vector2d, 4>{hull[a], hull[e], hull[b], hull[c]};
}

}  // namespace detail

/// Detects and decodes all tags of `family` in a binary image. Tags are
/// dark-bordered squares with white (1) and black (0) data cells.
inline std::vector<Detection2D> detect_2d(const BinaryImage& img, const TagFamily& family,
                                          const DetectorOptions& opts = {}) {
  std::vector<Detection2D> out;
  const int w = img.width();
  const int h = img.height();
  if (w <= 0 || h <= 0) return out;

  std::vector<int> label(img.bits.size(), -1);
  const int cells = family.cells_per_side();
  const double n = static_cast<double>(cells);
  int next_label = 0;
  std::vector<std::array<int, 2>> component;
  std::vector<std::array<int, 2>> stack;
  constexpr std::array<std::array<int, 2>, 4> kNeighbors{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};

  for (int v0 = 0; v0 < h; ++v0) {
    for (int u0 = 0; u0 < w; ++u0) {
      if (img.at(u0, v0) != 0 || label[img.index(u0, v0)] >= 0) continue;
      const int lab = next_label++;
      component.clear();
      stack.assign(1, {u0, v0});
      label[img.index(u0, v0)] = lab;
      bool touches_border = false;
      while (!stack.empty()) {
        const auto [u, v] = stack.back();
        stack.pop_back();
        component.push_back({u, v});
        if (u == 0 || v == 0 || u == w - 1 || v == h - 1) touches_border = true;
        for (const auto& d : kNeighbors) {
          const int uu = u + d[0];
          const int vv = v + d[1];
          if (!img.inside(uu, vv) || img.at(uu, vv) != 0) continue;
          const std::size_t idx = img.index(uu, vv);
          if (label[idx] >= 0) continue;
          label[idx] = lab;
          stack.push_back({uu, vv});
        }
      }
      if (touches_border) continue;
      const double min_side = opts.min_side_px;
      if (static_cast<double>(component.size()) < 2.0 * min_side) continue;

      // Boundary pixels and border edge points (midpoints to white neighbors).
      std::vector<Eigen::Vector2d> boundary;
      std::vector<Eigen::Vector2d> edges;
      for (const auto& [u, v] : component) {
        bool is_boundary = false;
        for (const auto& d : kNeighbors) {
          const int uu = u + d[0];
          const int vv = v + d[1];
          if (label[img.index(uu, vv)] != lab) {
            is_boundary = true;
            edges.emplace_back(u + 0.5 * d[0], v + 0.5 * d[1]);
          }
        }
        if (is_boundary) boundary.emplace_back(u, v);
      }
      const auto hull = detail::convex_hull(boundary);
      const auto quad0 = detail::quad_from_hull(hull);
      if (!quad0) continue;
      std::vector<Eigen::Vector2d> qpoly(quad0->begin(), quad0->end());
      const double quad_area = detail::polygon_area(qpoly);
      const double hull_area = detail::polygon_area(hull);
      if (quad_area <= 0.0 || quad_area < opts.min_quad_fill * hull_area) continue;
      double shortest = std::numeric_limits<double>::infinity();
      for (int k = 0; k < 4; ++k) {
        shortest = std::min(shortest, ((*quad0)[(k + 1) % 4] - (*quad0)[k]).norm());
      }
      if (shortest < min_side) continue;

      // Refine each side with a line fitted to the outer border edge points.
      // The band around each side grows with its length to admit bowed
      // edges.
      const double cell_px = shortest / n;
      const double bow = 0.03 * shortest;
      const double band_out = std::max(1.5, bow);
      const double band_in = std::min(std::max(1.2, bow), 0.45 * cell_px);
      std::array<std::vector<Eigen::Vector2d>, 4> side_pts;
      for (const auto& e : edges) {
        for (int k = 0; k < 4; ++k) {
          const Eigen::Vector2d a = (*quad0)[k];
          const Eigen::Vector2d b = (*quad0)[(k + 1) % 4];
          const Eigen::Vector2d dir = (b - a).normalized();
          const double t = (e - a).dot(dir) / (b - a).norm();
          if (t < 0.12 || t > 0.88) continue;
          // CCW polygon: outward normal is on the right of the edge direction.
          const double outward = -detail::cross2(dir, e - a);
          if (outward > band_out || outward < -band_in) continue;
          side_pts[k].push_back(e);
          break;
        }
      }
      std::array<detail::Line2, 4> lines;
      bool ok = true;
      for (int k = 0; k < 4 && ok; ++k) {
        const auto line = detail::fit_line(side_pts[k]);
        if (!line) {
          ok = false;
        } else {
          lines[k] = *line;
        }
      }
      if (!ok) continue;
      // A quadratic per side follows edges bowed by the spherical projection;
      // the chord line seeds the corner search.
      std::array<std::optional<detail::SideCurve>, 4> curves;
      for (int k = 0; k < 4; ++k) {
        const Eigen::Vector2d a = (*quad0)[k];
        const double len = ((*quad0)[(k + 1) % 4] - a).norm();
        curves[k] = detail::fit_side_curve(side_pts[k], a, ((*quad0)[(k + 1) % 4] - a).normalized());
        // On short sides the projection bow is far below a pixel and the
        // quadratic term would fit the pixel staircase instead.
        if (curves[k] && (len < detail::kMinCurveSidePx ||
                          std::abs(curves[k]->coef(2)) * 0.25 * len * len < detail::kMinSagittaPx)) {
          curves[k].reset();
        }
      }
      std::array<Eigen::Vector2d, 4> quad;
      for (int k = 0; k < 4 && ok; ++k) {
        // Corner k joins sides k-1 and k.
        auto p = detail::intersect(lines[(k + 3) % 4], lines[k]);
        const int prev = (k + 3) % 4;
        if (p && (curves[prev] || curves[k])) {
          const auto as_curve = [&](int side) {
            if (curves[side]) return *curves[side];
            const Eigen::Vector2d d = lines[side].dir;
            return detail::SideCurve{lines[side].point, d, Eigen::Vector2d(-d.y(), d.x()),
                                     Eigen::Vector3d::Zero()};
          };
          if (const auto q = detail::intersect(as_curve(prev), as_curve(k), *p)) p = q;
        }
        if (!p || (*p - (*quad0)[k]).norm() > 3.0 + 0.1 * shortest) {
          ok = false;
        } else {
          quad[k] = *p;
        }
      }
      if (!ok) continue;

      const std::array<Eigen::Vector2d, 4> canon = {
          Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(n, 0.0), Eigen::Vector2d(n, n),
          Eigen::Vector2d(0.0, n)};
      const Eigen::Matrix3d hom = homography_4pt(canon, quad);

      const auto sample_cell = [&](int ci, int cj) {
        int white = 0;
        int total = 0;
        for (double dy : {-0.25, 0.0, 0.25}) {
          for (double dx : {-0.25, 0.0, 0.25}) {
            const Eigen::Vector2d p =
                apply_homography(hom, Eigen::Vector2d(ci + 0.5 + dx, cj + 0.5 + dy));
            const long pu = std::lround(p.x());
            const long pv = std::lround(p.y());
            ++total;
            if (img.inside(static_cast<int>(pu), static_cast<int>(pv)) &&
                img.at(static_cast<int>(pu), static_cast<int>(pv)) != 0) {
              ++white;
            }
          }
        }
        return 2 * white > total;
      };

      int border_black = 0;
      int border_total = 0;
      TagCode bits = 0;
      for (int cj = 0; cj < cells; ++cj) {
        for (int ci = 0; ci < cells; ++ci) {
          const bool is_border = ci < family.border || cj < family.border ||
                                 ci >= cells - family.border || cj >= cells - family.border;
          const bool white = sample_cell(ci, cj);
          if (is_border) {
            ++border_total;
            if (!white) ++border_black;
          } else if (white) {
            const int i = ci - family.border;
            const int j = cj - family.border;
            bits |= TagCode{1} << (j * family.grid + i);
          }
        }
      }
      if (border_black < opts.border_fraction * border_total) continue;
      const auto decoded = decode(family, bits, opts.max_bit_errors);
      if (!decoded) continue;

      Detection2D det;
      det.id = decoded->id;
      det.margin = decoded->margin;
      det.rotation = decoded->rotation;
      for (int s = 0; s < 4; ++s) {
        Eigen::Vector2d p = code_frame_corner(s, n);
        for (int r = 0; r < decoded->rotation; ++r) p = rotate_tag_point(p, n);
        det.corners_px[s] = apply_homography(hom, p);
      }
      out.push_back(det);
    }
  }
  return out;
}

}  // namespace fidreg
