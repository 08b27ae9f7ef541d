#pragma once

// Spherical projection of a point cloud into an intensity image with a
// parallel range buffer, plus preprocessing (binarization, Gaussian blur,
// horizontal flip) and the pixel -> 3D inverse mapping.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "fidreg/cloud.hpp"
#include "fidreg/error.hpp"

namespace fidreg {

/// Angular resolutions (rad / pixel), pixel offsets and image size.
/// u = round(azimuth / azimuth_res) + u_offset, v likewise for inclination.
struct ProjectionConfig {
  double azimuth_res = 0.0;
  double inclination_res = 0.0;
  int u_offset = 0;
  int v_offset = 0;
  int width = 0;
  int height = 0;

  void validate() const {
    if (!(azimuth_res > 0.0) || !(inclination_res > 0.0)) {
      fail(ErrorCode::kInvalidArgument, "angular resolutions must be positive");
    }
    if (width <= 0 || height <= 0) fail(ErrorCode::kInvalidArgument, "image size must be positive");
  }

  /// Zero azimuth / inclination at the image center.
  static ProjectionConfig centered(double azimuth_res, double inclination_res, int width,
                                   int height) {
    return {azimuth_res, inclination_res, width / 2, height / 2, width, height};
  }
};

struct SphericalCoords {
  double azimuth;
  double inclination;
  double range;
};

inline SphericalCoords to_spherical(const Eigen::Vector3d& p) {
  return {std::atan2(p.y(), p.x()), std::atan2(p.z(), std::hypot(p.x(), p.y())), p.norm()};
}

inline Eigen::Vector3d from_spherical(double azimuth, double inclination, double range) {
  const double c = std::cos(inclination);
  return {range * c * std::cos(azimuth), range * c * std::sin(azimuth),
          range * std::sin(inclination)};
}

/// Sizes the image to the cloud's angular extent so that every point lands
/// inside it; the extent's center sits at the image center.
inline ProjectionConfig auto_config(const PointCloud& cloud, double azimuth_res,
                                    double inclination_res) {
  if (cloud.empty()) fail(ErrorCode::kEmptyCloud, "cannot size an image for an empty cloud");
  if (!(azimuth_res > 0.0) || !(inclination_res > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "angular resolutions must be positive");
  }
  long umin = std::numeric_limits<long>::max();
  long umax = std::numeric_limits<long>::min();
  long vmin = umin;
  long vmax = umax;
  for (const Point& p : cloud) {
    if (p.position.squaredNorm() == 0.0) continue;
    const SphericalCoords s = to_spherical(p.position);
    const long u = std::lround(s.azimuth / azimuth_res);
    const long v = std::lround(s.inclination / inclination_res);
    umin = std::min(umin, u);
    umax = std::max(umax, u);
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
  }
  if (umin > umax) fail(ErrorCode::kEmptyCloud, "cloud has no points away from the origin");
  ProjectionConfig cfg;
  cfg.azimuth_res = azimuth_res;
  cfg.inclination_res = inclination_res;
  cfg.width = static_cast<int>(umax - umin + 1);
  cfg.height = static_cast<int>(vmax - vmin + 1);
  cfg.u_offset = static_cast<int>(-umin);
  cfg.v_offset = static_cast<int>(-vmin);
  return cfg;
}

/// Row-major grid; pixel (u, v) lives at v * width + u.
struct IntensityImage {
  ProjectionConfig config;
  std::vector<double> intensity;
  std::vector<double> range;
  std::vector<std::uint8_t> observed;

  int width() const { return config.width; }
  int height() const { return config.height; }
  bool inside(int u, int v) const { return u >= 0 && v >= 0 && u < width() && v < height(); }
  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width()) +
           static_cast<std::size_t>(u);
  }
  bool is_observed(int u, int v) const { return observed[index(u, v)] != 0; }
  double intensity_at(int u, int v) const { return intensity[index(u, v)]; }
  double range_at(int u, int v) const { return range[index(u, v)]; }

  std::size_t observed_count() const {
    std::size_t n = 0;
    for (auto o : observed) n += o ? 1 : 0;
    return n;
  }

  static IntensityImage blank(const ProjectionConfig& cfg) {
    cfg.validate();
    const auto n = static_cast<std::size_t>(cfg.width) * static_cast<std::size_t>(cfg.height);
    return {cfg, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
            std::vector<std::uint8_t>(n, 0)};
  }
};

struct BinaryImage {
  ProjectionConfig config;
  std::vector<std::uint8_t> bits;

  int width() const { return config.width; }
  int height() const { return config.height; }
  bool inside(int u, int v) const { return u >= 0 && v >= 0 && u < width() && v < height(); }
  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width()) +
           static_cast<std::size_t>(u);
  }
  std::uint8_t at(int u, int v) const { return bits[index(u, v)]; }
  void set(int u, int v, std::uint8_t b) { bits[index(u, v)] = b; }

  static BinaryImage blank(const ProjectionConfig& cfg, std::uint8_t fill = 0) {
    const auto n = static_cast<std::size_t>(cfg.width) * static_cast<std::size_t>(cfg.height);
    return {cfg, std::vector<std::uint8_t>(n, fill)};
  }
};

/// Spherical projection. Points falling outside the image are dropped;
/// when several points hit one pixel the nearest range wins.
inline IntensityImage project(const PointCloud& cloud, const ProjectionConfig& cfg) {
  if (cloud.empty()) fail(ErrorCode::kEmptyCloud, "cannot project an empty cloud");
  IntensityImage img = IntensityImage::blank(cfg);
  for (const Point& p : cloud) {
    const SphericalCoords s = to_spherical(p.position);
    if (!(s.range > 0.0)) continue;
    const long u = std::lround(s.azimuth / cfg.azimuth_res) + cfg.u_offset;
    const long v = std::lround(s.inclination / cfg.inclination_res) + cfg.v_offset;
    if (u < 0 || v < 0 || u >= cfg.width || v >= cfg.height) continue;
    const std::size_t i = img.index(static_cast<int>(u), static_cast<int>(v));
    if (!img.observed[i] || s.range < img.range[i]) {
      img.observed[i] = 1;
      img.range[i] = s.range;
      img.intensity[i] = p.intensity;
    }
  }
  return img;
}

inline double pixel_azimuth(const ProjectionConfig& cfg, double u) {
  return cfg.azimuth_res * (u - cfg.u_offset);
}
inline double pixel_inclination(const ProjectionConfig& cfg, double v) {
  return cfg.inclination_res * (v - cfg.v_offset);
}

/// Inverse projection at a (possibly sub-pixel) image position: the range of
/// the nearest pixel along the ray through (u, v). Returns nullopt for
/// unobserved pixels.
inline std::optional<Eigen::Vector3d> unproject(const IntensityImage& img, double u, double v) {
  const long pu = std::lround(u);
  const long pv = std::lround(v);
  if (pu < 0 || pv < 0 || pu >= img.width() || pv >= img.height()) {
    fail(ErrorCode::kOutOfBounds, "pixel outside image");
  }
  const int iu = static_cast<int>(pu);
  const int iv = static_cast<int>(pv);
  if (!img.is_observed(iu, iv)) return std::nullopt;
  return from_spherical(pixel_azimuth(img.config, u), pixel_inclination(img.config, v),
                        img.range_at(iu, iv));
}

/// Observed pixels with intensity > threshold become 1; everything else,
/// unobserved pixels included, becomes 0.
inline BinaryImage binarize(const IntensityImage& img, double threshold) {
  if (!(threshold >= 0.0)) fail(ErrorCode::kInvalidArgument, "threshold must be non-negative");
  BinaryImage out = BinaryImage::blank(img.config);
  for (std::size_t i = 0; i < out.bits.size(); ++i) {
    out.bits[i] = (img.observed[i] && img.intensity[i] > threshold) ? 1 : 0;
  }
  return out;
}

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
  const int half = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * half + 1));
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) {
    const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + half)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

// Separable convolution with edge clamping.
inline std::vector<double> blur_grid(const std::vector<double>& src, int width, int height,
                                     double sigma) {
  if (!(sigma > 0.0)) fail(ErrorCode::kInvalidArgument, "blur sigma must be positive");
  const std::vector<double> k = gaussian_kernel(sigma);
  const int half = static_cast<int>(k.size() / 2);
  std::vector<double> tmp(src.size());
  std::vector<double> out(src.size());
  const auto at = [width](int u, int v) {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(u);
  };
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      double acc = 0.0;
      for (int i = -half; i <= half; ++i) {
        const int uu = std::clamp(u + i, 0, width - 1);
        acc += k[static_cast<std::size_t>(i + half)] * src[at(uu, v)];
      }
      tmp[at(u, v)] = acc;
    }
  }
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      double acc = 0.0;
      for (int i = -half; i <= half; ++i) {
        const int vv = std::clamp(v + i, 0, height - 1);
        acc += k[static_cast<std::size_t>(i + half)] * tmp[at(u, vv)];
      }
      out[at(u, v)] = acc;
    }
  }
  return out;
}

}  // namespace detail

/// Blurs the intensity layer; range and mask are left untouched.
inline IntensityImage gaussian_blur(const IntensityImage& img, double sigma) {
  IntensityImage out = img;
  out.intensity = detail::blur_grid(img.intensity, img.width(), img.height(), sigma);
  return out;
}

/// Blurs the 0/1 layer and re-thresholds it at 0.5, which keeps the result
/// binary. Isolated speckle smaller than the kernel is removed.
inline BinaryImage gaussian_blur(const BinaryImage& img, double sigma) {
  std::vector<double> grid(img.bits.begin(), img.bits.end());
  grid = detail::blur_grid(grid, img.width(), img.height(), sigma);
  BinaryImage out = img;
  for (std::size_t i = 0; i < grid.size(); ++i) out.bits[i] = grid[i] > 0.5 ? 1 : 0;
  return out;
}

namespace detail {
template <typename T>
void flip_rows(std::vector<T>& data, int width, int height) {
  for (int v = 0; v < height; ++v) {
    auto row = data.begin() + static_cast<std::ptrdiff_t>(v) * width;
    std::reverse(row, row + width);
  }
}
}  // namespace detail

inline IntensityImage flip_horizontal(const IntensityImage& img) {
  IntensityImage out = img;
  detail::flip_rows(out.intensity, img.width(), img.height());
  detail::flip_rows(out.range, img.width(), img.height());
  detail::flip_rows(out.observed, img.width(), img.height());
  return out;
}

inline BinaryImage flip_horizontal(const BinaryImage& img) {
  BinaryImage out = img;
  detail::flip_rows(out.bits, img.width(), img.height());
  return out;
}

// PGM / grid export. Rows are written from the highest inclination down and
// columns from the highest azimuth, so the picture matches the sensor's view.

inline void write_pgm(const std::filesystem::path& path, const IntensityImage& img) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::kIo, "cannot open " + path.string());
  os << "P2\n" << img.width() << ' ' << img.height() << "\n255\n";
  for (int v = img.height() - 1; v >= 0; --v) {
    for (int u = img.width() - 1; u >= 0; --u) {
      const double val = img.is_observed(u, v) ? std::clamp(img.intensity_at(u, v), 0.0, 255.0) : 0.0;
      os << static_cast<int>(std::lround(val)) << (u == 0 ? '\n' : ' ');
    }
  }
}

inline void write_pgm(const std::filesystem::path& path, const BinaryImage& img) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::kIo, "cannot open " + path.string());
  os << "P2\n" << img.width() << ' ' << img.height() << "\n255\n";
  for (int v = img.height() - 1; v >= 0; --v) {
    for (int u = img.width() - 1; u >= 0; --u) {
      os << (img.at(u, v) ? 255 : 0) << (u == 0 ? '\n' : ' ');
    }
  }
}

/// Range layer as a whitespace float grid; unobserved pixels are written as 0.
inline void write_range_grid(const std::filesystem::path& path, const IntensityImage& img) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::kIo, "cannot open " + path.string());
  os << std::setprecision(9);
  for (int v = img.height() - 1; v >= 0; --v) {
    for (int u = img.width() - 1; u >= 0; --u) {
      os << (img.is_observed(u, v) ? img.range_at(u, v) : 0.0) << (u == 0 ? '\n' : ' ');
    }
  }
}

}  // namespace fidreg
