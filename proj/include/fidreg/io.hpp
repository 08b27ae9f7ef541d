#pragma once

// File formats: PLY point clouds (ASCII written; ASCII and binary little
// endian read), whitespace XYZI text, pose lists and observation JSON lines.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fidreg/cloud.hpp"
#include "fidreg/error.hpp"
#include "fidreg/geom.hpp"
#include "fidreg/marker.hpp"

namespace fidreg {

inline void write_ply(const std::filesystem::path& path, const PointCloud& cloud,
                      const std::string& comment = "generated by fidreg") {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::kIo, "cannot write " + path.string());
  os << "ply\nformat ascii 1.0\n";
  if (!comment.empty()) os << "comment " << comment << "\n";
  os << "element vertex " << cloud.size() << "\n"
     << "property double x\nproperty double y\nproperty double z\nproperty double intensity\n"
     << "end_header\n";
  os << std::setprecision(17);
  for (const Point& p : cloud) {
    os << p.position.x() << ' ' << p.position.y() << ' ' << p.position.z() << ' ' << p.intensity
       << '\n';
  }
  if (!os) fail(ErrorCode::kIo, "write failed for " + path.string());
}

namespace detail {

struct PlyProperty {
  std::string name;
  std::string type;
};

inline std::size_t ply_type_size(const std::string& type) {
  if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
  if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
  if (type == "int" || type == "uint" || type == "int32" || type == "uint32" || type == "float" ||
      type == "float32") {
    return 4;
  }
  if (type == "double" || type == "float64") return 8;
  fail(ErrorCode::kParse, "unsupported PLY property type '" + type + "'");
}

template <typename T>
double read_le(const char* bytes) {
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return static_cast<double>(value);
}

inline double ply_binary_value(const std::string& type, const char* bytes) {
  if (type == "char" || type == "int8") return read_le<std::int8_t>(bytes);
  if (type == "uchar" || type == "uint8") return read_le<std::uint8_t>(bytes);
  if (type == "short" || type == "int16") return read_le<std::int16_t>(bytes);
  if (type == "ushort" || type == "uint16") return read_le<std::uint16_t>(bytes);
  if (type == "int" || type == "int32") return read_le<std::int32_t>(bytes);
  if (type == "uint" || type == "uint32") return read_le<std::uint32_t>(bytes);
  if (type == "float" || type == "float32") return read_le<float>(bytes);
  return read_le<double>(bytes);
}

}  // namespace detail

/// Vertices with x, y, z and an optional intensity property (0 when absent).
/// Other vertex properties are skipped; other elements must follow the
/// vertices.
inline PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  if (line.rfind("ply", 0) != 0) fail(ErrorCode::kParse, path.string() + " is not a PLY file");

  std::string format;
  std::size_t vertex_count = 0;
  bool in_vertex = false;
  bool seen_vertex = false;
  std::vector<detail::PlyProperty> props;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "end_header") break;
    if (key == "format") {
      ls >> format;
    } else if (key == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      in_vertex = name == "vertex";
      if (in_vertex) {
        vertex_count = count;
        seen_vertex = true;
      } else if (!seen_vertex) {
        fail(ErrorCode::kParse, "PLY elements before the vertices are not supported");
      }
    } else if (key == "property" && in_vertex) {
      detail::PlyProperty p;
      ls >> p.type;
      if (p.type == "list") fail(ErrorCode::kParse, "list properties on vertices are not supported");
      ls >> p.name;
      props.push_back(p);
    }
  }
  if (!seen_vertex) fail(ErrorCode::kParse, "PLY file has no vertex element");
  int ix = -1;
  int iy = -1;
  int iz = -1;
  int ii = -1;
  for (std::size_t k = 0; k < props.size(); ++k) {
    const std::string& n = props[k].name;
    if (n == "x") ix = static_cast<int>(k);
    if (n == "y") iy = static_cast<int>(k);
    if (n == "z") iz = static_cast<int>(k);
    if (n == "intensity" || n == "scalar_intensity" || n == "reflectance") ii = static_cast<int>(k);
  }
  if (ix < 0 || iy < 0 || iz < 0) fail(ErrorCode::kParse, "PLY vertices need x, y and z");

  PointCloud cloud;
  cloud.points.reserve(vertex_count);
  std::vector<double> values(props.size());
  const auto make_point = [&] {
    return Point{{values[ix], values[iy], values[iz]}, ii >= 0 ? values[ii] : 0.0};
  };
  if (format == "ascii") {
    for (std::size_t n = 0; n < vertex_count; ++n) {
      for (double& v : values) {
        if (!(is >> v)) fail(ErrorCode::kParse, "truncated PLY vertex data");
      }
      cloud.push_back(make_point());
    }
  } else if (format == "binary_little_endian") {
    if constexpr (std::endian::native != std::endian::little) {
      fail(ErrorCode::kParse, "binary PLY needs a little-endian host");
    }
    std::vector<std::size_t> offsets;
    std::size_t stride = 0;
    for (const auto& p : props) {
      offsets.push_back(stride);
      stride += detail::ply_type_size(p.type);
    }
    std::vector<char> record(stride);
    for (std::size_t n = 0; n < vertex_count; ++n) {
      if (!is.read(record.data(), static_cast<std::streamsize>(stride))) {
        fail(ErrorCode::kParse, "truncated PLY vertex data");
      }
      for (std::size_t k = 0; k < props.size(); ++k) {
        values[k] = detail::ply_binary_value(props[k].type, record.data() + offsets[k]);
      }
      cloud.push_back(make_point());
    }
  } else {
    fail(ErrorCode::kParse, "unsupported PLY format '" + format + "'");
  }
  return cloud;
}

/// Whitespace separated "x y z [intensity]" rows; '#' starts a comment.
inline PointCloud read_xyzi(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::kIo, "cannot open " + path.string());
  PointCloud cloud;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<double> v;
    double x = 0.0;
    while (ls >> x) v.push_back(x);
    if (!ls.eof()) fail(ErrorCode::kParse, path.string() + ":" + std::to_string(lineno) + ": bad number");
    if (v.empty()) continue;
    if (v.size() != 3 && v.size() != 4) {
      fail(ErrorCode::kParse, path.string() + ":" + std::to_string(lineno) + ": expected 3 or 4 columns");
    }
    cloud.push_back({{v[0], v[1], v[2]}, v.size() == 4 ? v[3] : 0.0});
  }
  return cloud;
}

/// PLY by extension, XYZI text otherwise.
inline PointCloud read_cloud(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".ply" ? read_ply(path) : read_xyzi(path);
}

/// One block per scan: a "# scan i" line and four rows of the 4x4 matrix,
/// blocks separated by a blank line. Scans without a pose get only the
/// header line with "unreachable".
inline void write_poses(const std::filesystem::path& path, const std::vector<std::optional<Pose>>& poses) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::kIo, "cannot write " + path.string());
  os << std::setprecision(17);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (i > 0) os << '\n';
    if (!poses[i]) {
      os << "# scan " << i << " unreachable\n";
      continue;
    }
    os << "# scan " << i << '\n';
    const Eigen::Matrix4d m = poses[i]->matrix();
    for (int r = 0; r < 4; ++r) {
      os << m(r, 0) << ' ' << m(r, 1) << ' ' << m(r, 2) << ' ' << m(r, 3) << '\n';
    }
  }
  if (!os) fail(ErrorCode::kIo, "write failed for " + path.string());
}

/// Reads write_poses output; bare 4-row blocks without headers are also
/// accepted.
inline std::vector<std::optional<Pose>> read_poses(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::optional<Pose>> out;
  std::vector<double> rows;
  const auto flush = [&] {
    if (rows.empty()) return;
    if (rows.size() != 16) fail(ErrorCode::kParse, path.string() + ": pose block needs 16 numbers");
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) m(r, c) = rows[static_cast<std::size_t>(4 * r + c)];
    }
    out.emplace_back(Pose::from_matrix(m));
    rows.clear();
  };
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind('#', 0) == 0) {
      flush();
      if (line.find("unreachable") != std::string::npos) out.emplace_back(std::nullopt);
      continue;
    }
    std::istringstream ls(line);
    double v = 0.0;
    bool any = false;
    while (ls >> v) {
      rows.push_back(v);
      any = true;
    }
    if (!ls.eof()) fail(ErrorCode::kParse, path.string() + ": bad number in pose file");
    if (!any || rows.size() == 16) flush();
  }
  flush();
  return out;
}

inline void write_observations(const std::filesystem::path& path,
                               const std::vector<MarkerObservation>& observations) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& o : observations) os << to_json(o).dump() << '\n';
  if (!os) fail(ErrorCode::kIo, "write failed for " + path.string());
}

inline std::vector<MarkerObservation> read_observations(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<MarkerObservation> out;
  std::string line;
  try {
    while (std::getline(is, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      out.push_back(observation_from_json(nlohmann::json::parse(line)));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, path.string() + ": " + e.what());
  }
  return out;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::kIo, "cannot write " + path.string());
  os << j.dump(2) << '\n';
  if (!os) fail(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace fidreg
