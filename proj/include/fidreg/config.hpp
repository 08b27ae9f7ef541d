#pragma once

// Key = value settings files. "[section]" lines prefix the following keys
// with "section."; '#' starts a comment; string values may be quoted.
//
//   seed = 7
//   [detect]
//   azimuth_res_deg = 0.2
//   bisector = "as_printed"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fidreg/error.hpp"
#include "fidreg/factor_graph.hpp"
#include "fidreg/map_locate.hpp"
#include "fidreg/marker.hpp"
#include "fidreg/registration.hpp"

namespace fidreg {

class Config {
 public:
  static Config parse(std::istream& is, const std::string& source = "config") {
    Config cfg;
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    const auto where = [&] { return source + ":" + std::to_string(lineno) + ": "; };
    while (std::getline(is, line)) {
      ++lineno;
      line = strip_comment(line);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') fail(ErrorCode::kParse, where() + "unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail(ErrorCode::kParse, where() + "expected key = value");
      const std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (key.empty()) fail(ErrorCode::kParse, where() + "empty key");
      if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
        value = value.substr(1, value.size() - 2);
      }
      cfg.set(section.empty() ? key : section + "." + key, value);
    }
    return cfg;
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) fail(ErrorCode::kIo, "cannot open config " + path.string());
    return parse(is, path.string());
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool contains(const std::string& key) const { return values_.count(key) != 0; }

  /// Overwrites `out` when the key is present; the key then counts as used.
  template <typename T>
  void read(const std::string& key, T& out) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return;
    used_.insert(key);
    out = convert<T>(key, it->second);
  }

  /// Keys never read; usually misspellings.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
      if (!used_.count(k)) out.push_back(k);
    }
    return out;
  }

  void reject_unused() const {
    const auto keys = unused();
    if (keys.empty()) return;
    std::string msg = "unknown config key(s):";
    for (const auto& k : keys) msg += " " + k;
    fail(ErrorCode::kParse, msg);
  }

 private:
  static std::string strip_comment(const std::string& s) {
    char quote = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (quote) {
        if (s[i] == quote) quote = 0;
      } else if (s[i] == '"' || s[i] == '\'') {
        quote = s[i];
      } else if (s[i] == '#') {
        return s.substr(0, i);
      }
    }
    return s;
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  template <typename T>
  static T convert(const std::string& key, const std::string& text) {
    const auto bad = [&]() -> T {
      fail(ErrorCode::kParse, "config key " + key + ": cannot parse '" + text + "'");
    };
    if constexpr (std::is_same_v<T, std::string>) {
      return text;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
      if (text == "false" || text == "0" || text == "no" || text == "off") return false;
      return bad();
    } else if constexpr (std::is_floating_point_v<T>) {
      std::istringstream is(text);
      T v{};
      if (!(is >> v) || !(is >> std::ws).eof()) return bad();
      return v;
    } else {
      T v{};
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || ptr != text.data() + text.size()) return bad();
      return v;
    }
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

namespace detail {

inline void read_degrees(const Config& c, const std::string& key, double& radians) {
  double deg = radians * 180.0 / std::numbers::pi;
  c.read(key, deg);
  radians = deg * std::numbers::pi / 180.0;
}

inline void read_weighting(const Config& c, const std::string& key, BisectorWeighting& w) {
  std::string name = w == BisectorWeighting::kGeometric ? "geometric" : "as_printed";
  c.read(key, name);
  if (name == "geometric") {
    w = BisectorWeighting::kGeometric;
  } else if (name == "as_printed") {
    w = BisectorWeighting::kAsPrinted;
  } else {
    fail(ErrorCode::kParse, "config key " + key + ": expected geometric or as_printed");
  }
}

inline void read_detector(const Config& c, const std::string& prefix, DetectorOptions& d) {
  c.read(prefix + "min_side_px", d.min_side_px);
  c.read(prefix + "min_quad_fill", d.min_quad_fill);
  c.read(prefix + "border_fraction", d.border_fraction);
  c.read(prefix + "max_bit_errors", d.max_bit_errors);
}

}  // namespace detail

/// Keys under [detect].
inline void apply(const Config& c, ScanDetectionConfig& d) {
  detail::read_degrees(c, "detect.azimuth_res_deg", d.azimuth_res);
  detail::read_degrees(c, "detect.inclination_res_deg", d.inclination_res);
  c.read("detect.scope", d.scope);
  c.read("detect.step", d.step);
  c.read("detect.blur_sigma", d.preprocess.blur_sigma);
  c.read("detect.corner_window", d.corner_window);
  c.read("detect.side_tolerance", d.side_tolerance);
  detail::read_weighting(c, "detect.bisector", d.weighting);
  detail::read_detector(c, "detect.", d.detector);
}

/// Keys under [map].
inline void apply(const Config& c, MapLocateConfig& m) {
  c.read("map.gradient_k", m.gradient_k);
  c.read("map.gradient_threshold", m.gradient_threshold);
  c.read("map.cluster_tolerance", m.cluster_tolerance);
  c.read("map.min_cluster_size", m.min_cluster_size);
  c.read("map.max_cluster_size", m.max_cluster_size);
  c.read("map.buffer_factor", m.buffer_factor);
  c.read("map.height_sigma", m.criteria.height_sigma);
  c.read("map.extent_margin", m.criteria.extent_margin);
  c.read("map.resolution", m.resolution);
  c.read("map.scope", m.scope);
  c.read("map.step", m.step);
  c.read("map.blur_sigma", m.preprocess.blur_sigma);
  c.read("map.corner_window", m.corner_window);
  c.read("map.side_tolerance", m.side_tolerance);
  detail::read_weighting(c, "map.bisector", m.weighting);
  detail::read_detector(c, "map.", m.detector);
}

/// Keys under [graph].
inline void apply(const Config& c, FactorGraphOptions& g) {
  c.read("graph.sigma_rot", g.sigma_rot);
  c.read("graph.sigma_trans", g.sigma_trans);
  c.read("graph.sigma_corner", g.sigma_corner);
  c.read("graph.sigma_prior", g.sigma_prior);
  c.read("graph.sigma_rel_rot", g.sigma_rel_rot);
  c.read("graph.sigma_rel_trans", g.sigma_rel_trans);
  c.read("graph.relative_factors", g.relative_factors);
  c.read("graph.numeric_pose_jacobians", g.numeric_pose_jacobians);
  c.read("graph.max_iterations", g.max_iterations);
  c.read("graph.initial_damping", g.initial_damping);
  c.read("graph.relative_decrease_tol", g.relative_decrease_tol);
  c.read("graph.step_tol", g.step_tol);
}

/// Keys under [register] plus the [detect] and [graph] sections.
inline void apply(const Config& c, RegistrationConfig& r) {
  apply(c, r.detection);
  apply(c, r.graph);
  c.read("register.anchor", r.anchor);
  c.read("register.strict", r.strict);
  c.read("register.use_first_graph", r.use_first_graph);
  c.read("register.use_second_graph", r.use_second_graph);
  c.read("register.threads", r.threads);
}

}  // namespace fidreg
