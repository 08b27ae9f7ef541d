#pragma once

// Square tag family: g x g data bits surrounded by a black border. Codes are
// stored as bit masks in image order (bit j * g + i is data cell column i,
// row j, as a front-facing sensor images the tag). Bit value 1 is white.

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fidreg/error.hpp"

namespace fidreg {

using TagCode = std::uint64_t;

struct TagFamily {
  int grid = 4;
  int border = 1;
  std::vector<TagCode> codes;
  int min_distance = 3;

  int cells_per_side() const { return grid + 2 * border; }
  bool bit(TagCode code, int i, int j) const { return (code >> (j * grid + i)) & 1u; }
};

/// Rotation of the data grid by a quarter turn: cell (i, j) moves to
/// (g - 1 - j, i).
inline TagCode rotate_code(TagCode code, int grid) {
  TagCode out = 0;
  for (int j = 0; j < grid; ++j) {
    for (int i = 0; i < grid; ++i) {
      if ((code >> (j * grid + i)) & 1u) {
        const int ri = grid - 1 - j;
        const int rj = i;
        out |= TagCode{1} << (rj * grid + ri);
      }
    }
  }
  return out;
}

inline TagCode rotate_code(TagCode code, int grid, int quarter_turns) {
  for (int r = 0; r < ((quarter_turns % 4) + 4) % 4; ++r) code = rotate_code(code, grid);
  return code;
}

/// Horizontal mirror (column i -> g - 1 - i), i.e. the tag seen from behind.
inline TagCode mirror_code(TagCode code, int grid) {
  TagCode out = 0;
  for (int j = 0; j < grid; ++j) {
    for (int i = 0; i < grid; ++i) {
      if ((code >> (j * grid + i)) & 1u) out |= TagCode{1} << (j * grid + (grid - 1 - i));
    }
  }
  return out;
}

inline int hamming(TagCode a, TagCode b) { return std::popcount(a ^ b); }

/// Minimum Hamming distance between `a` under any rotation and `b`.
inline int rotation_min_distance(TagCode a, TagCode b, int grid) {
  int best = std::numeric_limits<int>::max();
  for (int r = 0; r < 4; ++r) {
    best = std::min(best, hamming(rotate_code(a, grid, r), b));
  }
  return best;
}

namespace detail {

inline bool acceptable_code(TagCode c, const std::vector<TagCode>& accepted, int grid,
                            int min_distance) {
  const TagCode full = (grid * grid >= 64) ? ~TagCode{0} : ((TagCode{1} << (grid * grid)) - 1);
  // Solid black / solid white squares must never decode.
  if (hamming(c, 0) < min_distance || hamming(c, full) < min_distance) return false;
  for (int r = 1; r < 4; ++r) {
    if (hamming(rotate_code(c, grid, r), c) < min_distance) return false;
  }
  const TagCode m = mirror_code(c, grid);
  if (rotation_min_distance(m, c, grid) < min_distance) return false;
  for (TagCode other : accepted) {
    if (rotation_min_distance(c, other, grid) < min_distance) return false;
    if (rotation_min_distance(m, other, grid) < min_distance) return false;
    if (rotation_min_distance(mirror_code(other, grid), c, grid) < min_distance) return false;
  }
  return true;
}

}  // namespace detail

/// Greedy random search for a rotation-distinct, mirror-free family.
inline TagFamily generate_family(std::size_t count = 50, int min_distance = 3,
                                 std::uint64_t seed = 42, int grid = 4) {
  if (grid < 2 || grid > 8) fail(ErrorCode::kInvalidArgument, "grid must be in [2, 8]");
  TagFamily family;
  family.grid = grid;
  family.min_distance = min_distance;
  std::mt19937_64 rng(seed);
  const int bits = grid * grid;
  const TagCode mask = bits >= 64 ? ~TagCode{0} : ((TagCode{1} << bits) - 1);
  const std::size_t max_tries = 1'000'000;
  for (std::size_t tries = 0; tries < max_tries && family.codes.size() < count; ++tries) {
    const TagCode c = rng() & mask;
    if (detail::acceptable_code(c, family.codes, grid, min_distance)) family.codes.push_back(c);
  }
  if (family.codes.size() < count) {
    fail(ErrorCode::kInvalidArgument, "could not find enough codes for the requested family");
  }
  return family;
}

/// 4x4 family with 50 codes, minimum rotation-minimized distance 3, generated
/// by generate_family(50, 3, 42) and frozen here (also data/tag4x4_50.txt).
inline const TagFamily& builtin_family() {
  static const TagFamily family = [] {
    TagFamily f;
    f.grid = 4;
    f.border = 1;
    f.min_distance = 3;
    f.codes = {
#include "fidreg/tag4x4_50.inc"
    };
    return f;
  }();
  return family;
}

inline std::string code_to_string(TagCode code, int grid) {
  std::string s;
  for (int k = 0; k < grid * grid; ++k) s.push_back(((code >> k) & 1u) ? '1' : '0');
  return s;
}

/// Family file: one binary code string per line (character k is bit k), '#'
/// starts a comment. All codes must have the same square length.
inline TagFamily parse_family(std::istream& is) {
  TagFamily family;
  family.codes.clear();
  std::string line;
  int grid = 0;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::string token;
    std::istringstream ls(line);
    if (!(ls >> token)) continue;
    int g = 0;
    while (g * g < static_cast<int>(token.size())) ++g;
    if (g * g != static_cast<int>(token.size()) || g < 2 || g > 8) {
      fail(ErrorCode::kParse, "line " + std::to_string(lineno) + ": code length is not a square");
    }
    if (grid != 0 && g != grid) {
      fail(ErrorCode::kParse, "line " + std::to_string(lineno) + ": inconsistent code length");
    }
    grid = g;
    TagCode code = 0;
    for (std::size_t k = 0; k < token.size(); ++k) {
      if (token[k] == '1') {
        code |= TagCode{1} << k;
      } else if (token[k] != '0') {
        fail(ErrorCode::kParse, "line " + std::to_string(lineno) + ": invalid bit character");
      }
    }
    family.codes.push_back(code);
  }
  if (family.codes.empty()) fail(ErrorCode::kParse, "family file has no codes");
  family.grid = grid;
  int dmin = std::numeric_limits<int>::max();
  for (std::size_t a = 0; a < family.codes.size(); ++a) {
    for (int r = 1; r < 4; ++r) {
      dmin = std::min(dmin, hamming(rotate_code(family.codes[a], grid, r), family.codes[a]));
    }
    for (std::size_t b = a + 1; b < family.codes.size(); ++b) {
      dmin = std::min(dmin, rotation_min_distance(family.codes[a], family.codes[b], grid));
    }
  }
  family.min_distance = dmin;
  return family;
}

inline TagFamily load_family(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::kIo, "cannot open family file " + path.string());
  return parse_family(is);
}

inline void write_family(std::ostream& os, const TagFamily& family, const std::string& comment) {
  if (!comment.empty()) os << "# " << comment << '\n';
  for (TagCode c : family.codes) os << code_to_string(c, family.grid) << '\n';
}

struct DecodeResult {
  int id = -1;
  int rotation = 0;  // observed == rotate_code(code, grid, rotation)
  int distance = 0;
  int margin = 0;    // distance to the runner-up candidate minus `distance`
};

/// Matches observed data bits against every code under the four rotations.
/// Accepts a unique best candidate within `max_errors` bit errors.
inline std::optional<DecodeResult> decode(const TagFamily& family, TagCode observed,
                                          int max_errors = 1) {
  DecodeResult best;
  best.distance = std::numeric_limits<int>::max();
  int runner_up = std::numeric_limits<int>::max();
  for (std::size_t id = 0; id < family.codes.size(); ++id) {
    for (int r = 0; r < 4; ++r) {
      const int d = hamming(rotate_code(family.codes[id], family.grid, r), observed);
      if (d < best.distance) {
        runner_up = best.distance;
        best = {static_cast<int>(id), r, d, 0};
      } else if (d < runner_up) {
        runner_up = d;
      }
    }
  }
  if (best.id < 0 || best.distance > max_errors || runner_up <= best.distance) return std::nullopt;
  best.margin = runner_up - best.distance;
  return best;
}

}  // namespace fidreg
