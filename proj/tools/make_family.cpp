// Regenerates the built-in tag family: writes the family text file and the
// embedded code list included by tag_family.hpp.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fidreg/tag_family.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a mirror-free square tag family"};
  std::size_t count = 50;
  int min_distance = 3;
  std::uint64_t seed = 42;
  std::string out_txt = "tag4x4_50.txt";
  std::string out_inc;
  app.add_option("--count", count, "number of codes");
  app.add_option("--min-distance", min_distance, "minimum rotation-minimized Hamming distance");
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--out", out_txt, "family text file");
  app.add_option("--inc", out_inc, "optional C++ initializer list output");
  CLI11_PARSE(app, argc, argv);

  try {
    const fidreg::TagFamily family = fidreg::generate_family(count, min_distance, seed);
    std::ofstream txt(out_txt);
    fidreg::write_family(txt, family,
                         "4x4 tag family, " + std::to_string(count) + " codes, min distance " +
                             std::to_string(min_distance) + ", seed " + std::to_string(seed));
    if (!out_inc.empty()) {
      std::ofstream inc(out_inc);
      for (fidreg::TagCode c : family.codes) inc << "0x" << std::hex << c << std::dec << ",\n";
    }
  } catch (const fidreg::Error& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }
  return 0;
}
