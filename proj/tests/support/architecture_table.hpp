#pragma once

// Published per-layer output shapes for a (93, 1) input, transcribed by hand.
// Flat outputs are written as a bare number.

#include <string>
#include <utility>
#include <vector>

namespace ref {

inline const std::vector<std::pair<std::string, std::vector<std::string>>>& published_shapes() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> table{
      {"A1", {"(74, 32)", "(37, 32)", "(37, 16)", "(37, 16)", "592"}},
      {"A2", {"(91, 32)", "(45, 32)", "(43, 32)", "(21, 32)", "(21, 16)", "336"}},
      {"A3", {"(89, 32)", "(44, 32)", "(40, 32)", "(20, 32)", "(20, 16)", "320"}},
      {"A4", {"(89, 32)", "(85, 32)", "(42, 32)", "(38, 32)", "(34, 32)", "(17, 32)", "(17, 16)", "272"}},
      {"A5", {"(89, 32)", "(44, 32)", "(40, 32)", "(20, 32)", "(20, 16)", "(20, 16)", "320"}},
      {"A6", {"(82, 32)", "(41, 32)", "(30, 32)", "(15, 32)", "(4, 32)", "(2, 32)", "64"}},
  };
  return table;
}

}  // namespace ref
