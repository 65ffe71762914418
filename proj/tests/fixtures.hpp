#pragma once

// Small hand-built streams shared by the unit and acceptance tests.

#include <vector>

#include "streamad/core.hpp"

namespace fixtures {

inline std::vector<streamad::Sample> make_stream(const std::vector<std::vector<double>>& pts,
                                                 const std::vector<int>& anomalies = {}) {
  std::vector<streamad::Sample> out;
  for (std::size_t i = 0; i < pts.size(); ++i) out.push_back({i, pts[i], false});
  for (int a : anomalies) out[static_cast<std::size_t>(a)].label = true;
  return out;
}

// Twelve samples p1..p12 on two features, R = 2, K = 3, w = 7, s = 5.
// Window 1 holds p1..p7, window 2 holds p6..p12.
inline std::vector<streamad::Sample> twelve_points() {
  return make_stream({{0.3, 1.0},
                      {0.4, 1.4},
                      {1.0, 1.0},
                      {2.5, 1.0},
                      {3.4, 1.0},
                      {1.0, 1.0},
                      {5.0, 1.0},
                      {6.0, 1.3},
                      {6.2, 0.6},
                      {7.9, 1.0},
                      {5.7, 1.0},
                      {9.5, 3.0}});
}

// Twelve samples for the grid-density example: cell diagonal 2, two nearest
// kernel centres, skip threshold 0.5, same sliding windows as above.
inline std::vector<streamad::Sample> stare_points() {
  return make_stream({{3.4, 5.1},
                      {3.7, 0.4},
                      {3.6, 1.2},
                      {6.6, 4.7},
                      {2.1, 2.6},
                      {3.8, 4.8},
                      {6.4, 4.7},
                      {1.9, 5.0},
                      {1.7, 5.1},
                      {0.8, 3.6},
                      {7.9, 7.7},
                      {3.6, 4.9}});
}

inline constexpr double kRadius = 2.0;
inline constexpr std::size_t kNeighbors = 3;
inline const streamad::WindowSpec kSpec{7, 5};

// p-number (1-based) of each element of a window.
inline std::size_t pnum(const streamad::Sample& s) { return s.ordinal + 1; }

}  // namespace fixtures
